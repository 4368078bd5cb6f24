//! Inlier-based outlier detection by localized logistic regression.
//!
//! Given a clean reference sample (inliers) and a test sample, the
//! inlier-over-test density ratio is estimated with one logistic coefficient
//! vector per sample. Test points with a small ratio are flagged as outliers,
//! and the sparse coefficient column of each flagged point names the
//! features responsible.
//!
//! The crate also carries the comparison detectors (KDE, LOF, one-class SVM,
//! l1-logistic regression, KLIEP, uLSIF/RuLSIF), AUC evaluation and a
//! seeded benchmark harness.

pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod llr;
pub mod optim;
pub mod scores;
pub mod synth;

pub use error::{Error, Result};
