//! Seeded synthetic inlier/test data: inliers and test inliers from
//! `N(0, I)`, planted outliers from `N(mu, I)`.
//!
//! Every dataset role draws from its own ChaCha8 stream of the same seed,
//! so changing one count never perturbs another role's values. Normal
//! variates come from the ziggurat sampler of `rand_distr`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};

const STREAM_INLIERS: u64 = 1;
const STREAM_TEST_INLIERS: u64 = 2;
const STREAM_TEST_OUTLIERS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub d: usize,
    pub n_inlier: usize,
    pub n_test_inlier: usize,
    pub n_test_outlier: usize,
    /// Outlier mean; `None` means `[3, -2, 0, ..., 0]`.
    pub mu: Option<Vec<f64>>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(d: usize, seed: u64) -> Self {
        SynthSpec {
            d,
            n_inlier: 200,
            n_test_inlier: 100,
            n_test_outlier: 10,
            mu: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidSpec(format!("d must be >= 2, got {}", self.d)));
        }
        if self.n_inlier < 1 || self.n_test_inlier < 1 || self.n_test_outlier < 1 {
            return Err(Error::InvalidSpec("all sample counts must be >= 1".into()));
        }
        if let Some(mu) = &self.mu {
            if mu.len() != self.d || mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("mu must hold {} finite values", self.d)));
            }
        }
        Ok(())
    }

    pub fn mean_shift(&self) -> Vec<f64> {
        self.mu.clone().unwrap_or_else(|| {
            let mut mu = vec![0.0; self.d];
            mu[0] = 3.0;
            mu[1] = -2.0;
            mu
        })
    }
}

/// One independent seed per `(seed, dim, trial)`, so any trial can be
/// regenerated on its own.
pub fn trial_seed(seed: u64, dim: usize, trial: usize) -> u64 {
    // splitmix64 finalizer over the packed key
    let mut z = seed
        ^ (dim as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (trial as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal_block(seed: u64, stream: u64, d: usize, m: usize, shift: &[f64]) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // column-major fill: sample j is generated whole before sample j + 1
    let mut out = DMatrix::zeros(d, m);
    for j in 0..m {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[(k, j)] = z + shift[k];
        }
    }
    out
}

/// Returns `(inliers, test, test_labels)`; the test set lists its inliers
/// first, then the planted outliers.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Dataset, Vec<Label>)> {
    spec.validate()?;
    let d = spec.d;
    let zero = vec![0.0; d];
    let inliers = normal_block(spec.seed, STREAM_INLIERS, d, spec.n_inlier, &zero);
    let test_in = normal_block(spec.seed, STREAM_TEST_INLIERS, d, spec.n_test_inlier, &zero);
    let test_out = normal_block(spec.seed, STREAM_TEST_OUTLIERS, d, spec.n_test_outlier, &spec.mean_shift());
    let n_test = spec.n_test_inlier + spec.n_test_outlier;
    let test = DMatrix::from_fn(d, n_test, |k, j| {
        if j < spec.n_test_inlier {
            test_in[(k, j)]
        } else {
            test_out[(k, j - spec.n_test_inlier)]
        }
    });
    let mut labels = vec![Label::Inlier; spec.n_test_inlier];
    labels.resize(n_test, Label::Outlier);
    Ok((
        Dataset::from_matrix(inliers, "in")?,
        Dataset::from_matrix(test, "te")?,
        labels,
    ))
}
