use std::path::{Path, PathBuf};

use ratio_scope::bench::{BaselineParams, Method};
use ratio_scope::scores::Selection;
use serde::Deserialize;

/// JSON mirror of the command-line flags. Every key is optional; a flag given
/// on the command line wins over the file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub k: Option<usize>,
    pub sigma2: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_outer: Option<usize>,
    pub tol: Option<f64>,
    pub inner_max_iters: Option<usize>,
    pub inner_tol: Option<f64>,
    pub no_standardize: Option<bool>,
    pub bias: Option<bool>,

    pub d: Option<usize>,
    pub n_inlier: Option<usize>,
    pub n_test_inlier: Option<usize>,
    pub n_outlier: Option<usize>,
    pub seed: Option<u64>,

    pub methods: Option<Vec<Method>>,
    pub trials: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub threads: Option<usize>,
    pub paired: Option<bool>,
    pub dataset: Option<PathBuf>,
    pub baselines: Option<BaselineParams>,

    pub tau: Option<f64>,
    pub explain_top: Option<usize>,
    pub select: Option<Selection>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> ratio_scope::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            ratio_scope::Error::InvalidData(format!("{}: {e}", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
