use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FitResult, LlrHyperparams, WeightMatrix};
use crate::data::{Label, PooledDataset, StandardizationStats};
use crate::error::{Error, Result};

/// Serialized fitted model.
///
/// Matrices are stored row-major as arrays of `d` rows. The pooled (already
/// standardized) samples travel with the model because every column of the
/// weight matrix belongs to one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlrModel {
    pub feature_names: Vec<String>,
    pub n_inlier: usize,
    pub n_test: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub k_neighbors: usize,
    pub sigma2: f64,
    pub epsilon: f64,
    pub weights: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
    pub standardizer: StandardizationStats,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default)]
    pub intercept: bool,
    pub sample_ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<Vec<Label>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: every row must have {ncols} entries"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |k, j| rows[k][j]))
}

impl LlrModel {
    pub fn from_fit(
        fit: &FitResult,
        pooled: &PooledDataset,
        hp: &LlrHyperparams,
        standardizer: StandardizationStats,
        intercept: bool,
        test_labels: Option<Vec<Label>>,
    ) -> Self {
        LlrModel {
            feature_names: pooled.feature_names().to_vec(),
            n_inlier: pooled.n_inlier(),
            n_test: pooled.n_test(),
            lambda1: hp.lambda1,
            lambda2: hp.lambda2,
            k_neighbors: fit.graph.k_neighbors(),
            sigma2: fit.graph.sigma2(),
            epsilon: hp.epsilon,
            weights: to_rows(fit.weights.as_matrix()),
            objective_trace: fit.objective_trace.clone(),
            standardizer,
            converged: fit.converged,
            iterations: fit.iterations,
            intercept,
            sample_ids: pooled.sample_ids().to_vec(),
            features: to_rows(pooled.features()),
            test_labels,
        }
    }

    pub fn weight_matrix(&self) -> Result<WeightMatrix> {
        let n = self.n_inlier + self.n_test;
        let w = from_rows(&self.weights, n, "weights")?;
        if w.nrows() != self.feature_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "weights have {} rows for {} features",
                w.nrows(),
                self.feature_names.len()
            )));
        }
        let w = WeightMatrix::new(w);
        if !w.is_finite() {
            return Err(Error::InvalidData("model weights are not finite".into()));
        }
        Ok(w)
    }

    pub fn pooled(&self) -> Result<PooledDataset> {
        let n = self.n_inlier + self.n_test;
        let x = from_rows(&self.features, n, "features")?;
        PooledDataset::from_parts(
            x,
            self.feature_names.clone(),
            self.sample_ids.clone(),
            self.n_inlier,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LlrModel = serde_json::from_str(&text)?;
        model.weight_matrix()?;
        model.pooled()?;
        Ok(model)
    }
}
