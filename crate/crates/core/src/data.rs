//! Sample containers, inlier/test pooling, standardization and CSV I/O.
//!
//! Matrices are feature-major: a [`Dataset`] with `d` features and `m`
//! samples stores a `d × m` matrix, one column per sample. CSV files are
//! sample-major (one row per sample) and are transposed on load.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name given to the constant feature added by [`Dataset::with_bias`].
pub const BIAS_FEATURE: &str = "(bias)";

/// Floor applied to per-feature standard deviations.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Ground-truth tag of a test sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Inlier,
    Outlier,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inlier => "inlier",
            Label::Outlier => "outlier",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inlier" => Ok(Label::Inlier),
            "outlier" => Ok(Label::Outlier),
            other => Err(Error::InvalidData(format!(
                "label must be 'inlier' or 'outlier', got {other:?}"
            ))),
        }
    }
}

/// A feature-major sample matrix with names for its rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    feature_names: Vec<String>,
    sample_ids: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, validating shape, finiteness and id uniqueness.
    pub fn new(
        features: DMatrix<f64>,
        feature_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (d, m) = features.shape();
        if d == 0 || m == 0 {
            return Err(Error::InvalidData(format!(
                "dataset must have at least one feature and one sample, got {d}x{m}"
            )));
        }
        if feature_names.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {d} features",
                feature_names.len()
            )));
        }
        if sample_ids.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} sample ids for {m} samples",
                sample_ids.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value at feature {}, sample {}",
                pos % d,
                pos / d
            )));
        }
        let mut seen = HashSet::with_capacity(m);
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate sample id {id:?}")));
            }
        }
        Ok(Dataset {
            features,
            feature_names,
            sample_ids,
        })
    }

    /// Builds a dataset with generated names `x1..xd` and ids `{prefix}{j}`.
    pub fn from_matrix(features: DMatrix<f64>, id_prefix: &str) -> Result<Self> {
        let (d, m) = features.shape();
        let names = (1..=d).map(|k| format!("x{k}")).collect();
        let ids = (0..m).map(|j| format!("{id_prefix}{j}")).collect();
        Self::new(features, names, ids)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Number of features `d`.
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the listed columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidData("empty column selection".into()));
        }
        let features = self.features.select_columns(columns);
        let ids = columns.iter().map(|&j| self.sample_ids[j].clone()).collect();
        Self::new(features, self.feature_names.clone(), ids)
    }

    /// Appends a constant-one feature named [`BIAS_FEATURE`].
    pub fn with_bias(&self) -> Self {
        let (d, m) = self.features.shape();
        let mut features = self.features.clone().insert_row(d, 1.0);
        features.row_mut(d).fill(1.0);
        debug_assert_eq!(features.shape(), (d + 1, m));
        let mut names = self.feature_names.clone();
        names.push(BIAS_FEATURE.to_string());
        Dataset {
            features,
            feature_names: names,
            sample_ids: self.sample_ids.clone(),
        }
    }

    /// Reads a sample-major CSV file. A trailing `label` column, if present,
    /// is returned separately.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Self, Option<Vec<Label>>)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let id_prefix = path
            .file_stem()
            .map(|s| format!("{}_", s.to_string_lossy()))
            .unwrap_or_default();
        Self::from_csv_reader(file, &id_prefix)
    }

    /// Parses CSV text; sample ids are `{id_prefix}{row}` (0-based, data rows only).
    pub fn from_csv_reader<R: std::io::Read>(
        reader: R,
        id_prefix: &str,
    ) -> Result<(Self, Option<Vec<Label>>)> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let has_label = headers.last().map(|h| h == "label").unwrap_or(false);
        let d = headers.len() - usize::from(has_label);
        if d == 0 {
            return Err(Error::InvalidData("CSV has no feature columns".into()));
        }
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut m = 0;
        for record in rdr.records() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, expected {}",
                    m + 1,
                    record.len(),
                    headers.len()
                )));
            }
            for (k, field) in record.iter().take(d).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}, column {:?}: cannot parse {field:?} as a number",
                        m + 1,
                        headers[k]
                    ))
                })?;
                values.push(v);
            }
            if has_label {
                labels.push(record[d].parse::<Label>()?);
            }
            m += 1;
        }
        if m == 0 {
            return Err(Error::InvalidData("CSV has no data rows".into()));
        }
        // row-major samples read as column-major d × m
        let features = DMatrix::from_vec(d, m, values);
        let ids = (0..m).map(|j| format!("{id_prefix}{j}")).collect();
        let data = Self::new(features, headers[..d].to_vec(), ids)?;
        Ok((data, has_label.then_some(labels)))
    }

    /// Writes a sample-major CSV, with a trailing `label` column when labels are given.
    pub fn write_csv(&self, path: impl AsRef<Path>, labels: Option<&[Label]>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv_writer(file, labels)
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W, labels: Option<&[Label]>) -> Result<()> {
        if let Some(labels) = labels {
            if labels.len() != self.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    self.len()
                )));
            }
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if labels.is_some() {
            header.push("label");
        }
        wtr.write_record(&header)?;
        for j in 0..self.len() {
            let mut row: Vec<String> = self.features.column(j).iter().map(|v| v.to_string()).collect();
            if let Some(labels) = labels {
                row.push(labels[j].to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Inlier and test samples side by side, inliers first.
///
/// Inliers carry label `+1` and test samples `-1`, so that the logistic
/// posterior odds estimate the inlier-over-test density ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDataset {
    features: DMatrix<f64>,
    labels: Vec<i8>,
    feature_names: Vec<String>,
    sample_ids: Vec<String>,
    n_inlier: usize,
    n_test: usize,
}

impl PooledDataset {
    /// Rebuilds a pooled dataset whose first `n_inlier` columns are inliers.
    pub fn from_parts(
        features: DMatrix<f64>,
        feature_names: Vec<String>,
        sample_ids: Vec<String>,
        n_inlier: usize,
    ) -> Result<Self> {
        let data = Dataset::new(features, feature_names, sample_ids)?;
        let m = data.len();
        if n_inlier == 0 || n_inlier >= m {
            return Err(Error::InvalidData(format!(
                "need at least one inlier and one test sample, got {n_inlier} of {m}"
            )));
        }
        let mut labels = vec![1i8; n_inlier];
        labels.resize(m, -1);
        Ok(PooledDataset {
            features: data.features,
            labels,
            feature_names: data.feature_names,
            sample_ids: data.sample_ids,
            n_inlier,
            n_test: m - n_inlier,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Label of pooled column `i` as a float (`+1.0` or `-1.0`).
    pub fn y(&self, i: usize) -> f64 {
        f64::from(self.labels[i])
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Number of inlier (reference) samples `n'`.
    pub fn n_inlier(&self) -> usize {
        self.n_inlier
    }

    /// Number of test samples `n`.
    pub fn n_test(&self) -> usize {
        self.n_test
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Total pooled sample count `n + n'`.
    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.n_inlier..self.n_inlier + self.n_test
    }

    pub fn inlier_range(&self) -> std::ops::Range<usize> {
        0..self.n_inlier
    }

    pub fn index_of(&self, sample_id: &str) -> Option<usize> {
        self.sample_ids.iter().position(|s| s == sample_id)
    }

    /// Extracts the inlier block.
    pub fn inliers(&self) -> Dataset {
        self.block(self.inlier_range())
    }

    /// Extracts the test block.
    pub fn test(&self) -> Dataset {
        self.block(self.test_range())
    }

    fn block(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            features: self.features.columns(range.start, range.len()).into_owned(),
            feature_names: self.feature_names.clone(),
            sample_ids: self.sample_ids[range].to_vec(),
        }
    }
}

/// Concatenates inliers (label `+1`) and test samples (label `-1`).
pub fn pool(inliers: &Dataset, test: &Dataset) -> Result<PooledDataset> {
    if inliers.dim() != test.dim() {
        return Err(Error::DimensionMismatch(format!(
            "inliers have {} features, test has {}",
            inliers.dim(),
            test.dim()
        )));
    }
    if inliers.feature_names != test.feature_names {
        return Err(Error::DimensionMismatch(
            "inlier and test feature names differ".into(),
        ));
    }
    let (n_inlier, n_test) = (inliers.len(), test.len());
    let features = DMatrix::from_fn(inliers.dim(), n_inlier + n_test, |k, j| {
        if j < n_inlier {
            inliers.features[(k, j)]
        } else {
            test.features[(k, j - n_inlier)]
        }
    });
    let mut labels = vec![1i8; n_inlier];
    labels.resize(n_inlier + n_test, -1);
    let sample_ids = inliers
        .sample_ids
        .iter()
        .chain(&test.sample_ids)
        .cloned()
        .collect();
    Ok(PooledDataset {
        features,
        labels,
        feature_names: inliers.feature_names.clone(),
        sample_ids,
        n_inlier,
        n_test,
    })
}

/// Per-feature location and scale used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizationStats {
    /// Mean zero, scale one in every feature.
    pub fn identity(d: usize) -> Self {
        StandardizationStats {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-feature mean and population standard deviation (divisor `m`), with
/// the deviation floored at [`SCALE_FLOOR`].
pub fn fit_standardizer(inliers: &Dataset) -> Result<StandardizationStats> {
    let m = inliers.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let mut mean = Vec::with_capacity(inliers.dim());
    let mut scale = Vec::with_capacity(inliers.dim());
    for row in inliers.features.row_iter() {
        let mu = row.iter().sum::<f64>() / m as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
        mean.push(mu);
        scale.push(var.sqrt().max(SCALE_FLOOR));
    }
    Ok(StandardizationStats { mean, scale })
}

/// Replaces every entry by `(x - mean) / scale`.
pub fn apply_standardizer(data: &Dataset, stats: &StandardizationStats) -> Result<Dataset> {
    if stats.dim() != data.dim() || stats.scale.len() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "standardizer has {} features, data has {}",
            stats.dim(),
            data.dim()
        )));
    }
    let mut features = data.features.clone();
    for (k, mut row) in features.row_iter_mut().enumerate() {
        let (mu, s) = (stats.mean[k], stats.scale[k]);
        row.apply(|v| *v = (*v - mu) / s);
    }
    Ok(Dataset {
        features,
        feature_names: data.feature_names.clone(),
        sample_ids: data.sample_ids.clone(),
    })
}
