//! Ratio scores, threshold decisions and per-sample feature explanations.
//!
//! Every detector in this crate reports scores oriented so that higher
//! means more inlier-like; outliers are the samples with the lowest scores.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Label, PooledDataset, BIAS_FEATURE};
use crate::error::{Error, Result};
use crate::llr::WeightMatrix;

/// Exponents are clamped to this magnitude before `exp`.
pub const MAX_EXPONENT: f64 = 500.0;

/// Positive scores for a list of samples, with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    sample_ids: Vec<String>,
    scores: Vec<f64>,
    labels: Option<Vec<Label>>,
}

impl ScoreSet {
    pub fn new(sample_ids: Vec<String>, scores: Vec<f64>, labels: Option<Vec<Label>>) -> Result<Self> {
        if sample_ids.len() != scores.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids for {} scores",
                sample_ids.len(),
                scores.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != scores.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} scores",
                    l.len(),
                    scores.len()
                )));
            }
        }
        if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidData(format!(
                "scores must be positive and finite, got {bad}"
            )));
        }
        Ok(ScoreSet {
            sample_ids,
            scores,
            labels,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.scores.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} scores",
                labels.len(),
                self.scores.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Writes `sample_id,score[,decision][,label]`.
    pub fn write_csv(&self, path: impl AsRef<Path>, decisions: Option<&[Label]>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_csv_writer(file, decisions)
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, writer: W, decisions: Option<&[Label]>) -> Result<()> {
        if let Some(d) = decisions {
            if d.len() != self.len() {
                return Err(Error::DimensionMismatch("decisions length".into()));
            }
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id", "score"];
        if decisions.is_some() {
            header.push("decision");
        }
        if self.labels.is_some() {
            header.push("label");
        }
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            // {:e} prints the shortest representation that parses back exactly
            let mut row = vec![self.sample_ids[i].clone(), format!("{:e}", self.scores[i])];
            if let Some(d) = decisions {
                row.push(d[i].to_string());
            }
            if let Some(l) = &self.labels {
                row.push(l[i].to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a scores CSV; a `label` column, if present, becomes ground truth.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let id_col = col("sample_id").ok_or_else(|| Error::InvalidData("missing sample_id column".into()))?;
        let score_col = col("score").ok_or_else(|| Error::InvalidData("missing score column".into()))?;
        let label_col = col("label");
        let (mut ids, mut scores, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record?;
            ids.push(record[id_col].to_string());
            let s = &record[score_col];
            scores.push(
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidData(format!("bad score {s:?}")))?,
            );
            if let Some(c) = label_col {
                labels.push(record[c].parse::<Label>()?);
            }
        }
        ScoreSet::new(ids, scores, label_col.map(|_| labels))
    }
}

/// Which pooled samples to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Test,
    Inliers,
    All,
}

/// `(n / n') * exp(e)` with the exponent clamped to `±MAX_EXPONENT`.
pub fn prior_scaled_exp(exponent: f64, n_test: usize, n_inlier: usize) -> f64 {
    let e = exponent.clamp(-MAX_EXPONENT, MAX_EXPONENT);
    (n_test as f64 / n_inlier as f64) * e.exp()
}

/// Density-ratio scores `(n / n') exp(w_i^T x_i)` for the selected samples.
pub fn ratio_score(weights: &WeightMatrix, pooled: &PooledDataset, which: Selection) -> Result<ScoreSet> {
    if weights.shape() != pooled.features().shape() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {:?}, pooled data is {:?}",
            weights.shape(),
            pooled.features().shape()
        )));
    }
    let range = match which {
        Selection::Test => pooled.test_range(),
        Selection::Inliers => pooled.inlier_range(),
        Selection::All => 0..pooled.len(),
    };
    let x = pooled.features();
    let (n, n_prime) = (pooled.n_test(), pooled.n_inlier());
    let scores = range
        .clone()
        .map(|i| {
            let e: f64 = weights
                .column(i)
                .iter()
                .zip(x.column(i).iter())
                .map(|(w, v)| w * v)
                .sum();
            prior_scaled_exp(e, n, n_prime).max(f64::MIN_POSITIVE)
        })
        .collect();
    ScoreSet::new(pooled.sample_ids()[range].to_vec(), scores, None)
}

/// Outlier iff `score <= tau`.
pub fn detect(scores: &ScoreSet, tau: f64) -> Result<Vec<Label>> {
    if !(tau >= 0.0) {
        return Err(Error::NegativeThreshold(tau));
    }
    Ok(scores
        .scores()
        .iter()
        .map(|&s| if s <= tau { Label::Outlier } else { Label::Inlier })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub name: String,
    pub weight: f64,
}

/// The largest-magnitude coefficients of one sample's column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub sample_id: String,
    pub score: f64,
    pub features: Vec<FeatureWeight>,
}

/// Ranks the features of `sample_id`'s coefficient column by `|weight|`
/// (ties by feature order) and keeps the first `top_k`. The bias feature,
/// if present, is skipped.
pub fn explain(weights: &WeightMatrix, pooled: &PooledDataset, sample_id: &str, top_k: usize) -> Result<Explanation> {
    if top_k == 0 {
        return Err(Error::InvalidParameter("top_k must be >= 1".into()));
    }
    if weights.shape() != pooled.features().shape() {
        return Err(Error::DimensionMismatch("weights do not match pooled data".into()));
    }
    let i = pooled
        .index_of(sample_id)
        .ok_or_else(|| Error::UnknownSample(sample_id.to_string()))?;
    let names = pooled.feature_names();
    let column = weights.column(i);
    let mut order: Vec<usize> = (0..column.len()).filter(|&k| names[k] != BIAS_FEATURE).collect();
    // stable sort keeps feature order among equal magnitudes
    order.sort_by(|&a, &b| column[b].abs().total_cmp(&column[a].abs()));
    let exponent: f64 = column.iter().zip(pooled.features().column(i).iter()).map(|(w, v)| w * v).sum();
    Ok(Explanation {
        sample_id: sample_id.to_string(),
        score: prior_scaled_exp(exponent, pooled.n_test(), pooled.n_inlier()),
        features: order
            .into_iter()
            .take(top_k)
            .map(|k| FeatureWeight {
                name: names[k].clone(),
                weight: column[k],
            })
            .collect(),
    })
}

pub fn write_explanations(path: impl AsRef<Path>, explanations: &[Explanation]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(explanations)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{pool, Dataset};
    use nalgebra::DMatrix;

    fn pooled(d: usize, n_in: usize, n_test: usize) -> PooledDataset {
        let a = Dataset::from_matrix(DMatrix::from_fn(d, n_in, |k, j| (k + j) as f64), "i").unwrap();
        let b = Dataset::from_matrix(DMatrix::from_fn(d, n_test, |k, j| 1.0 + (k * j) as f64), "t").unwrap();
        pool(&a, &b).unwrap()
    }

    fn set(scores: &[f64]) -> ScoreSet {
        let ids = (0..scores.len()).map(|i| format!("s{i}")).collect();
        ScoreSet::new(ids, scores.to_vec(), None).unwrap()
    }

    #[test]
    fn zero_weights_balanced_classes() {
        let p = pooled(2, 3, 3);
        let s = ratio_score(&WeightMatrix::zeros(2, 6), &p, Selection::Test).unwrap();
        assert_eq!(s.scores(), &[1.0, 1.0, 1.0]);
        assert_eq!(s.sample_ids(), &["t0", "t1", "t2"]);
        let all = ratio_score(&WeightMatrix::zeros(2, 6), &p, Selection::All).unwrap();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn prior_factor_arithmetic() {
        let s = prior_scaled_exp(2f64.ln(), 110, 200);
        assert!((s - 1.1).abs() < 1e-14);
    }

    #[test]
    fn scores_increase_with_exponent() {
        let mut last = 0.0;
        for e in [-600.0, -3.0, -0.5, 0.0, 0.2, 7.0] {
            let s = prior_scaled_exp(e, 10, 20);
            assert!(s > last);
            last = s;
        }
        // saturation instead of overflow
        assert!(prior_scaled_exp(1e6, 1, 1).is_finite());
        assert!(prior_scaled_exp(-1e6, 1, 1) > 0.0);
    }

    #[test]
    fn detect_boundaries() {
        let s = set(&[0.5, 2.0]);
        assert_eq!(detect(&s, 0.0).unwrap(), vec![Label::Inlier, Label::Inlier]);
        assert_eq!(detect(&s, 1.0).unwrap(), vec![Label::Outlier, Label::Inlier]);
        assert_eq!(detect(&s, 2.0).unwrap(), vec![Label::Outlier, Label::Outlier]);
        assert!(matches!(detect(&s, -0.1), Err(Error::NegativeThreshold(_))));
    }

    #[test]
    fn explain_orders_by_magnitude() {
        let p = pooled(3, 1, 1);
        let w = WeightMatrix::new(DMatrix::from_column_slice(3, 2, &[0.0, 0.0, 0.0, 0.9, -0.1, 0.0]));
        let e = explain(&w, &p, "t0", 2).unwrap();
        assert_eq!(e.features[0], FeatureWeight { name: "x1".into(), weight: 0.9 });
        assert_eq!(e.features[1], FeatureWeight { name: "x2".into(), weight: -0.1 });
        let zero = explain(&w, &p, "i0", 3).unwrap();
        let names: Vec<_> = zero.features.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["x1", "x2", "x3"]);
        assert!(matches!(explain(&w, &p, "nope", 1), Err(Error::UnknownSample(_))));
        assert!(explain(&w, &p, "t0", 0).is_err());
    }

    #[test]
    fn explain_skips_bias() {
        let a = Dataset::from_matrix(DMatrix::from_element(1, 2, 1.0), "i").unwrap().with_bias();
        let b = Dataset::from_matrix(DMatrix::from_element(1, 1, 2.0), "t").unwrap().with_bias();
        let p = pool(&a, &b).unwrap();
        let w = WeightMatrix::new(DMatrix::from_column_slice(2, 3, &[0.0, 0.0, 0.0, 0.0, 0.1, 5.0]));
        let e = explain(&w, &p, "t0", 5).unwrap();
        assert_eq!(e.features.len(), 1);
        assert_eq!(e.features[0].name, "x1");
    }

    #[test]
    fn scoreset_validation() {
        assert!(ScoreSet::new(vec!["a".into()], vec![0.0], None).is_err());
        assert!(ScoreSet::new(vec!["a".into()], vec![f64::NAN], None).is_err());
        assert!(ScoreSet::new(vec!["a".into()], vec![1.0, 2.0], None).is_err());
        assert!(ScoreSet::new(vec!["a".into()], vec![1.0], Some(vec![])).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = ScoreSet::new(
            vec!["a".into(), "b".into()],
            vec![0.1 + 0.2, 1.0 / 3.0],
            Some(vec![Label::Inlier, Label::Outlier]),
        )
        .unwrap();
        let mut buf = Vec::new();
        s.to_csv_writer(&mut buf, Some(&[Label::Outlier, Label::Outlier])).unwrap();
        let back = ScoreSet::from_csv_reader(&buf[..]).unwrap();
        assert_eq!(back, s);
    }
}
