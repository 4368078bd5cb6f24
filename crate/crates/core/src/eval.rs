//! ROC/AUC evaluation and run aggregation.
//!
//! Scores are inlier-likeness, so outliers are expected to score low. AUC is
//! the probability that a random inlier outscores a random outlier, with
//! half credit for ties.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::scores::ScoreSet;

/// Significance level for marking a method comparable to the best one.
pub const SIGNIFICANCE: f64 = 0.05;

fn split_labels(scores: &ScoreSet) -> Result<&[Label]> {
    let labels = scores
        .labels()
        .ok_or_else(|| Error::InvalidData("scores carry no labels".into()))?;
    let outliers = labels.iter().filter(|&&l| l == Label::Outlier).count();
    if outliers == 0 || outliers == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(labels)
}

/// AUC from raw scores and labels by the Mann-Whitney midrank statistic.
pub fn auc_values(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_out = labels.iter().filter(|&&l| l == Label::Outlier).count();
    let n_in = labels.len() - n_out;
    if n_out == 0 || n_in == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of the 1-based midranks of the inliers
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum += midrank * order[start..end].iter().filter(|&&i| labels[i] == Label::Inlier).count() as f64;
        start = end;
    }
    let n_in_f = n_in as f64;
    Ok((rank_sum - n_in_f * (n_in_f + 1.0) / 2.0) / (n_in_f * n_out as f64))
}

/// AUC of a labeled score set.
pub fn auc(scores: &ScoreSet) -> Result<f64> {
    let labels = split_labels(scores)?;
    auc_values(scores.scores(), labels)
}

/// A point of the ROC curve: samples with score `<= threshold` are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Fraction of inliers flagged.
    pub fpr: f64,
    /// Fraction of outliers flagged.
    pub tpr: f64,
}

/// ROC staircase from `(0, 0)` to `(1, 1)`, sweeping the threshold upward
/// over the distinct score values. The first point has threshold `-inf`.
pub fn roc_curve(scores: &ScoreSet) -> Result<Vec<RocPoint>> {
    let labels = split_labels(scores)?;
    let s = scores.scores();
    let n_out = labels.iter().filter(|&&l| l == Label::Outlier).count() as f64;
    let n_in = labels.len() as f64 - n_out;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && s[order[end]] == s[order[start]] {
            match labels[order[end]] {
                Label::Outlier => tp += 1,
                Label::Inlier => fp += 1,
            }
            end += 1;
        }
        points.push(RocPoint {
            threshold: s[order[start]],
            fpr: fp as f64 / n_in,
            tpr: tp as f64 / n_out,
        });
        start = end;
    }
    Ok(points)
}

/// Trapezoidal area under an ROC curve.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn write_roc_csv(path: impl AsRef<std::path::Path>, points: &[RocPoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

/// Zero-variance fallback: identical means are indistinguishable, distinct
/// ones are certainly different.
fn degenerate_p(diff: f64) -> f64 {
    if diff == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<f64> {
    for v in [a, b] {
        if v.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: v.len() });
        }
    }
    let (va, vb) = (sample_var(a) / a.len() as f64, sample_var(b) / b.len() as f64);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(degenerate_p(diff));
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2
        / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    Ok(two_sided_p(t, df))
}

/// Two-sided paired t-test on `a[i] - b[i]`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} paired values", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: a.len() });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let se2 = sample_var(&d) / d.len() as f64;
    let md = mean(&d);
    if se2 == 0.0 {
        return Ok(degenerate_p(md));
    }
    Ok(two_sided_p(md / se2.sqrt(), (d.len() - 1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    #[default]
    Welch,
    Paired,
}

pub fn ttest(kind: TestKind, a: &[f64], b: &[f64]) -> Result<f64> {
    match kind {
        TestKind::Welch => welch_ttest(a, b),
        TestKind::Paired => paired_ttest(a, b),
    }
}

/// Mean and sample standard deviation of one method's AUCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub auc_values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Set when fewer than two values make the deviation undefined.
    #[serde(default)]
    pub std_undefined: bool,
}

pub fn summarize(method: &str, auc_values: &[f64]) -> Result<RunSummary> {
    if auc_values.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let single = auc_values.len() < 2;
    Ok(RunSummary {
        method: method.to_string(),
        auc_values: auc_values.to_vec(),
        mean: mean(auc_values),
        std: if single { 0.0 } else { sample_var(auc_values).sqrt() },
        std_undefined: single,
    })
}

/// p-values for every unordered pair, keyed `"a|b"` with `a < b` by name.
pub fn pairwise_p(summaries: &[RunSummary], kind: TestKind) -> BTreeMap<String, Option<f64>> {
    let mut out = BTreeMap::new();
    for (i, a) in summaries.iter().enumerate() {
        for b in &summaries[i + 1..] {
            let (x, y) = if a.method <= b.method { (a, b) } else { (b, a) };
            let p = ttest(kind, &x.auc_values, &y.auc_values).ok();
            out.insert(format!("{}|{}", x.method, y.method), p);
        }
    }
    out
}

/// Marks the best-mean method and every method not significantly worse
/// (`p >= SIGNIFICANCE` against the best). Untestable pairs count as
/// comparable.
pub fn comparable_to_best(summaries: &[RunSummary], kind: TestKind) -> Vec<bool> {
    let Some(best) = summaries
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
    else {
        return Vec::new();
    };
    summaries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            i == best
                || ttest(kind, &summaries[best].auc_values, &s.auc_values)
                    .map(|p| p >= SIGNIFICANCE)
                    .unwrap_or(true)
        })
        .collect()
}

/// Markdown table of `mean (std)` per method, comparable entries in bold.
pub fn table_markdown(summaries: &[RunSummary], kind: TestKind) -> String {
    let bold = comparable_to_best(summaries, kind);
    let mut out = String::from("| method | mean AUC (std) |\n|---|---|\n");
    for (s, b) in summaries.iter().zip(bold) {
        let cell = format!("{:.3} ({:.3})", s.mean, s.std);
        if b {
            let _ = writeln!(out, "| {} | **{}** |", s.method, cell);
        } else {
            let _ = writeln!(out, "| {} | {} |", s.method, cell);
        }
    }
    out
}

/// CSV rows `method,mean,std,comparable`.
pub fn table_csv(summaries: &[RunSummary], kind: TestKind) -> String {
    let bold = comparable_to_best(summaries, kind);
    let mut out = String::from("method,mean,std,comparable\n");
    for (s, b) in summaries.iter().zip(bold) {
        let _ = writeln!(out, "{},{},{},{}", s.method, s.mean, s.std, b);
    }
    out
}
