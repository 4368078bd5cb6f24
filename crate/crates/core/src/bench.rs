//! Seeded benchmark harness: per `(dim, trial)` data generation or
//! resplitting, every requested detector, AUC per run, and per-dimension
//! aggregation with pairwise significance tests.
//!
//! Runs fan out over a rayon pool; results are keyed by
//! `(dim, trial, method)` and sorted, so the report does not depend on the
//! thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    kde_fit_score, kernel_model_score, kliep_fit, l1lr_fit, l1lr_lambda_max, l1lr_score, lof_score, osvm_fit,
    osvm_score, rulsif_fit, KliepOptions, L1lrOptions, OsvmOptions, RulsifOptions,
};
use crate::data::{apply_standardizer, fit_standardizer, pool, Dataset, Label};
use crate::error::{Error, Result};
use crate::eval::{auc, comparable_to_best, pairwise_p, summarize, RunSummary, TestKind};
use crate::graph::median_heuristic;
use crate::llr::{self, LlrHyperparams};
use crate::scores::{ratio_score, ScoreSet, Selection};
use crate::synth::{generate, trial_seed, SynthSpec};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "RATIO_SCOPE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Llr,
    Kde,
    Lof,
    Osvm,
    L1lr,
    Kliep,
    Ulsif,
    Rulsif,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Llr,
        Method::Kde,
        Method::Lof,
        Method::Osvm,
        Method::L1lr,
        Method::Kliep,
        Method::Ulsif,
        Method::Rulsif,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Llr => "llr",
            Method::Kde => "kde",
            Method::Lof => "lof",
            Method::Osvm => "osvm",
            Method::L1lr => "l1lr",
            Method::Kliep => "kliep",
            Method::Ulsif => "ulsif",
            Method::Rulsif => "rulsif",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Knobs of the comparison detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Kernel width for KDE, OSVM, KLIEP and (R)uLSIF; `None` is the median
    /// pairwise distance of the pooled samples.
    pub sigma: Option<f64>,
    pub lof_k: usize,
    pub osvm_nu: f64,
    /// l1-LR strength as a fraction of the smallest all-zero strength.
    pub l1lr_lambda_ratio: f64,
    pub n_basis: usize,
    pub ulsif_nu: f64,
    pub rulsif_beta: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            sigma: None,
            lof_k: 10,
            osvm_nu: 0.1,
            l1lr_lambda_ratio: 0.1,
            n_basis: 100,
            ulsif_nu: 0.1,
            rulsif_beta: 0.5,
        }
    }
}

/// Where trial data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Gaussian inliers and mean-shifted outliers in each listed dimension.
    Synthetic {
        dims: Vec<usize>,
        n_inlier: usize,
        n_test_inlier: usize,
        n_test_outlier: usize,
    },
    /// A labeled CSV resplit per trial: half the inliers form the model set,
    /// the other half plus `n_outliers` sampled outliers form the test set.
    Csv { path: PathBuf, n_outliers: usize },
}

impl DataSource {
    pub fn synthetic(dims: Vec<usize>) -> Self {
        DataSource::Synthetic {
            dims,
            n_inlier: 200,
            n_test_inlier: 100,
            n_test_outlier: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub source: DataSource,
    pub llr: LlrHyperparams,
    pub baselines: BaselineParams,
    /// z-score every split by its model-set statistics.
    pub standardize: bool,
    pub test: TestKind,
}

impl BenchConfig {
    pub fn new(methods: Vec<Method>, trials: usize, seed: u64, source: DataSource) -> Self {
        BenchConfig {
            methods,
            trials,
            seed,
            source,
            llr: LlrHyperparams::default(),
            baselines: BaselineParams::default(),
            standardize: true,
            test: TestKind::Welch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        self.llr.validate()?;
        let b = &self.baselines;
        if let Some(s) = b.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma must be > 0, got {s}")));
            }
        }
        if b.lof_k == 0 || b.n_basis == 0 {
            return Err(Error::InvalidParameter("lof_k and n_basis must be >= 1".into()));
        }
        if !(b.osvm_nu > 0.0 && b.osvm_nu <= 1.0) {
            return Err(Error::InvalidParameter(format!("osvm_nu must be in (0, 1], got {}", b.osvm_nu)));
        }
        if !(b.l1lr_lambda_ratio >= 0.0) || !(b.ulsif_nu >= 0.0) || !(0.0..=1.0).contains(&b.rulsif_beta) {
            return Err(Error::InvalidParameter("invalid baseline parameter".into()));
        }
        match &self.source {
            DataSource::Synthetic { dims, .. } if dims.is_empty() => {
                Err(Error::InvalidParameter("no dimensions given".into()))
            }
            DataSource::Synthetic { dims, n_inlier, n_test_inlier, n_test_outlier } => {
                for &d in dims {
                    let spec = SynthSpec {
                        n_inlier: *n_inlier,
                        n_test_inlier: *n_test_inlier,
                        n_test_outlier: *n_test_outlier,
                        ..SynthSpec::new(d, 0)
                    };
                    spec.validate()?;
                }
                Ok(())
            }
            DataSource::Csv { n_outliers, .. } if *n_outliers == 0 => {
                Err(Error::InvalidParameter("n_outliers must be >= 1".into()))
            }
            DataSource::Csv { .. } => Ok(()),
        }
    }
}

/// One split: model-set inliers, test samples and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub inliers: Dataset,
    pub test: Dataset,
    pub labels: Vec<Label>,
}

impl TrialData {
    /// Z-scores both sets by the statistics of the inliers.
    pub fn standardized(&self) -> Result<TrialData> {
        let stats = fit_standardizer(&self.inliers)?;
        Ok(TrialData {
            inliers: apply_standardizer(&self.inliers, &stats)?,
            test: apply_standardizer(&self.test, &stats)?,
            labels: self.labels.clone(),
        })
    }
}

/// A labeled dataset loaded once and resplit per trial.
#[derive(Debug, Clone)]
pub struct LabeledPool {
    inliers: Dataset,
    outliers: Dataset,
}

impl LabeledPool {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (data, labels) = Dataset::read_csv(path)?;
        let labels =
            labels.ok_or_else(|| Error::InvalidData(format!("{} has no label column", path.display())))?;
        Self::from_labeled(&data, &labels)
    }

    pub fn from_labeled(data: &Dataset, labels: &[Label]) -> Result<Self> {
        let pick = |want: Label| -> Vec<usize> {
            labels.iter().enumerate().filter(|(_, &l)| l == want).map(|(i, _)| i).collect()
        };
        let (inl, out) = (pick(Label::Inlier), pick(Label::Outlier));
        if inl.len() < 4 {
            return Err(Error::TooFewSamples { needed: 4, got: inl.len() });
        }
        if out.is_empty() {
            return Err(Error::SingleClass);
        }
        Ok(LabeledPool {
            inliers: data.select(&inl)?,
            outliers: data.select(&out)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.inliers.dim()
    }

    /// Seeded resplit; fewer than `n_outliers` available outliers are all used.
    pub fn split(&self, n_outliers: usize, seed: u64) -> Result<TrialData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inl: Vec<usize> = (0..self.inliers.len()).collect();
        inl.shuffle(&mut rng);
        let half = inl.len() / 2;
        let (model, rest) = inl.split_at(half);
        let mut out: Vec<usize> = (0..self.outliers.len()).collect();
        out.shuffle(&mut rng);
        if out.len() < n_outliers {
            log::warn!("only {} outliers available, using all of them", out.len());
        }
        out.truncate(n_outliers);
        let mut model = model.to_vec();
        let mut rest = rest.to_vec();
        model.sort_unstable();
        rest.sort_unstable();
        out.sort_unstable();

        let test_in = self.inliers.select(&rest)?;
        let test_out = self.outliers.select(&out)?;
        let n_test = rest.len() + out.len();
        let features = nalgebra::DMatrix::from_fn(self.dim(), n_test, |k, j| {
            if j < rest.len() {
                test_in.features()[(k, j)]
            } else {
                test_out.features()[(k, j - rest.len())]
            }
        });
        let ids = test_in.sample_ids().iter().chain(test_out.sample_ids()).cloned().collect();
        let mut labels = vec![Label::Inlier; rest.len()];
        labels.resize(n_test, Label::Outlier);
        Ok(TrialData {
            inliers: self.inliers.select(&model)?,
            test: Dataset::new(features, self.inliers.feature_names().to_vec(), ids)?,
            labels,
        })
    }
}

fn kernel_width(data: &TrialData, params: &BaselineParams) -> Result<f64> {
    match params.sigma {
        Some(s) => Ok(s),
        None => median_heuristic(pool(&data.inliers, &data.test)?.features()),
    }
}

/// Test-sample scores of one method on one (already preprocessed) split.
pub fn score_method(
    method: Method,
    data: &TrialData,
    llr_hp: &LlrHyperparams,
    params: &BaselineParams,
    seed: u64,
) -> Result<ScoreSet> {
    let (inl, test) = (&data.inliers, &data.test);
    let scores = match method {
        Method::Llr => {
            let fit = llr::fit(inl, test, llr_hp)?;
            ratio_score(&fit.weights, &pool(inl, test)?, Selection::Test)?
        }
        Method::Kde => kde_fit_score(inl, test, kernel_width(data, params)?)?,
        Method::Lof => lof_score(inl, test, params.lof_k.min(inl.len() - 1))?,
        Method::Osvm => {
            let pooled = pool(inl, test)?;
            let all = Dataset::new(
                pooled.features().clone(),
                pooled.feature_names().to_vec(),
                pooled.sample_ids().to_vec(),
            )?;
            let model = osvm_fit(&all, params.osvm_nu, kernel_width(data, params)?, &OsvmOptions::default())?;
            osvm_score(&model, test)?
        }
        Method::L1lr => {
            let pooled = pool(inl, test)?;
            let lambda = params.l1lr_lambda_ratio * l1lr_lambda_max(&pooled);
            let model = l1lr_fit(&pooled, lambda, &L1lrOptions::default())?;
            l1lr_score(&model, test, test.len(), inl.len())?
        }
        Method::Kliep => {
            let opts = KliepOptions {
                n_basis: params.n_basis,
                seed,
                ..KliepOptions::with_sigma(kernel_width(data, params)?)
            };
            kernel_model_score(&kliep_fit(inl, test, &opts)?.model, test, true)?
        }
        Method::Ulsif | Method::Rulsif => {
            let opts = RulsifOptions {
                beta: if method == Method::Ulsif { 1.0 } else { params.rulsif_beta },
                nu: params.ulsif_nu,
                n_basis: params.n_basis,
                seed,
                ..RulsifOptions::with_sigma(kernel_width(data, params)?)
            };
            kernel_model_score(&rulsif_fit(inl, test, &opts)?.model, test, true)?
        }
    };
    scores.with_labels(data.labels.clone())
}

/// Outcome of one method on one split; `auc` is `None` when the method failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dim: usize,
    pub trial: usize,
    pub method: Method,
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: Method,
    pub mean: f64,
    pub std: f64,
    pub auc_values: Vec<f64>,
    /// Best mean, or not significantly worse than it.
    pub comparable_to_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimReport {
    pub dim: usize,
    pub methods: Vec<MethodSummary>,
    /// Keyed `"a|b"`; `null` when the test is undefined.
    pub pairwise_p: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub seed: u64,
    pub trials: usize,
    pub results: Vec<DimReport>,
    pub runs: Vec<RunRecord>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.auc.is_none()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Plot-ready rows `dim,method,mean_auc,std`.
    pub fn dimension_csv(&self) -> String {
        let mut out = String::from("dim,method,mean_auc,std\n");
        for r in &self.results {
            for m in &r.methods {
                out.push_str(&format!("{},{},{},{}\n", r.dim, m.name, m.mean, m.std));
            }
        }
        out
    }
}

/// Score files are named `d{dim}_t{trial}_{method}.csv`.
pub fn score_file_name(dim: usize, trial: usize, method: Method) -> String {
    format!("d{dim}_t{trial}_{method}.csv")
}

struct Job {
    dim: usize,
    trial: usize,
    seed: u64,
}

fn thread_count(requested: Option<usize>) -> Option<usize> {
    requested.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok())).filter(|&n| n > 0)
}

/// Runs the whole benchmark on up to `threads` workers (falling back to
/// [`THREADS_ENV`], then to rayon's default). With `score_dir`, every
/// successful run also writes its labeled test scores there.
pub fn run_bench(cfg: &BenchConfig, threads: Option<usize>, score_dir: Option<&Path>) -> Result<BenchReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(threads) {
        builder = builder.num_threads(n);
    }
    let workers = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    let (dataset, labeled, dims) = match &cfg.source {
        DataSource::Synthetic { dims, .. } => ("synthetic".to_string(), None, dims.clone()),
        DataSource::Csv { path, .. } => {
            let pool = LabeledPool::load(path)?;
            let d = pool.dim();
            (path.display().to_string(), Some(pool), vec![d])
        }
    };
    if let Some(dir) = score_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let jobs: Vec<Job> = dims
        .iter()
        .flat_map(|&dim| {
            (0..cfg.trials).map(move |trial| Job {
                dim,
                trial,
                seed: trial_seed(cfg.seed, dim, trial),
            })
        })
        .collect();

    let make_data = |job: &Job| -> Result<TrialData> {
        let raw = match (&cfg.source, &labeled) {
            (DataSource::Synthetic { n_inlier, n_test_inlier, n_test_outlier, .. }, _) => {
                let (inliers, test, labels) = generate(&SynthSpec {
                    n_inlier: *n_inlier,
                    n_test_inlier: *n_test_inlier,
                    n_test_outlier: *n_test_outlier,
                    ..SynthSpec::new(job.dim, job.seed)
                })?;
                TrialData { inliers, test, labels }
            }
            (DataSource::Csv { n_outliers, .. }, Some(pool)) => pool.split(*n_outliers, job.seed)?,
            (DataSource::Csv { .. }, None) => unreachable!("csv source is loaded up front"),
        };
        if cfg.standardize {
            raw.standardized()
        } else {
            Ok(raw)
        }
    };

    let mut runs: Vec<RunRecord> = workers.install(|| {
        jobs.par_iter()
            .flat_map_iter(|job| {
                let data = make_data(job);
                cfg.methods
                    .iter()
                    .map(|&method| {
                        let outcome = match &data {
                            Ok(d) => Ok(d),
                            Err(e) => Err(Error::InvalidData(format!("trial data: {e}"))),
                        }
                        .and_then(|d| {
                            let scores = score_method(method, d, &cfg.llr, &cfg.baselines, job.seed)?;
                            if let Some(dir) = score_dir {
                                scores.write_csv(dir.join(score_file_name(job.dim, job.trial, method)), None)?;
                            }
                            auc(&scores)
                        });
                        if let Err(e) = &outcome {
                            log::warn!("{method} failed on dim {} trial {}: {e}", job.dim, job.trial);
                        }
                        RunRecord {
                            dim: job.dim,
                            trial: job.trial,
                            method,
                            error: outcome.as_ref().err().map(|e| e.to_string()),
                            auc: outcome.ok(),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    });
    runs.sort_by(|a, b| (a.dim, a.trial, a.method).cmp(&(b.dim, b.trial, b.method)));
    runs.dedup_by(|a, b| (a.dim, a.trial, a.method) == (b.dim, b.trial, b.method));

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let results = dims
        .iter()
        .map(|&dim| {
            let summaries: Vec<RunSummary> = methods
                .iter()
                .filter_map(|&m| {
                    let values: Vec<f64> = runs
                        .iter()
                        .filter(|r| r.dim == dim && r.method == m)
                        .filter_map(|r| r.auc)
                        .collect();
                    summarize(m.as_str(), &values).ok()
                })
                .collect();
            let comparable = comparable_to_best(&summaries, cfg.test);
            let summaries_out = summaries
                .iter()
                .zip(comparable)
                .map(|(s, c)| MethodSummary {
                    name: s.method.parse().expect("summaries are built from known methods"),
                    mean: s.mean,
                    std: s.std,
                    auc_values: s.auc_values.clone(),
                    comparable_to_best: c,
                })
                .collect();
            DimReport {
                dim,
                methods: summaries_out,
                pairwise_p: pairwise_p(&summaries, cfg.test),
            }
        })
        .collect();

    Ok(BenchReport {
        dataset,
        seed: cfg.seed,
        trials: cfg.trials,
        results,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let cfg = BenchConfig::new(vec![Method::Kde], 2, 1, DataSource::synthetic(vec![3]));
        let mut json: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        json["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<BenchConfig>(json).is_err());
        assert!(BenchConfig::new(vec![], 2, 1, DataSource::synthetic(vec![3])).validate().is_err());
        assert!(BenchConfig::new(vec![Method::Kde], 2, 1, DataSource::synthetic(vec![1])).validate().is_err());
    }

    #[test]
    fn resplit_protocol() {
        let m = 30;
        let data = Dataset::from_matrix(DMatrix::from_fn(2, m, |k, j| (k + j) as f64), "s").unwrap();
        let labels: Vec<Label> = (0..m).map(|j| if j < 6 { Label::Outlier } else { Label::Inlier }).collect();
        let pool = LabeledPool::from_labeled(&data, &labels).unwrap();
        let split = pool.split(10, 3).unwrap();
        assert_eq!(split.inliers.len(), 12);
        // 12 remaining inliers and all 6 outliers
        assert_eq!(split.test.len(), 18);
        assert_eq!(split.labels.iter().filter(|&&l| l == Label::Outlier).count(), 6);
        let mut ids: Vec<&String> = split.inliers.sample_ids().iter().chain(split.test.sample_ids()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 30);
        assert_eq!(split, pool.split(10, 3).unwrap());
        assert_ne!(split, pool.split(10, 4).unwrap());
    }

    #[test]
    fn small_run_is_complete_and_sorted() {
        let cfg = BenchConfig::new(
            vec![Method::Ulsif, Method::Kde, Method::L1lr],
            2,
            5,
            DataSource::Synthetic {
                dims: vec![4, 3],
                n_inlier: 30,
                n_test_inlier: 20,
                n_test_outlier: 5,
            },
        );
        let report = run_bench(&cfg, Some(1), None).unwrap();
        assert_eq!(report.runs.len(), 12);
        assert_eq!(report.failures(), 0);
        assert!(report.runs.windows(2).all(|w| (w[0].dim, w[0].trial, w[0].method) < (w[1].dim, w[1].trial, w[1].method)));
        assert_eq!(report.results.len(), 2);
        for r in &report.results {
            assert_eq!(r.methods.len(), 3);
            assert!(r.methods.iter().any(|m| m.comparable_to_best));
            for m in &r.methods {
                assert!((0.0..=1.0).contains(&m.mean));
            }
        }
        assert!(report.dimension_csv().starts_with("dim,method,mean_auc,std\n4,"));
    }
}
