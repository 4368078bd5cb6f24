//! `ratio-scope`: synthetic data, model fitting, scoring, benchmarking and
//! AUC evaluation from the command line.
//!
//! Exit status: 0 on success, 1 on a computational failure, 2 on bad usage
//! or input.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ratio_scope::bench::{run_bench, BenchConfig, DataSource, Method};
use ratio_scope::data::{apply_standardizer, fit_standardizer, pool, Dataset, Label, StandardizationStats};
use ratio_scope::eval::{auc, roc_curve, table_markdown, write_roc_csv, RunSummary, TestKind};
use ratio_scope::llr::{fit_pooled, build_graph, LlrHyperparams, LlrModel};
use ratio_scope::scores::{detect, explain, ratio_score, write_explanations, ScoreSet, Selection};
use ratio_scope::synth::{generate, SynthSpec};
use ratio_scope::{Error, Result};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "ratio-scope", version, about = "Inlier-based outlier detection with localized logistic regression")]
struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic inlier set and a labeled test set.
    Synth(SynthArgs),
    /// Fit the localized logistic ratio model and save it as JSON.
    Fit(FitArgs),
    /// Score samples of a fitted model.
    Score(ScoreArgs),
    /// Compare detectors over seeded trials.
    Bench(BenchArgs),
    /// AUC and ROC points of a labeled scores file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_inlier: Option<usize>,
    #[arg(long)]
    n_test_inlier: Option<usize>,
    #[arg(long)]
    n_outlier: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving inliers.csv and test.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct LlrArgs {
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Neighbors per sample in the similarity graph.
    #[arg(long)]
    k: Option<usize>,
    /// Graph kernel width; defaults to the squared median pairwise distance.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Relative objective change that ends the outer loop.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    inner_max_iters: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Use the raw features instead of z-scoring by the inlier statistics.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    inliers: PathBuf,
    /// Test samples; an optional `label` column is kept for evaluation.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Append a constant feature, left out of explanations.
    #[arg(long)]
    bias: bool,
    #[command(flatten)]
    llr: LlrArgs,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flag samples with score <= tau as outliers.
    #[arg(long)]
    tau: Option<f64>,
    /// Explain flagged samples (all scored samples without --tau) by their top-k features.
    #[arg(long)]
    explain_top: Option<usize>,
    #[arg(long, default_value = "explanations.json")]
    explain_out: PathBuf,
    #[arg(long, value_parser = parse_selection)]
    select: Option<Selection>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Labeled CSV to resplit per trial instead of synthetic data.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Outliers sampled into each test split of --dataset.
    #[arg(long)]
    n_outlier: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Per-dimension `dim,method,mean_auc,std` rows.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Directory receiving the labeled test scores of every run.
    #[arg(long)]
    scores_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Paired instead of Welch t-tests.
    #[arg(long)]
    paired: bool,
    #[command(flatten)]
    llr: LlrArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    /// ROC points CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_selection(s: &str) -> std::result::Result<Selection, String> {
    match s {
        "test" => Ok(Selection::Test),
        "inliers" => Ok(Selection::Inliers),
        "all" => Ok(Selection::All),
        _ => Err(format!("expected test, inliers or all, got {s:?}")),
    }
}

/// Error that maps to exit status 1.
#[derive(Debug)]
struct Failure(String);

enum Outcome {
    Input(Error),
    Compute(String),
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Outcome::Input(e)
        } else {
            Outcome::Compute(e.to_string())
        }
    }
}

impl From<Failure> for Outcome {
    fn from(f: Failure) -> Self {
        Outcome::Compute(f.0)
    }
}

fn hyperparams(args: &LlrArgs, cfg: &RunConfig) -> Result<LlrHyperparams> {
    let base = LlrHyperparams::default();
    let hp = LlrHyperparams {
        lambda1: args.lambda1.or(cfg.lambda1).unwrap_or(base.lambda1),
        lambda2: args.lambda2.or(cfg.lambda2).unwrap_or(base.lambda2),
        k_neighbors: args.k.or(cfg.k).unwrap_or(base.k_neighbors),
        sigma2: args.sigma2.or(cfg.sigma2).or(base.sigma2),
        epsilon: args.epsilon.or(cfg.epsilon).unwrap_or(base.epsilon),
        outer_max_iters: args.max_outer.or(cfg.max_outer).unwrap_or(base.outer_max_iters),
        outer_rel_tol: args.tol.or(cfg.tol).unwrap_or(base.outer_rel_tol),
        inner_max_iters: args.inner_max_iters.or(cfg.inner_max_iters).unwrap_or(base.inner_max_iters),
        inner_grad_tol: args.inner_tol.or(cfg.inner_tol).unwrap_or(base.inner_grad_tol),
    };
    hp.validate()?;
    Ok(hp)
}

fn standardize(args: &LlrArgs, cfg: &RunConfig) -> bool {
    !(args.no_standardize || cfg.no_standardize.unwrap_or(false))
}

fn cmd_synth(args: &SynthArgs, cfg: &RunConfig) -> std::result::Result<(), Outcome> {
    let base = SynthSpec::new(args.d.or(cfg.d).unwrap_or(10), args.seed.or(cfg.seed).unwrap_or(0));
    let spec = SynthSpec {
        n_inlier: args.n_inlier.or(cfg.n_inlier).unwrap_or(base.n_inlier),
        n_test_inlier: args.n_test_inlier.or(cfg.n_test_inlier).unwrap_or(base.n_test_inlier),
        n_test_outlier: args.n_outlier.or(cfg.n_outlier).unwrap_or(base.n_test_outlier),
        ..base
    };
    let (inliers, test, labels) = generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::InvalidData(format!("{}: {e}", args.out_dir.display())))?;
    inliers.write_csv(args.out_dir.join("inliers.csv"), None)?;
    test.write_csv(args.out_dir.join("test.csv"), Some(&labels))?;
    println!(
        "wrote {} inliers and {} test samples ({} outliers) in {} dimensions",
        inliers.len(),
        test.len(),
        spec.n_test_outlier,
        spec.d
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs, cfg: &RunConfig) -> std::result::Result<(), Outcome> {
    let hp = hyperparams(&args.llr, cfg)?;
    let (inliers, _) = Dataset::read_csv(&args.inliers)?;
    let (test, test_labels) = Dataset::read_csv(&args.test)?;
    let (inliers, test, stats) = if standardize(&args.llr, cfg) {
        let stats = fit_standardizer(&inliers)?;
        (apply_standardizer(&inliers, &stats)?, apply_standardizer(&test, &stats)?, stats)
    } else {
        let d = inliers.dim();
        (inliers, test, StandardizationStats::identity(d))
    };
    let bias = args.bias || cfg.bias.unwrap_or(false);
    let (inliers, test) = if bias {
        (inliers.with_bias(), test.with_bias())
    } else {
        (inliers, test)
    };
    let pooled = pool(&inliers, &test)?;
    let graph = build_graph(&pooled, &hp)?;
    let result = fit_pooled(&pooled, graph, &hp)?;
    let model = LlrModel::from_fit(&result, &pooled, &hp, stats, bias, test_labels);
    model.save(&args.out)?;
    let last = result.objective_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "objective {last} after {} iterations (converged: {})",
        result.iterations, result.converged
    );
    if !result.converged {
        log::warn!("outer loop stopped at the iteration limit");
    }
    Ok(())
}

fn cmd_score(args: &ScoreArgs, cfg: &RunConfig) -> std::result::Result<(), Outcome> {
    let model = LlrModel::load(&args.model)?;
    let weights = model.weight_matrix()?;
    let pooled = model.pooled()?;
    let select = args.select.or(cfg.select).unwrap_or_default();
    let mut scores = ratio_score(&weights, &pooled, select)?;
    if select == Selection::Test {
        if let Some(labels) = &model.test_labels {
            scores = scores.with_labels(labels.clone())?;
        }
    }
    let tau = args.tau.or(cfg.tau);
    let decisions = tau.map(|t| detect(&scores, t)).transpose()?;
    scores.write_csv(&args.out, decisions.as_deref())?;
    if let Some(d) = &decisions {
        let flagged = d.iter().filter(|&&l| l == Label::Outlier).count();
        println!("{flagged} of {} samples flagged as outliers", d.len());
    }
    if let Some(top) = args.explain_top.or(cfg.explain_top) {
        let explanations = scores
            .sample_ids()
            .iter()
            .enumerate()
            .filter(|(i, _)| decisions.as_ref().is_none_or(|d| d[*i] == Label::Outlier))
            .map(|(_, id)| explain(&weights, &pooled, id, top))
            .collect::<Result<Vec<_>>>()?;
        write_explanations(&args.explain_out, &explanations)?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs, cfg: &RunConfig) -> std::result::Result<(), Outcome> {
    let methods = if args.methods.is_empty() {
        cfg.methods.clone().unwrap_or_else(|| {
            vec![Method::Llr, Method::Kde, Method::Lof, Method::Osvm, Method::L1lr, Method::Kliep, Method::Ulsif]
        })
    } else {
        args.methods.clone()
    };
    let n_outlier = args.n_outlier.or(cfg.n_outlier).unwrap_or(10);
    let source = match args.dataset.clone().or_else(|| cfg.dataset.clone()) {
        Some(path) => DataSource::Csv { path, n_outliers: n_outlier },
        None => {
            let dims = if args.dims.is_empty() {
                cfg.dims.clone().unwrap_or_else(|| vec![10])
            } else {
                args.dims.clone()
            };
            DataSource::Synthetic {
                dims,
                n_inlier: cfg.n_inlier.unwrap_or(200),
                n_test_inlier: cfg.n_test_inlier.unwrap_or(100),
                n_test_outlier: n_outlier,
            }
        }
    };
    let mut bench = BenchConfig::new(
        methods,
        args.trials.or(cfg.trials).unwrap_or(100),
        args.seed.or(cfg.seed).unwrap_or(0),
        source,
    );
    bench.llr = hyperparams(&args.llr, cfg)?;
    bench.standardize = standardize(&args.llr, cfg);
    if let Some(b) = &cfg.baselines {
        bench.baselines = b.clone();
    }
    if args.paired || cfg.paired.unwrap_or(false) {
        bench.test = TestKind::Paired;
    }

    let report = run_bench(&bench, args.threads.or(cfg.threads), args.scores_dir.as_deref())?;
    report.write_json(&args.out)?;
    if let Some(path) = &args.csv_out {
        write_text(path, &report.dimension_csv())?;
    }
    for dim in &report.results {
        let summaries: Vec<RunSummary> = dim
            .methods
            .iter()
            .map(|m| RunSummary {
                method: m.name.to_string(),
                auc_values: m.auc_values.clone(),
                mean: m.mean,
                std: m.std,
                std_undefined: m.auc_values.len() < 2,
            })
            .collect();
        println!("d = {}\n{}", dim.dim, table_markdown(&summaries, bench.test));
    }
    let failures = report.failures();
    if failures > 0 {
        return Err(Failure(format!("{failures} runs failed; see the error fields in {}", args.out.display())).into());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> std::result::Result<(), Outcome> {
    let scores = ScoreSet::read_csv(&args.scores)?;
    let value = auc(&scores)?;
    if let Some(path) = &args.out {
        write_roc_csv(path, &roc_curve(&scores)?)?;
    }
    println!("auc {value}");
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = RunConfig::load(cli.config.as_deref())
        .map_err(Outcome::Input)
        .and_then(|cfg| match &cli.command {
            Command::Synth(a) => cmd_synth(a, &cfg),
            Command::Fit(a) => cmd_fit(a, &cfg),
            Command::Score(a) => cmd_score(a, &cfg),
            Command::Bench(a) => cmd_bench(a, &cfg),
            Command::Eval(a) => cmd_eval(a),
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Outcome::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Outcome::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
