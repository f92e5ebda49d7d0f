//! Command-line driver: dataset preparation, click simulation, training,
//! evaluation, experiment sweeps, the verification suite, and propensity
//! estimation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use prs_ltr::data::{
    binarize, default_threshold, parse_svmlight, split_production, synthetic_corpus,
    write_svmlight, Dataset, SyntheticConfig,
};
use prs_ltr::experiment::{
    evaluate_model, gnuplot_layout, run_experiment, wmrr_of_model, write_rows_csv,
    ExperimentConfig, Learner, PropensitySource,
};
use prs_ltr::learn::boost::train_lambdamart;
use prs_ltr::learn::linear::train_logreg_with_trace;
use prs_ltr::learn::{load_model, BoostConfig, Scorer, SgdConfig};
use prs_ltr::oracle::oracle_suite;
use prs_ltr::propensity::{
    estimate_ratios, estimate_ratios_uniform, read_ratios_csv, simulate_swap_experiment,
    simulate_uniform_experiment, write_ratios_csv, write_swap_log,
};
use prs_ltr::simulate::{
    read_click_log, simulate_clicks, simulate_sessions, train_production_ranker,
    with_assumed_eta, with_estimated_ratios, write_click_log,
};
use prs_ltr::weighting::{PairStrategy, SchemeKind, WeightScheme};
use prs_ltr::{PrsError, Result};

#[derive(Parser)]
#[command(
    name = "prs-ltr",
    version,
    about = "Propensity-weighted pairwise learning to rank from click logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, binarize and split a labeled dataset, or synthesize one.
    Prepare(PrepareArgs),
    /// Generate a position-biased click log over a labeled pool.
    Simulate(SimulateArgs),
    /// Train a ranker from a click log.
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid and emit a results CSV.
    Sweep(SweepArgs),
    /// Run the brute-force verification suite.
    Oracle(OracleArgs),
    /// Estimate relative propensities from a randomized intervention.
    EstimatePropensity(EstimatePropensityArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// SVMLight/LETOR file to split. Omit together with --synthetic to
    /// generate a corpus instead.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate a synthetic corpus (train/test plus production split).
    #[arg(long, conflicts_with = "input")]
    synthetic: bool,
    #[arg(long)]
    outdir: PathBuf,
    /// Fraction of queries carved out for the production ranker.
    #[arg(long, default_value_t = 0.01)]
    fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Relevance binarization threshold; defaults per the grade range.
    #[arg(long)]
    threshold: Option<u8>,
    #[arg(long, default_value_t = 200)]
    train_queries: usize,
    #[arg(long, default_value_t = 100)]
    test_queries: usize,
    #[arg(long, default_value_t = 15)]
    docs_per_query: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Labeled pool the clicks are simulated over.
    #[arg(long)]
    pool: PathBuf,
    /// Saved model that ranks the pool.
    #[arg(long)]
    production_model: Option<PathBuf>,
    /// Labeled slice to train a production ranker on instead.
    #[arg(long, conflicts_with = "production_model")]
    production_data: Option<PathBuf>,
    /// Stop once this many clicks are logged.
    #[arg(long, default_value_t = 10_000)]
    clicks: u64,
    /// Log a fixed number of sessions instead of a click budget.
    #[arg(long, conflicts_with = "clicks")]
    sessions: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threshold: Option<u8>,
    /// Keep hidden observation/relevance vectors for verification.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    log: PathBuf,
    /// Labeled pool the log's query ids refer to.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value = "logreg")]
    learner: String,
    #[arg(long, default_value = "prs")]
    scheme: String,
    #[arg(long, default_value = "clicked_vs_nonclicked")]
    strategy: String,
    /// Ratio-weight cap; defaults to 1 for logreg and uncapped for
    /// lambdamart.
    #[arg(long)]
    gamma: Option<f64>,
    /// Cap on 1/p; uncapped by default.
    #[arg(long)]
    clip_inverse: Option<f64>,
    #[arg(long)]
    threshold: Option<u8>,
    /// Recompute training propensities as (1/rank)^eta with this severity.
    #[arg(long)]
    assumed_eta: Option<f64>,
    /// Replace training propensities with estimated per-position ratios
    /// (CSV from estimate-propensity). Values above 1 are clamped.
    #[arg(long, conflicts_with = "assumed_eta")]
    ratios: Option<PathBuf>,
    /// Steps per learner: epochs for logreg, trees for lambdamart.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    /// Defaults to 0.5 for logreg, 0.1 for lambdamart.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Weight decay for logreg (default 1e-4) or the Newton-step ridge term
    /// for lambdamart (default 1).
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, default_value_t = 64)]
    batch_sessions: usize,
    #[arg(long, default_value_t = 31)]
    leaves: usize,
    #[arg(long, default_value_t = 1)]
    min_docs_per_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    threshold: Option<u8>,
    /// NDCG cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    ks: Vec<usize>,
    /// Write per-query metrics to this CSV.
    #[arg(long)]
    per_query: Option<PathBuf>,
    /// Click log for the weighted reciprocal-rank metric; needs --wmrr-pool.
    #[arg(long, requires = "wmrr_pool")]
    wmrr_log: Option<PathBuf>,
    /// Labeled pool the wmrr log refers to.
    #[arg(long, requires = "wmrr_log")]
    wmrr_pool: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment config; flags below override single fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Suppress the generation-time comment and zero the wall-clock column
    /// so reruns are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
    /// Also write a gnuplot layout next to the CSV.
    #[arg(long)]
    gnuplot: bool,
    #[arg(long)]
    learner: Option<String>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    clicks: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Use the default synthetic corpus instead of dataset files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    clip_inverse: Option<f64>,
    /// Train with propensities from this assumed-eta grid instead of the
    /// true ones.
    #[arg(long, value_delimiter = ',')]
    assumed_eta: Option<Vec<f64>>,
    /// Estimate propensities from this many swap sessions per run.
    #[arg(long, conflicts_with = "assumed_eta")]
    estimate_sessions: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
}

#[derive(Args)]
struct EstimatePropensityArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    production_model: Option<PathBuf>,
    #[arg(long, conflicts_with = "production_model")]
    production_data: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    sessions: u64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Randomize only the top positions; 0 means all.
    #[arg(long, default_value_t = 0)]
    max_position: usize,
    /// Intervention: adjacent-pair swaps or a uniform shuffle of the top
    /// positions.
    #[arg(long, default_value = "swap")]
    mode: String,
    #[arg(long)]
    threshold: Option<u8>,
    /// Estimated ratios CSV.
    #[arg(long)]
    out: PathBuf,
    /// Raw swap tallies CSV (swap mode only).
    #[arg(long)]
    counts_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Prepare(args) => prepare(args),
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sweep(args) => sweep(args),
        Command::Oracle(args) => oracle(args),
        Command::EstimatePropensity(args) => estimate_propensity(args),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn load_binarized(path: &Path, threshold: Option<u8>) -> Result<Dataset> {
    let raw = parse_svmlight(path)?;
    let t = threshold.unwrap_or_else(|| default_threshold(raw.max_grade()));
    Ok(binarize(&raw, t))
}

/// Resolve the ranker that produced (or will produce) the logged rankings.
fn production_scorer(
    model_path: &Option<PathBuf>,
    data_path: &Option<PathBuf>,
    threshold: Option<u8>,
) -> Result<Box<dyn Scorer>> {
    match (model_path, data_path) {
        (Some(path), None) => Ok(Box::new(load_model(path)?)),
        (None, Some(path)) => {
            let slice = load_binarized(path, threshold)?;
            Ok(Box::new(train_production_ranker(&slice, &SgdConfig::default())?))
        }
        _ => Err(PrsError::InvalidArgument(
            "exactly one of --production-model and --production-data is required".into(),
        )),
    }
}

fn prepare(args: PrepareArgs) -> Result<()> {
    std::fs::create_dir_all(&args.outdir)?;
    let (train, test) = if args.synthetic || args.input.is_none() {
        if args.input.is_none() && !args.synthetic {
            return Err(PrsError::InvalidArgument(
                "pass --input FILE or --synthetic".into(),
            ));
        }
        let corpus = synthetic_corpus(&SyntheticConfig {
            train_queries: args.train_queries,
            test_queries: args.test_queries,
            docs_per_query: args.docs_per_query,
            seed: args.seed,
            ..SyntheticConfig::default()
        })?;
        (corpus.train, Some(corpus.test))
    } else {
        let raw = parse_svmlight(args.input.as_ref().expect("checked"))?;
        let t = args.threshold.unwrap_or_else(|| default_threshold(raw.max_grade()));
        (binarize(&raw, t), None)
    };
    let threshold = args.threshold.unwrap_or(train.binarization_threshold);
    let train = binarize(&train, threshold);

    let (production, pool) = split_production(&train, args.fraction, args.seed)?;
    let production_path = args.outdir.join("production.txt");
    let pool_path = args.outdir.join("train.txt");
    write_svmlight(&production, &production_path)?;
    write_svmlight(&pool, &pool_path)?;
    println!(
        "production: {} queries -> {}",
        production.n_queries(),
        production_path.display()
    );
    println!("train pool: {} queries -> {}", pool.n_queries(), pool_path.display());
    if let Some(test) = test {
        let test = binarize(&test, threshold);
        let test_path = args.outdir.join("test.txt");
        write_svmlight(&test, &test_path)?;
        println!("test: {} queries -> {}", test.n_queries(), test_path.display());
    }
    println!("binarization threshold: {threshold}");
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let pool = load_binarized(&args.pool, args.threshold)?;
    let scorer = production_scorer(&args.production_model, &args.production_data, args.threshold)?;
    let log = match args.sessions {
        Some(n) => simulate_sessions(
            scorer.as_ref(),
            &pool,
            n,
            args.eta,
            args.mu,
            args.seed,
            args.oracle,
        )?,
        None => simulate_clicks(
            scorer.as_ref(),
            &pool,
            args.clicks,
            args.eta,
            args.mu,
            args.seed,
            args.oracle,
        )?,
    };
    write_click_log(&log, &args.out)?;
    println!(
        "wrote {} sessions with {} clicks -> {}",
        log.sessions.len(),
        log.total_clicks(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let learner = Learner::parse(&args.learner)?;
    let kind = SchemeKind::parse(&args.scheme)?;
    let strategy = PairStrategy::parse(&args.strategy)?;
    let pool = load_binarized(&args.pool, args.threshold)?;
    let mut log = read_click_log(&args.log)?;
    if let Some(assumed) = args.assumed_eta {
        log = with_assumed_eta(&log, assumed)?;
    } else if let Some(path) = &args.ratios {
        let ratios = prs_ltr::propensity::clamp_ratios(&read_ratios_csv(path)?)?;
        log = with_estimated_ratios(&log, &ratios)?;
    }
    let gamma = args.gamma.unwrap_or(match learner {
        Learner::Logreg => 1.0,
        Learner::Lambdamart => f64::INFINITY,
    });
    let scheme = WeightScheme::new(kind, gamma, args.clip_inverse.unwrap_or(f64::INFINITY))?;

    match learner {
        Learner::Logreg => {
            let cfg = SgdConfig {
                epochs: args.epochs.unwrap_or(30),
                learning_rate: args.learning_rate.unwrap_or(0.5),
                l2_lambda: args.l2.unwrap_or(1e-4),
                batch_sessions: args.batch_sessions,
                seed: args.seed,
            };
            let (model, trace) = train_logreg_with_trace(&log, &pool, strategy, &scheme, &cfg)?;
            model.save(&args.out)?;
            println!(
                "logreg {}: objective {:.6} -> {:.6} over {} epochs",
                kind.name(),
                trace.first().copied().unwrap_or(f64::NAN),
                trace.last().copied().unwrap_or(f64::NAN),
                trace.len()
            );
        }
        Learner::Lambdamart => {
            if strategy != PairStrategy::ClickedVsNonClicked {
                return Err(PrsError::InvalidArgument(
                    "the boosted learner always pairs clicked against non-clicked documents"
                        .into(),
                ));
            }
            let cfg = BoostConfig {
                num_trees: args.trees.unwrap_or(300),
                learning_rate: args.learning_rate.unwrap_or(0.1),
                num_leaves: args.leaves,
                min_docs_per_leaf: args.min_docs_per_leaf,
                l2_lambda: args.l2.unwrap_or(1.0),
                sigma: args.sigma,
                max_bins: BoostConfig::default().max_bins,
                seed: args.seed,
            };
            let model = train_lambdamart(&log, &pool, &scheme, &cfg)?;
            model.save(&args.out)?;
            println!(
                "lambdamart {}: {} trees, {} leaves",
                kind.name(),
                cfg.num_trees,
                cfg.num_leaves
            );
        }
    }
    println!("model -> {}", args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let test = load_binarized(&args.test, args.threshold)?;
    let report = evaluate_model(&args.model, &test, &args.ks, args.per_query.is_some())?;
    for (k, v) in &report.ndcg_at_k {
        println!("ndcg@{k}: {v:.6}");
    }
    println!("map: {:.6}", report.map_score);
    println!("arp: {:.6}", report.arp);
    println!(
        "queries evaluated: {} of {}",
        report.evaluated_queries, report.total_queries
    );
    if let Some(path) = &args.per_query {
        let per_query = report.per_query.as_ref().expect("requested per-query");
        let mut out = String::from("qid");
        for k in &args.ks {
            write!(out, ",ndcg@{k}").expect("string write");
        }
        out.push_str(",ap,arp\n");
        for q in per_query {
            write!(out, "{}", q.qid).expect("string write");
            for k in &args.ks {
                match q.ndcg.get(k).copied().flatten() {
                    Some(v) => write!(out, ",{v:.6}").expect("string write"),
                    None => out.push(','),
                }
            }
            match q.ap {
                Some(v) => writeln!(out, ",{v:.6},{:.6}", q.arp).expect("string write"),
                None => writeln!(out, ",,{:.6}", q.arp).expect("string write"),
            }
        }
        std::fs::write(path, out)?;
        println!("per-query metrics -> {}", path.display());
    }
    if let (Some(log_path), Some(pool_path)) = (&args.wmrr_log, &args.wmrr_pool) {
        let pool = load_binarized(pool_path, args.threshold)?;
        let log = read_click_log(log_path)?;
        let model = load_model(&args.model)?;
        println!("wmrr: {:.6}", wmrr_of_model(&model, &pool, &log)?);
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if args.synthetic && cfg.synthetic.is_none() {
        cfg.synthetic = Some(SyntheticConfig::default());
    }
    if let Some(path) = args.train {
        cfg.train_path = Some(path);
    }
    if let Some(path) = args.test {
        cfg.test_path = Some(path);
    }
    if let Some(learner) = &args.learner {
        cfg.learner = Learner::parse(learner)?;
    }
    if let Some(schemes) = &args.schemes {
        cfg.schemes = schemes
            .iter()
            .map(|s| SchemeKind::parse(s))
            .collect::<Result<_>>()?;
    }
    if let Some(strategies) = &args.strategies {
        cfg.strategies = strategies
            .iter()
            .map(|s| PairStrategy::parse(s))
            .collect::<Result<_>>()?;
    }
    if let Some(eta) = args.eta {
        cfg.eta_grid = eta;
    }
    if let Some(mu) = args.mu {
        cfg.mu_grid = mu;
    }
    if let Some(clicks) = args.clicks {
        cfg.click_grid = clicks;
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if args.gamma.is_some() {
        cfg.clip_gamma = args.gamma;
    }
    if args.clip_inverse.is_some() {
        cfg.clip_inverse = args.clip_inverse;
    }
    if let Some(grid) = args.assumed_eta {
        cfg.propensity_source = PropensitySource::Misspecified { eta_grid: grid };
    } else if let Some(sessions) = args.estimate_sessions {
        cfg.propensity_source = PropensitySource::Estimated {
            sessions,
            max_position: 0,
        };
    }

    let rows = run_experiment(&cfg)?;
    write_rows_csv(&rows, &args.out, !args.no_timestamp)?;
    println!("wrote {} rows -> {}", rows.len(), args.out.display());
    if args.gnuplot {
        let gp_path = args.out.with_extension("gp");
        std::fs::write(&gp_path, gnuplot_layout(&args.out))?;
        println!("gnuplot layout -> {}", gp_path.display());
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let report = oracle_suite(args.seed, args.trials)?;
    for check in &report.checks {
        let status = if check.passed { "ok  " } else { "FAIL" };
        println!("{status} {} ({})", check.name, check.detail);
    }
    if report.all_passed() {
        println!("all {} checks passed over {} trials", report.checks.len(), report.trials);
        Ok(())
    } else {
        Err(PrsError::Degenerate("verification suite failed".into()))
    }
}

fn estimate_propensity(args: EstimatePropensityArgs) -> Result<()> {
    let pool = load_binarized(&args.pool, args.threshold)?;
    let scorer = production_scorer(&args.production_model, &args.production_data, args.threshold)?;
    let ratios = match args.mode.as_str() {
        "swap" => {
            let log = simulate_swap_experiment(
                scorer.as_ref(),
                &pool,
                args.sessions,
                args.eta,
                args.mu,
                args.seed,
                args.max_position,
            )?;
            if let Some(path) = &args.counts_out {
                write_swap_log(&log, path)?;
                println!("swap tallies -> {}", path.display());
            }
            estimate_ratios(&log)?
        }
        "uniform" => {
            if args.counts_out.is_some() {
                log::warn!("--counts-out applies to swap mode only; skipping");
            }
            let log = simulate_uniform_experiment(
                scorer.as_ref(),
                &pool,
                args.sessions,
                args.eta,
                args.mu,
                args.seed,
                args.max_position,
            )?;
            estimate_ratios_uniform(&log)?
        }
        other => {
            return Err(PrsError::InvalidArgument(format!(
                "unknown mode `{other}` (expected swap or uniform)"
            )))
        }
    };
    for (idx, r) in ratios.iter().enumerate() {
        println!("position {:>2}: ratio {r:.4}", idx + 1);
    }
    write_ratios_csv(&ratios, &args.out)?;
    println!("ratios -> {}", args.out.display());
    Ok(())
}
