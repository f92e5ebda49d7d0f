//! Experiment orchestration: load or synthesize a corpus, train a production
//! ranker on a small labeled slice, sweep grids over (scheme, strategy, eta,
//! mu, click budget, seed), and emit a CSV with per-seed rows plus mean and
//! standard deviation per grid cell.
//!
//! Seeds sharing a grid point also share the click log, so scheme
//! comparisons within a seed are paired. Everything is deterministic given
//! the config, which makes rerun-to-verify cheap.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    binarize, default_threshold, parse_svmlight, split_production, synthetic_corpus, Dataset,
    SyntheticConfig,
};
use crate::error::{PrsError, Result};
use crate::learn::boost::train_lambdamart;
use crate::learn::linear::{train_logreg, LinearRanker};
use crate::learn::{load_model, BoostConfig, Scorer, SgdConfig};
use crate::metrics::{evaluate_ranker, MetricReport};
use crate::propensity::{clamp_ratios, estimate_ratios, simulate_swap_experiment};
use crate::simulate::{
    simulate_clicks, train_production_ranker, with_assumed_eta, with_estimated_ratios, ClickLog,
};
use crate::weighting::{PairStrategy, SchemeKind, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Logreg,
    Lambdamart,
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::Logreg => "logreg",
            Learner::Lambdamart => "lambdamart",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(Learner::Logreg),
            "lambdamart" => Ok(Learner::Lambdamart),
            _ => Err(PrsError::InvalidArgument(format!(
                "unknown learner `{s}` (expected logreg or lambdamart)"
            ))),
        }
    }
}

/// Where the training-time propensities come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PropensitySource {
    /// Use the propensities the simulator recorded (the true severities).
    True,
    /// Rewrite propensities with each assumed severity in the grid; clicks
    /// stay generated under the config's true eta.
    Misspecified { eta_grid: Vec<f64> },
    /// Estimate per-position ratios from an adjacent-swap intervention of
    /// the given size before each training run.
    Estimated { sessions: u64, max_position: usize },
}

fn default_production_fraction() -> f64 {
    0.01
}
fn default_split_seed() -> u64 {
    42
}
fn default_eta_grid() -> Vec<f64> {
    vec![1.0]
}
fn default_mu_grid() -> Vec<f64> {
    vec![0.1]
}
fn default_click_grid() -> Vec<u64> {
    vec![128_000]
}
fn default_schemes() -> Vec<SchemeKind> {
    vec![
        SchemeKind::Naive,
        SchemeKind::Ips,
        SchemeKind::Pns,
        SchemeKind::Prs,
    ]
}
fn default_strategies() -> Vec<PairStrategy> {
    vec![PairStrategy::ClickedVsNonClicked]
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Display name for the CSV; defaults to the train file stem or
    /// "synthetic".
    pub dataset: Option<String>,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    /// Labeled slice for the production ranker. When absent, a
    /// production_fraction share of the training queries is carved out.
    pub production_path: Option<PathBuf>,
    /// Generate a corpus instead of reading files.
    pub synthetic: Option<SyntheticConfig>,
    /// Relevance binarization threshold; defaults per the labeled grade
    /// range.
    pub binarization_threshold: Option<u8>,
    pub production_fraction: f64,
    pub split_seed: u64,
    pub eta_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub click_grid: Vec<u64>,
    pub schemes: Vec<SchemeKind>,
    pub strategies: Vec<PairStrategy>,
    pub learner: Learner,
    /// Ratio-weight cap; None picks the learner default (1 for logreg,
    /// uncapped for lambdamart).
    pub clip_gamma: Option<f64>,
    /// Cap on 1/p; None means uncapped.
    pub clip_inverse: Option<f64>,
    pub seeds: Vec<u64>,
    pub propensity_source: PropensitySource,
    pub sgd: SgdConfig,
    pub boost: BoostConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            train_path: None,
            test_path: None,
            production_path: None,
            synthetic: None,
            binarization_threshold: None,
            production_fraction: default_production_fraction(),
            split_seed: default_split_seed(),
            eta_grid: default_eta_grid(),
            mu_grid: default_mu_grid(),
            click_grid: default_click_grid(),
            schemes: default_schemes(),
            strategies: default_strategies(),
            learner: Learner::Logreg,
            clip_gamma: None,
            clip_inverse: None,
            seeds: default_seeds(),
            propensity_source: PropensitySource::True,
            sgd: SgdConfig::default(),
            boost: BoostConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)?;
        serde_json::from_str(&content)
            .map_err(|e| PrsError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PrsError::Config(m));
        if self.eta_grid.is_empty() || self.mu_grid.is_empty() || self.click_grid.is_empty() {
            return bad("eta, mu and click grids must be nonempty".into());
        }
        if self.schemes.is_empty() || self.strategies.is_empty() || self.seeds.is_empty() {
            return bad("schemes, strategies and seeds must be nonempty".into());
        }
        if self.eta_grid.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return bad(format!("eta grid must be finite and >= 0: {:?}", self.eta_grid));
        }
        if self.mu_grid.iter().any(|&m| !(0.0..0.5).contains(&m)) {
            return bad(format!("mu grid must lie in [0, 0.5): {:?}", self.mu_grid));
        }
        if self.click_grid.iter().any(|&c| c == 0) {
            return bad("click budgets must be >= 1".into());
        }
        if !(self.production_fraction > 0.0 && self.production_fraction < 1.0) {
            return bad(format!(
                "production_fraction must lie in (0, 1), got {}",
                self.production_fraction
            ));
        }
        if self.synthetic.is_some() && (self.train_path.is_some() || self.test_path.is_some()) {
            return bad("choose either synthetic or train/test paths, not both".into());
        }
        if self.synthetic.is_none() && (self.train_path.is_none() || self.test_path.is_none()) {
            return bad("train_path and test_path are required without a synthetic corpus".into());
        }
        if self.learner == Learner::Lambdamart
            && self
                .strategies
                .iter()
                .any(|&s| s != PairStrategy::ClickedVsNonClicked)
        {
            return bad(
                "the boosted learner always pairs clicked against non-clicked documents".into(),
            );
        }
        match &self.propensity_source {
            PropensitySource::True => {}
            PropensitySource::Misspecified { eta_grid } => {
                if eta_grid.is_empty() || eta_grid.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
                    return bad("misspecified eta grid must be nonempty, finite and >= 0".into());
                }
            }
            PropensitySource::Estimated { sessions, .. } => {
                if *sessions == 0 {
                    return bad("propensity estimation needs >= 1 intervention session".into());
                }
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        if let Some(name) = &self.dataset {
            return name.clone();
        }
        self.train_path
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "synthetic".into())
    }

    fn effective_scheme(&self, kind: SchemeKind) -> Result<WeightScheme> {
        let gamma = self.clip_gamma.unwrap_or(match self.learner {
            Learner::Logreg => 1.0,
            Learner::Lambdamart => f64::INFINITY,
        });
        WeightScheme::new(kind, gamma, self.clip_inverse.unwrap_or(f64::INFINITY))
    }
}

/// Fixed inputs shared by every grid cell.
pub struct ExperimentData {
    pub production: LinearRanker,
    /// Training queries the click simulator runs over (production slice
    /// excluded when it was split off).
    pub pool: Dataset,
    pub test: Dataset,
    pub name: String,
}

pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    cfg.validate()?;
    let (mut train, mut test) = if let Some(sc) = &cfg.synthetic {
        let corpus = synthetic_corpus(sc)?;
        (corpus.train, corpus.test)
    } else {
        let train = parse_svmlight(cfg.train_path.as_ref().expect("validated"))?;
        let test = parse_svmlight(cfg.test_path.as_ref().expect("validated"))?;
        let threshold = default_threshold(train.max_grade());
        (binarize(&train, threshold), binarize(&test, threshold))
    };
    if let Some(t) = cfg.binarization_threshold {
        train = binarize(&train, t);
        test = binarize(&test, t);
    }
    let (production_set, pool) = match &cfg.production_path {
        Some(path) => {
            let raw = parse_svmlight(path)?;
            let slice = binarize(&raw, train.binarization_threshold);
            (slice, train)
        }
        None => split_production(&train, cfg.production_fraction, cfg.split_seed)?,
    };
    let production = train_production_ranker(&production_set, &cfg.sgd)?;
    Ok(ExperimentData {
        production,
        pool,
        test,
        name: cfg.dataset_name(),
    })
}

/// One output line of the sweep CSV. The seed column holds a seed number or
/// the literal "mean"/"std" for the per-cell summary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub dataset: String,
    pub learner: Learner,
    pub scheme: SchemeKind,
    pub strategy: PairStrategy,
    pub eta: f64,
    pub eta_assumed: String,
    pub mu: f64,
    pub n_clicks: u64,
    pub seed: String,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub map: f64,
    pub arp: f64,
    pub wall_seconds: f64,
}

pub const CSV_HEADER: &str =
    "dataset,learner,scheme,strategy,eta,eta_assumed,mu,n_clicks,seed,ndcg@5,ndcg@10,map,arp,wall_seconds";

impl RunRow {
    fn csv_line(&self, with_wall: bool) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.dataset,
            self.learner.name(),
            self.scheme.name(),
            self.strategy.name(),
            self.eta,
            self.eta_assumed,
            self.mu,
            self.n_clicks,
            self.seed,
            self.ndcg5,
            self.ndcg10,
            self.map,
            self.arp,
            if with_wall { self.wall_seconds } else { 0.0 },
        )
    }
}

/// Write the sweep CSV. With `stamp` set a generation-time comment line is
/// included and rows keep their wall-clock column; without it the output is
/// byte-stable across reruns.
pub fn write_rows_csv(rows: &[RunRow], path: &Path, stamp: bool) -> Result<()> {
    let mut out = String::new();
    if stamp {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(out, "# generated at unix time {now}").expect("string write");
    }
    writeln!(out, "{CSV_HEADER}").expect("string write");
    for row in rows {
        writeln!(out, "{}", row.csv_line(stamp)).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Metrics of one successful training run.
#[derive(Debug, Clone, Copy)]
struct CellMetrics {
    ndcg5: f64,
    ndcg10: f64,
    map: f64,
    arp: f64,
    wall_seconds: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    scheme: SchemeKind,
    strategy: PairStrategy,
    variant: usize,
}

/// A propensity variant of one simulated log: the label that lands in the
/// eta_assumed column plus the rewritten log (None = train on the log as
/// recorded).
struct Variant {
    label: String,
    log: Option<ClickLog>,
}

fn shortest(v: f64) -> String {
    format!("{v}")
}

/// Seed offset for intervention traffic so estimation never replays the
/// click-log stream.
const SWAP_SEED_SALT: u64 = 0x5357_4150;

fn build_variants(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    base: &ClickLog,
    eta: f64,
    mu: f64,
    seed: u64,
) -> Vec<Option<Variant>> {
    match &cfg.propensity_source {
        PropensitySource::True => vec![Some(Variant {
            label: shortest(eta),
            log: None,
        })],
        PropensitySource::Misspecified { eta_grid } => eta_grid
            .iter()
            .map(|&assumed| match with_assumed_eta(base, assumed) {
                Ok(log) => Some(Variant {
                    label: shortest(assumed),
                    log: Some(log),
                }),
                Err(e) => {
                    log::warn!("assumed eta {assumed} rejected: {e}");
                    None
                }
            })
            .collect(),
        PropensitySource::Estimated {
            sessions,
            max_position,
        } => {
            let attempt = || -> Result<ClickLog> {
                let swap = simulate_swap_experiment(
                    &data.production,
                    &data.pool,
                    *sessions,
                    eta,
                    mu,
                    seed.wrapping_add(SWAP_SEED_SALT),
                    *max_position,
                )?;
                let ratios = clamp_ratios(&estimate_ratios(&swap)?)?;
                with_estimated_ratios(base, &ratios)
            };
            vec![match attempt() {
                Ok(log) => Some(Variant {
                    label: "estimated".into(),
                    log: Some(log),
                }),
                Err(e) => {
                    log::warn!("propensity estimation failed at eta={eta} mu={mu} seed={seed}: {e}");
                    None
                }
            }]
        }
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    log: &ClickLog,
    cell: &Cell,
    seed: u64,
) -> Result<CellMetrics> {
    let started = Instant::now();
    let scheme = cfg.effective_scheme(cell.scheme)?;
    let report = match cfg.learner {
        Learner::Logreg => {
            let sgd = SgdConfig { seed, ..cfg.sgd };
            let model = train_logreg(log, &data.pool, cell.strategy, &scheme, &sgd)?;
            evaluate_ranker(&model, &data.test, &[5, 10], false)?
        }
        Learner::Lambdamart => {
            let boost = BoostConfig { seed, ..cfg.boost };
            let model = train_lambdamart(log, &data.pool, &scheme, &boost)?;
            evaluate_ranker(&model, &data.test, &[5, 10], false)?
        }
    };
    Ok(CellMetrics {
        ndcg5: report.ndcg_at_k[&5],
        ndcg10: report.ndcg_at_k[&10],
        map: report.map_score,
        arp: report.arp,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run the whole grid. Per grid point each seed simulates one click log that
/// every (scheme, strategy, propensity-variant) cell shares; failed cells
/// are logged and skipped while the rest proceed.
pub fn run_experiment_with_data(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<Vec<RunRow>> {
    cfg.validate()?;
    let variant_count = match &cfg.propensity_source {
        PropensitySource::True | PropensitySource::Estimated { .. } => 1,
        PropensitySource::Misspecified { eta_grid } => eta_grid.len(),
    };
    let mut cells = Vec::new();
    for &scheme in &cfg.schemes {
        for &strategy in &cfg.strategies {
            for variant in 0..variant_count {
                cells.push(Cell {
                    scheme,
                    strategy,
                    variant,
                });
            }
        }
    }

    // The oracle pair strategy reads hidden relevance off the log.
    let keep_hidden = cfg
        .strategies
        .iter()
        .any(|s| *s == PairStrategy::ClickedVsIrrelevantOracle);

    let mut rows = Vec::new();
    for &eta in &cfg.eta_grid {
        for &mu in &cfg.mu_grid {
            for &clicks in &cfg.click_grid {
                // (cells x labels x metrics) per seed, in seed order.
                let per_seed: Vec<Vec<Option<(String, CellMetrics)>>> = cfg
                    .seeds
                    .par_iter()
                    .map(|&seed| {
                        let base = match simulate_clicks(
                            &data.production,
                            &data.pool,
                            clicks,
                            eta,
                            mu,
                            seed,
                            keep_hidden,
                        ) {
                            Ok(log) => log,
                            Err(e) => {
                                log::warn!(
                                    "click simulation failed at eta={eta} mu={mu} clicks={clicks} seed={seed}: {e}"
                                );
                                return vec![None; cells.len()];
                            }
                        };
                        let variants = build_variants(cfg, data, &base, eta, mu, seed);
                        cells
                            .par_iter()
                            .map(|cell| {
                                let variant = variants[cell.variant].as_ref()?;
                                let log = variant.log.as_ref().unwrap_or(&base);
                                match run_cell(cfg, data, log, cell, seed) {
                                    Ok(m) => Some((variant.label.clone(), m)),
                                    Err(e) => {
                                        log::warn!(
                                            "cell failed (scheme={} strategy={} eta={eta} mu={mu} clicks={clicks} seed={seed}): {e}",
                                            cell.scheme.name(),
                                            cell.strategy.name()
                                        );
                                        None
                                    }
                                }
                            })
                            .collect()
                    })
                    .collect();

                for (ci, cell) in cells.iter().enumerate() {
                    let make_row = |seed: String, label: &str, m: &CellMetrics| RunRow {
                        dataset: data.name.clone(),
                        learner: cfg.learner,
                        scheme: cell.scheme,
                        strategy: cell.strategy,
                        eta,
                        eta_assumed: label.to_string(),
                        mu,
                        n_clicks: clicks,
                        seed,
                        ndcg5: m.ndcg5,
                        ndcg10: m.ndcg10,
                        map: m.map,
                        arp: m.arp,
                        wall_seconds: m.wall_seconds,
                    };
                    let mut collected: Vec<(&str, &CellMetrics)> = Vec::new();
                    for (si, seed) in cfg.seeds.iter().enumerate() {
                        if let Some((label, m)) = &per_seed[si][ci] {
                            rows.push(make_row(seed.to_string(), label, m));
                            collected.push((label, m));
                        }
                    }
                    if collected.is_empty() {
                        continue;
                    }
                    let label = collected[0].0;
                    let col = |f: fn(&CellMetrics) -> f64| -> Vec<f64> {
                        collected.iter().map(|(_, m)| f(m)).collect()
                    };
                    let (n5m, n5s) = mean_std(&col(|m| m.ndcg5));
                    let (n10m, n10s) = mean_std(&col(|m| m.ndcg10));
                    let (mapm, maps) = mean_std(&col(|m| m.map));
                    let (arpm, arps) = mean_std(&col(|m| m.arp));
                    let (wallm, walls) = mean_std(&col(|m| m.wall_seconds));
                    let mean = CellMetrics {
                        ndcg5: n5m,
                        ndcg10: n10m,
                        map: mapm,
                        arp: arpm,
                        wall_seconds: wallm,
                    };
                    let std = CellMetrics {
                        ndcg5: n5s,
                        ndcg10: n10s,
                        map: maps,
                        arp: arps,
                        wall_seconds: walls,
                    };
                    rows.push(make_row("mean".into(), label, &mean));
                    rows.push(make_row("std".into(), label, &std));
                }
            }
        }
    }
    Ok(rows)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRow>> {
    let data = load_experiment_data(cfg)?;
    run_experiment_with_data(cfg, &data)
}

/// Evaluate a serialized model against a labeled dataset.
pub fn evaluate_model(
    model_path: &Path,
    test: &Dataset,
    ks: &[usize],
    per_query: bool,
) -> Result<MetricReport> {
    let model = load_model(model_path)?;
    if model.feature_dim() != test.feature_dim {
        return Err(PrsError::InvalidArgument(format!(
            "model expects {} features but the dataset has {}",
            model.feature_dim(),
            test.feature_dim
        )));
    }
    evaluate_ranker(&model, test, ks, per_query)
}

/// Weighted mean reciprocal rank of a model over a click log: each click
/// contributes the reciprocal of the clicked document's 1-based rank under
/// the model, weighted by the inverse of its recorded propensity.
pub fn wmrr_of_model(
    scorer: &dyn Scorer,
    dataset: &Dataset,
    log: &ClickLog,
) -> Result<f64> {
    let index = dataset.qid_index();
    let mut entries = Vec::new();
    for (si, session) in log.sessions.iter().enumerate() {
        let &qi = index.get(session.qid.as_str()).ok_or_else(|| {
            PrsError::InvalidArgument(format!(
                "session {si} references qid `{}` missing from the dataset",
                session.qid
            ))
        })?;
        let query = &dataset.queries[qi];
        let scores: Vec<f64> = query.docs.iter().map(|d| scorer.score(&d.features)).collect();
        let order = crate::metrics::rank_by_scores(&scores);
        let mut rank_of = vec![0usize; order.len()];
        for (pos, &doc) in order.iter().enumerate() {
            rank_of[doc] = pos + 1;
        }
        for (m, &clicked) in session.clicks.iter().enumerate() {
            if clicked == 1 {
                let doc = session.presented_order[m];
                entries.push((rank_of[doc], 1.0 / session.propensities[m]));
            }
        }
    }
    crate::metrics::wmrr(&entries)
}

/// A gnuplot script skeleton for a sweep CSV: documents the column layout
/// and plots the per-cell means of ndcg@10 against the click budget, one
/// line per scheme.
pub fn gnuplot_layout(csv_path: &Path) -> String {
    let file = csv_path.display();
    let mut out = String::new();
    writeln!(out, "# Column layout of {file}:").expect("string write");
    writeln!(out, "#   1 dataset   2 learner   3 scheme      4 strategy").expect("string write");
    writeln!(out, "#   5 eta       6 eta_assumed   7 mu      8 n_clicks").expect("string write");
    writeln!(out, "#   9 seed (number, or mean/std summary rows)").expect("string write");
    writeln!(out, "#  10 ndcg@5   11 ndcg@10   12 map   13 arp   14 wall_seconds").expect("string write");
    out.push_str("set datafile separator ','\n");
    out.push_str("set key outside right\n");
    out.push_str("set logscale x 2\n");
    out.push_str("set xlabel 'clicks'\n");
    out.push_str("set ylabel 'ndcg@10'\n");
    out.push_str("plot \\\n");
    let schemes = ["naive", "ips", "pns", "prs"];
    for (i, s) in schemes.iter().enumerate() {
        let sep = if i + 1 < schemes.len() { ", \\" } else { "" };
        writeln!(
            out,
            "  '< awk -F, '\\''$3 == \"{s}\" && $9 == \"mean\"'\\'' {file}' using 8:11 \
             with linespoints title '{s}'{sep}"
        )
        .expect("string write");
    }
    out
}
