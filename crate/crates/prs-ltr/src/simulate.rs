//! Production ranker training and synthesis of position-biased click logs.
//!
//! The click model is the position-based examination model: the doc at
//! 1-based rank k is observed with probability (1/k)^eta independently of
//! everything else; an observed doc is clicked with probability 1-mu if
//! relevant and mu if irrelevant. With mu = 0 a click happens exactly when a
//! relevant doc is observed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{PrsError, Result};
use crate::learn::linear::{train_full_info, LinearRanker};
use crate::learn::{Scorer, SgdConfig};
use crate::metrics::rank_by_scores;

/// Observation probability (1/rank)^eta with 1-based rank.
pub fn observation_propensity(rank: usize, eta: f64) -> Result<f64> {
    if rank == 0 {
        return Err(PrsError::InvalidArgument(
            "propensity ranks are 1-based".into(),
        ));
    }
    if !(eta >= 0.0) {
        return Err(PrsError::InvalidArgument(format!(
            "bias severity eta must be nonnegative, got {eta}"
        )));
    }
    Ok((1.0 / rank as f64).powf(eta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityModel {
    pub eta: f64,
}

impl PropensityModel {
    pub fn new(eta: f64) -> Result<Self> {
        observation_propensity(1, eta)?;
        Ok(PropensityModel { eta })
    }

    pub fn propensity(&self, rank: usize) -> Result<f64> {
        observation_propensity(rank, self.eta)
    }
}

/// Click noise: eps_plus = 1-mu for observed relevant docs, eps_minus = mu
/// for observed irrelevant docs. mu < 0.5 keeps eps_plus > eps_minus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub mu: f64,
}

impl NoiseModel {
    pub fn new(mu: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&mu) {
            return Err(PrsError::InvalidArgument(format!(
                "noise level mu must lie in [0, 0.5), got {mu}"
            )));
        }
        Ok(NoiseModel { mu })
    }

    pub fn click_prob(&self, relevant: bool) -> f64 {
        if relevant {
            1.0 - self.mu
        } else {
            self.mu
        }
    }
}

/// One logged impression. All per-position vectors (`clicks`, `propensities`,
/// hidden fields) align to `presented_order`: entry m describes the document
/// `presented_order[m]` shown at 1-based rank m+1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickSession {
    pub qid: String,
    pub presented_order: Vec<usize>,
    pub clicks: Vec<u8>,
    pub propensities: Vec<f64>,
    pub hidden_observation: Option<Vec<u8>>,
    pub hidden_relevance: Option<Vec<u8>>,
}

impl ClickSession {
    pub fn n_clicks(&self) -> u64 {
        self.clicks.iter().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickLogConfig {
    pub eta: f64,
    pub mu: f64,
    pub seed: u64,
    /// Click target the simulation ran until. 0 for logs generated with a
    /// fixed session count instead of a click target.
    pub total_clicks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    pub sessions: Vec<ClickSession>,
    pub config: ClickLogConfig,
}

impl ClickLog {
    pub fn total_clicks(&self) -> u64 {
        self.sessions.iter().map(|s| s.n_clicks()).sum()
    }

    pub fn is_oracle(&self) -> bool {
        self.sessions
            .first()
            .map(|s| s.hidden_relevance.is_some())
            .unwrap_or(false)
    }
}

/// Fit the weak initial ranker on a labeled slice using full-information
/// pairs (graded label of i above graded label of j).
pub fn train_production_ranker(production: &Dataset, cfg: &SgdConfig) -> Result<LinearRanker> {
    if production.queries.is_empty() {
        return Err(PrsError::EmptyDataset("production slice".into()));
    }
    train_full_info(production, cfg)
}

/// Draw observation and click bits for one presented list. Exactly one
/// uniform draw per position decides observation; a second draw happens only
/// for observed positions, so the stream consumption is a deterministic
/// function of the outcomes.
pub(crate) fn draw_session_clicks(
    rng: &mut ChaCha8Rng,
    relevance_by_pos: &[u8],
    propensity: &PropensityModel,
    noise: &NoiseModel,
) -> (Vec<u8>, Vec<u8>, Vec<f64>) {
    let n = relevance_by_pos.len();
    let mut observed = vec![0u8; n];
    let mut clicks = vec![0u8; n];
    let mut props = vec![0.0f64; n];
    for m in 0..n {
        let p = propensity
            .propensity(m + 1)
            .expect("rank m+1 is positive");
        props[m] = p;
        // rng.gen::<f64>() is uniform on [0,1), so p = 1 always observes and
        // a click probability of 0 never fires; mu = 0 reproduces c = o AND r
        // exactly rather than approximately.
        if rng.gen::<f64>() < p {
            observed[m] = 1;
            let q = noise.click_prob(relevance_by_pos[m] == 1);
            if rng.gen::<f64>() < q {
                clicks[m] = 1;
            }
        }
    }
    (observed, clicks, props)
}

struct PresentedPool<'a> {
    pool: &'a Dataset,
    orders: Vec<Vec<usize>>,
}

impl<'a> PresentedPool<'a> {
    fn build(scorer: &dyn Scorer, pool: &'a Dataset) -> Result<Self> {
        if pool.queries.is_empty() {
            return Err(PrsError::EmptyDataset("click pool".into()));
        }
        let orders = pool
            .queries
            .iter()
            .map(|q| {
                let scores: Vec<f64> =
                    q.docs.iter().map(|d| scorer.score(&d.features)).collect();
                rank_by_scores(&scores)
            })
            .collect();
        Ok(PresentedPool { pool, orders })
    }

    fn session_inputs(&self, qi: usize) -> (&str, &Vec<usize>, Vec<u8>) {
        let query = &self.pool.queries[qi];
        let order = &self.orders[qi];
        let rel_by_pos: Vec<u8> = order
            .iter()
            .map(|&doc| query.binary_relevance[doc])
            .collect();
        (&query.qid, order, rel_by_pos)
    }
}

fn make_session(
    rng: &mut ChaCha8Rng,
    presented: &PresentedPool,
    qi: usize,
    propensity: &PropensityModel,
    noise: &NoiseModel,
    oracle: bool,
) -> ClickSession {
    let (qid, order, rel_by_pos) = presented.session_inputs(qi);
    let (observed, clicks, props) = draw_session_clicks(rng, &rel_by_pos, propensity, noise);
    ClickSession {
        qid: qid.to_string(),
        presented_order: order.clone(),
        clicks,
        propensities: props,
        hidden_observation: oracle.then_some(observed),
        hidden_relevance: oracle.then(|| rel_by_pos),
    }
}

/// Sample sessions (query uniform with replacement, ranked by `scorer`) until
/// the cumulative click count reaches `total_clicks`. Zero-click sessions are
/// retained. With `oracle` set, hidden observation/relevance vectors are
/// stored for verification; production-style logs omit them.
pub fn simulate_clicks(
    scorer: &dyn Scorer,
    pool: &Dataset,
    total_clicks: u64,
    eta: f64,
    mu: f64,
    seed: u64,
    oracle: bool,
) -> Result<ClickLog> {
    if total_clicks == 0 {
        return Err(PrsError::InvalidArgument(
            "total_clicks must be >= 1".into(),
        ));
    }
    let propensity = PropensityModel::new(eta)?;
    let noise = NoiseModel::new(mu)?;
    let presented = PresentedPool::build(scorer, pool)?;
    if mu == 0.0 && pool.queries.iter().all(|q| q.n_relevant() == 0) {
        return Err(PrsError::Degenerate(
            "noise-free simulation over a pool with no relevant documents never clicks".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions = Vec::new();
    let mut clicks_so_far = 0u64;
    while clicks_so_far < total_clicks {
        let qi = rng.gen_range(0..pool.queries.len());
        let session = make_session(&mut rng, &presented, qi, &propensity, &noise, oracle);
        clicks_so_far += session.n_clicks();
        sessions.push(session);
    }

    Ok(ClickLog {
        sessions,
        config: ClickLogConfig {
            eta,
            mu,
            seed,
            total_clicks,
        },
    })
}

/// Fixed-session-count variant used for calibration checks and randomization
/// experiments; config.total_clicks is recorded as 0.
pub fn simulate_sessions(
    scorer: &dyn Scorer,
    pool: &Dataset,
    n_sessions: u64,
    eta: f64,
    mu: f64,
    seed: u64,
    oracle: bool,
) -> Result<ClickLog> {
    if n_sessions == 0 {
        return Err(PrsError::InvalidArgument("n_sessions must be >= 1".into()));
    }
    let propensity = PropensityModel::new(eta)?;
    let noise = NoiseModel::new(mu)?;
    let presented = PresentedPool::build(scorer, pool)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions = (0..n_sessions)
        .map(|_| {
            let qi = rng.gen_range(0..pool.queries.len());
            make_session(&mut rng, &presented, qi, &propensity, &noise, oracle)
        })
        .collect();

    Ok(ClickLog {
        sessions,
        config: ClickLogConfig {
            eta,
            mu,
            seed,
            total_clicks: 0,
        },
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join_u8(v: &[u8]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Line-oriented click log format. Header carries the config; each session is
/// one tab-separated record: qid, presented doc indices, click bits,
/// propensities (17 significant digits), and in oracle mode the hidden
/// observation and relevance bits.
pub fn write_click_log(log: &ClickLog, path: &Path) -> Result<()> {
    let oracle = log.is_oracle();
    let mut out = String::new();
    writeln!(
        out,
        "#clicklog v1 eta={} mu={} seed={} total_clicks={} oracle={}",
        fmt_f64(log.config.eta),
        fmt_f64(log.config.mu),
        log.config.seed,
        log.config.total_clicks,
        u8::from(oracle),
    )
    .expect("string write");
    for s in &log.sessions {
        if s.qid.contains(['\t', '\n', ',']) {
            return Err(PrsError::InvalidArgument(format!(
                "qid `{}` contains a delimiter character",
                s.qid
            )));
        }
        let props = s
            .propensities
            .iter()
            .map(|&p| fmt_f64(p))
            .collect::<Vec<_>>()
            .join(",");
        write!(
            out,
            "{}\t{}\t{}\t{}",
            s.qid,
            join_usize(&s.presented_order),
            join_u8(&s.clicks),
            props
        )
        .expect("string write");
        if oracle {
            let obs = s.hidden_observation.as_ref().ok_or_else(|| {
                PrsError::InvalidArgument("mixed oracle and non-oracle sessions".into())
            })?;
            let rel = s.hidden_relevance.as_ref().ok_or_else(|| {
                PrsError::InvalidArgument("mixed oracle and non-oracle sessions".into())
            })?;
            write!(out, "\t{}\t{}", join_u8(obs), join_u8(rel)).expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_bits(line: usize, field: &str, name: &str) -> Result<Vec<u8>> {
    field
        .split(',')
        .map(|t| match t {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            _ => Err(PrsError::parse(line, format!("bad {name} bit `{t}`"))),
        })
        .collect()
}

pub fn read_click_log(path: &Path) -> Result<ClickLog> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| PrsError::parse(1, "missing click log header"))?;
    let rest = header
        .strip_prefix("#clicklog v1 ")
        .ok_or_else(|| PrsError::parse(1, "not a v1 click log"))?;
    let mut eta = None;
    let mut mu = None;
    let mut seed = None;
    let mut total_clicks = None;
    let mut oracle = None;
    for kv in rest.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PrsError::parse(1, format!("bad header field `{kv}`")))?;
        match k {
            "eta" => eta = Some(v.parse::<f64>().map_err(|_| PrsError::parse(1, "bad eta"))?),
            "mu" => mu = Some(v.parse::<f64>().map_err(|_| PrsError::parse(1, "bad mu"))?),
            "seed" => {
                seed = Some(v.parse::<u64>().map_err(|_| PrsError::parse(1, "bad seed"))?)
            }
            "total_clicks" => {
                total_clicks = Some(
                    v.parse::<u64>()
                        .map_err(|_| PrsError::parse(1, "bad total_clicks"))?,
                )
            }
            "oracle" => {
                oracle = Some(match v {
                    "0" => false,
                    "1" => true,
                    _ => return Err(PrsError::parse(1, "bad oracle flag")),
                })
            }
            _ => return Err(PrsError::parse(1, format!("unknown header field `{k}`"))),
        }
    }
    let (eta, mu, seed, total_clicks, oracle) = match (eta, mu, seed, total_clicks, oracle) {
        (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
        _ => return Err(PrsError::parse(1, "incomplete click log header")),
    };

    let mut sessions = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = if oracle { 6 } else { 4 };
        if fields.len() != expected {
            return Err(PrsError::parse(
                line_no,
                format!("expected {expected} fields, got {}", fields.len()),
            ));
        }
        let qid = fields[0].to_string();
        let presented_order: Vec<usize> = fields[1]
            .split(',')
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| PrsError::parse(line_no, format!("bad doc index `{t}`")))
            })
            .collect::<Result<_>>()?;
        let clicks = parse_bits(line_no, fields[2], "click")?;
        let propensities: Vec<f64> = fields[3]
            .split(',')
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| PrsError::parse(line_no, format!("bad propensity `{t}`")))
            })
            .collect::<Result<_>>()?;
        let n = presented_order.len();
        if clicks.len() != n || propensities.len() != n {
            return Err(PrsError::parse(line_no, "session field lengths differ"));
        }
        if propensities.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(PrsError::parse(line_no, "propensities must lie in (0,1]"));
        }
        let (hidden_observation, hidden_relevance) = if oracle {
            let obs = parse_bits(line_no, fields[4], "observation")?;
            let rel = parse_bits(line_no, fields[5], "relevance")?;
            if obs.len() != n || rel.len() != n {
                return Err(PrsError::parse(line_no, "session field lengths differ"));
            }
            (Some(obs), Some(rel))
        } else {
            (None, None)
        };
        sessions.push(ClickSession {
            qid,
            presented_order,
            clicks,
            propensities,
            hidden_observation,
            hidden_relevance,
        });
    }

    Ok(ClickLog {
        sessions,
        config: ClickLogConfig {
            eta,
            mu,
            seed,
            total_clicks,
        },
    })
}

/// Replace each session's recorded propensities with (1/rank)^assumed_eta.
/// Models training under a misspecified bias severity.
pub fn with_assumed_eta(log: &ClickLog, assumed_eta: f64) -> Result<ClickLog> {
    let model = PropensityModel::new(assumed_eta)?;
    let sessions = log
        .sessions
        .iter()
        .map(|s| {
            let propensities = (1..=s.presented_order.len())
                .map(|rank| model.propensity(rank).expect("positive rank"))
                .collect();
            ClickSession {
                propensities,
                ..s.clone()
            }
        })
        .collect();
    Ok(ClickLog {
        sessions,
        config: log.config,
    })
}

/// Replace recorded propensities with estimated per-position ratios
/// (1-based position k uses ratios[k-1]). Positions beyond the estimated
/// range reuse the last available ratio.
pub fn with_estimated_ratios(log: &ClickLog, ratios: &[f64]) -> Result<ClickLog> {
    if ratios.is_empty() || ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(PrsError::InvalidArgument(
            "estimated ratios must be nonempty and lie in (0,1]".into(),
        ));
    }
    let sessions = log
        .sessions
        .iter()
        .map(|s| {
            let propensities = (0..s.presented_order.len())
                .map(|m| ratios[m.min(ratios.len() - 1)])
                .collect();
            ClickSession {
                propensities,
                ..s.clone()
            }
        })
        .collect();
    Ok(ClickLog {
        sessions,
        config: log.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_corpus, SyntheticConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn propensity_examples() {
        assert_abs_diff_eq!(observation_propensity(1, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(observation_propensity(2, 1.0).unwrap(), 0.5);
        assert_abs_diff_eq!(observation_propensity(4, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn propensity_rejects_rank_zero() {
        assert!(observation_propensity(0, 1.0).is_err());
    }

    #[test]
    fn propensity_monotone_in_rank_and_eta() {
        for eta in [0.0, 0.5, 1.0, 2.0] {
            for rank in 1..20usize {
                let a = observation_propensity(rank, eta).unwrap();
                let b = observation_propensity(rank + 1, eta).unwrap();
                assert!(a >= b, "rank monotonicity at rank {rank}, eta {eta}");
                assert!(a > 0.0 && a <= 1.0);
            }
        }
        for rank in 2..20usize {
            let a = observation_propensity(rank, 0.5).unwrap();
            let b = observation_propensity(rank, 1.5).unwrap();
            assert!(a >= b, "eta monotonicity at rank {rank}");
        }
    }

    #[test]
    fn eta_zero_propensity_is_exactly_one() {
        for rank in 1..50usize {
            assert_eq!(observation_propensity(rank, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn noise_model_validates_mu() {
        assert!(NoiseModel::new(0.5).is_err());
        assert!(NoiseModel::new(-0.1).is_err());
        let nm = NoiseModel::new(0.1).unwrap();
        assert!(nm.click_prob(true) > nm.click_prob(false));
    }

    fn small_pool() -> Dataset {
        synthetic_corpus(&SyntheticConfig {
            train_queries: 8,
            test_queries: 2,
            ..SyntheticConfig::default()
        })
        .unwrap()
        .train
    }

    struct ZeroScorer;
    impl Scorer for ZeroScorer {
        fn score(&self, _features: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn noise_free_clicks_equal_observed_relevant() {
        let pool = small_pool();
        let log = simulate_clicks(&ZeroScorer, &pool, 200, 1.0, 0.0, 5, true).unwrap();
        assert!(log.total_clicks() >= 200);
        for s in &log.sessions {
            let obs = s.hidden_observation.as_ref().unwrap();
            let rel = s.hidden_relevance.as_ref().unwrap();
            for m in 0..s.clicks.len() {
                assert_eq!(s.clicks[m], obs[m] & rel[m]);
            }
        }
    }

    #[test]
    fn eta_zero_noise_free_clicks_all_relevant() {
        let pool = small_pool();
        let log = simulate_clicks(&ZeroScorer, &pool, 100, 0.0, 0.0, 5, true).unwrap();
        for s in &log.sessions {
            let rel = s.hidden_relevance.as_ref().unwrap();
            assert_eq!(&s.clicks, rel);
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let pool = small_pool();
        let a = simulate_clicks(&ZeroScorer, &pool, 150, 1.0, 0.1, 9, false).unwrap();
        let b = simulate_clicks(&ZeroScorer, &pool, 150, 1.0, 0.1, 9, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_free_needs_some_relevant_doc() {
        let text = "0 qid:a 1:1\n0 qid:a 1:2\n0 qid:b 1:3\n0 qid:b 1:4\n";
        let pool = crate::data::parse_svmlight_str(text).unwrap();
        let err = simulate_clicks(&ZeroScorer, &pool, 10, 1.0, 0.0, 1, false).unwrap_err();
        assert!(matches!(err, PrsError::Degenerate(_)));
    }

    #[test]
    fn click_rate_matches_analytic_positionwise() {
        // Fixed 5-doc query, eta = 1, mu = 0.1: empirical click rate at each
        // position approaches p_k * (r eps_plus + (1-r) eps_minus).
        let text = "1 qid:q 1:5\n0 qid:q 1:4\n1 qid:q 1:3\n0 qid:q 1:2\n0 qid:q 1:1\n";
        let pool = crate::data::parse_svmlight_str(text).unwrap();
        struct ByFeature;
        impl Scorer for ByFeature {
            fn score(&self, f: &[f64]) -> f64 {
                f[0]
            }
        }
        let n = 1_000_000u64;
        let log = simulate_sessions(&ByFeature, &pool, n, 1.0, 0.1, 13, true).unwrap();
        let rel_by_pos = [1.0, 0.0, 1.0, 0.0, 0.0];
        let mut click_counts = [0u64; 5];
        for s in &log.sessions {
            for m in 0..5 {
                click_counts[m] += s.clicks[m] as u64;
            }
        }
        for m in 0..5 {
            let p = 1.0 / (m + 1) as f64;
            let expected = p * (rel_by_pos[m] * 0.9 + (1.0 - rel_by_pos[m]) * 0.1);
            let se = (expected * (1.0 - expected) / n as f64).sqrt();
            let empirical = click_counts[m] as f64 / n as f64;
            assert!(
                (empirical - expected).abs() <= 3.0 * se,
                "position {}: empirical {} vs expected {} (se {})",
                m + 1,
                empirical,
                expected,
                se
            );
        }
    }

    #[test]
    fn click_log_round_trips() {
        let pool = small_pool();
        for oracle in [false, true] {
            let log = simulate_clicks(&ZeroScorer, &pool, 80, 1.3, 0.2, 21, oracle).unwrap();
            let tmp = tempfile::NamedTempFile::new().unwrap();
            write_click_log(&log, tmp.path()).unwrap();
            let back = read_click_log(tmp.path()).unwrap();
            assert_eq!(log, back);
        }
    }

    #[test]
    fn read_rejects_malformed_session_line() {
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            tmp.path(),
            "#clicklog v1 eta=1e0 mu=0e0 seed=1 total_clicks=1 oracle=0\nq1\t0,1\t0\t1e0,5e-1\n",
        )
        .unwrap();
        let err = read_click_log(tmp.path()).unwrap_err();
        assert!(matches!(err, PrsError::Parse { line: 2, .. }));
    }

    #[test]
    fn assumed_eta_rewrites_by_position() {
        let pool = small_pool();
        let log = simulate_clicks(&ZeroScorer, &pool, 50, 1.0, 0.0, 3, false).unwrap();
        let rewritten = with_assumed_eta(&log, 2.0).unwrap();
        for s in &rewritten.sessions {
            for (m, &p) in s.propensities.iter().enumerate() {
                assert_abs_diff_eq!(p, (1.0 / (m + 1) as f64).powi(2), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn estimated_ratios_extend_past_known_positions() {
        let pool = small_pool();
        let log = simulate_clicks(&ZeroScorer, &pool, 50, 1.0, 0.0, 3, false).unwrap();
        let rewritten = with_estimated_ratios(&log, &[1.0, 0.4, 0.3]).unwrap();
        for s in &rewritten.sessions {
            assert_abs_diff_eq!(s.propensities[0], 1.0);
            assert_abs_diff_eq!(s.propensities[1], 0.4);
            for &p in &s.propensities[2..] {
                assert_abs_diff_eq!(p, 0.3);
            }
        }
    }

    #[test]
    fn production_ranker_orders_by_informative_feature() {
        let text = "2 qid:a 1:0.9\n1 qid:a 1:0.5\n0 qid:a 1:0.1\n\
                    2 qid:b 1:0.8\n1 qid:b 1:0.4\n0 qid:b 1:0.2\n";
        let ds = crate::data::parse_svmlight_str(text).unwrap();
        let ranker = train_production_ranker(&ds, &SgdConfig::default()).unwrap();
        assert!(ranker.score(&[0.9]) > ranker.score(&[0.1]));
    }

    #[test]
    fn production_ranker_single_query_and_determinism() {
        let text = "2 qid:a 1:0.9 2:0.3\n1 qid:a 1:0.5 2:0.9\n0 qid:a 1:0.1 2:0.5\n";
        let ds = crate::data::parse_svmlight_str(text).unwrap();
        let cfg = SgdConfig::default();
        let a = train_production_ranker(&ds, &cfg).unwrap();
        let b = train_production_ranker(&ds, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn production_ranker_degenerate_labels_yield_zero_weights() {
        let text = "1 qid:a 1:0.9\n1 qid:a 1:0.5\n";
        let ds = crate::data::parse_svmlight_str(text).unwrap();
        let ranker = train_production_ranker(&ds, &SgdConfig::default()).unwrap();
        assert!(ranker.weights.iter().all(|&w| w == 0.0));
    }
}
