//! Relative propensity estimation from randomized interventions.
//!
//! Swapping the documents at an adjacent position pair (k-1, k) with
//! probability 1/2 makes the content shown at the two positions exchangeable
//! within those sessions. Whatever the ranker put there and whatever the
//! click noise, the ratio of click counts at the two positions then
//! identifies p_k / p_{k-1}, and chaining the ratios yields p_k / p_1.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{PrsError, Result};
use crate::learn::Scorer;
use crate::metrics::rank_by_scores;
use crate::simulate::{draw_session_clicks, NoiseModel, PropensityModel};

/// Click tallies for one adjacent position pair, accumulated over the
/// sessions in which that pair was the randomized one. "Upper" is the
/// earlier position k-1, "lower" is k.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SwapPairCounts {
    pub sessions: u64,
    pub clicks_upper: u64,
    pub clicks_lower: u64,
}

/// `pairs[k-2]` tallies the pair (k-1, k) for k = 2..=max_position().
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwapLog {
    pub pairs: Vec<SwapPairCounts>,
}

impl SwapLog {
    pub fn max_position(&self) -> usize {
        self.pairs.len() + 1
    }

    /// Tally merge; sharded collection just adds counts.
    pub fn merge(&mut self, other: &SwapLog) {
        if other.pairs.len() > self.pairs.len() {
            self.pairs.resize(other.pairs.len(), SwapPairCounts::default());
        }
        for (mine, theirs) in self.pairs.iter_mut().zip(&other.pairs) {
            mine.sessions += theirs.sessions;
            mine.clicks_upper += theirs.clicks_upper;
            mine.clicks_lower += theirs.clicks_lower;
        }
    }
}

/// Chain the per-pair click ratios into p_k / p_1 for k = 1..=max_position().
/// Every pair needs at least one click on each side; a zero count leaves the
/// ratio at or beyond that position undefined.
pub fn estimate_ratios(log: &SwapLog) -> Result<Vec<f64>> {
    let mut ratios = Vec::with_capacity(log.pairs.len() + 1);
    ratios.push(1.0);
    let mut acc = 1.0;
    for (idx, pc) in log.pairs.iter().enumerate() {
        let k = idx + 2;
        if pc.clicks_upper == 0 {
            return Err(PrsError::Degenerate(format!(
                "no clicks at position {} among its swapped sessions; ratio for position {k} is undefined",
                k - 1
            )));
        }
        if pc.clicks_lower == 0 {
            return Err(PrsError::Degenerate(format!(
                "no clicks at position {k} among its swapped sessions; estimated ratios must stay positive"
            )));
        }
        acc *= pc.clicks_lower as f64 / pc.clicks_upper as f64;
        ratios.push(acc);
    }
    Ok(ratios)
}

/// Prepare raw estimates for use as propensities: position 1 is the
/// reference, so a ratio above 1 is sampling noise and is clamped to 1.
/// Nonpositive or non-finite ratios are rejected.
pub fn clamp_ratios(ratios: &[f64]) -> Result<Vec<f64>> {
    if ratios.is_empty() {
        return Err(PrsError::InvalidArgument("no ratios to clamp".into()));
    }
    ratios
        .iter()
        .map(|&r| {
            if r.is_finite() && r > 0.0 {
                Ok(r.min(1.0))
            } else {
                Err(PrsError::InvalidArgument(format!(
                    "estimated ratio {r} is not a positive finite number"
                )))
            }
        })
        .collect()
}

fn presented_relevance(scorer: &dyn Scorer, pool: &Dataset) -> Result<Vec<Vec<u8>>> {
    if pool.queries.is_empty() {
        return Err(PrsError::EmptyDataset("intervention pool".into()));
    }
    Ok(pool
        .queries
        .iter()
        .map(|q| {
            let scores: Vec<f64> = q.docs.iter().map(|d| scorer.score(&d.features)).collect();
            rank_by_scores(&scores)
                .into_iter()
                .map(|doc| q.binary_relevance[doc])
                .collect()
        })
        .collect())
}

/// Run the adjacent-swap intervention: per session one eligible pair is
/// chosen uniformly and swapped with probability 1/2 before clicks are
/// drawn. `max_position` of 0 leaves every adjacent pair eligible.
/// Deterministic given the seed.
pub fn simulate_swap_experiment(
    scorer: &dyn Scorer,
    pool: &Dataset,
    n_sessions: u64,
    eta: f64,
    mu: f64,
    seed: u64,
    max_position: usize,
) -> Result<SwapLog> {
    if n_sessions == 0 {
        return Err(PrsError::InvalidArgument("n_sessions must be >= 1".into()));
    }
    let propensity = PropensityModel::new(eta)?;
    let noise = NoiseModel::new(mu)?;
    let rel_by_pos = presented_relevance(scorer, pool)?;

    let cap = |n: usize| if max_position == 0 { n } else { n.min(max_position) };
    let deepest = rel_by_pos.iter().map(|r| cap(r.len())).max().unwrap_or(0);
    if deepest < 2 {
        return Err(PrsError::Degenerate(
            "no query offers an adjacent pair within the position cap".into(),
        ));
    }
    let mut log = SwapLog {
        pairs: vec![SwapPairCounts::default(); deepest - 1],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_sessions {
        let qi = rng.gen_range(0..rel_by_pos.len());
        let k_max = cap(rel_by_pos[qi].len());
        if k_max < 2 {
            continue;
        }
        let k = rng.gen_range(2..=k_max);
        let swap = rng.gen::<bool>();
        let mut rel = rel_by_pos[qi].clone();
        if swap {
            rel.swap(k - 2, k - 1);
        }
        let (_, clicks, _) = draw_session_clicks(&mut rng, &rel, &propensity, &noise);
        let pc = &mut log.pairs[k - 2];
        pc.sessions += 1;
        pc.clicks_upper += clicks[k - 2] as u64;
        pc.clicks_lower += clicks[k - 1] as u64;
    }
    Ok(log)
}

/// Per-position click tallies from sessions whose top `clicks.len()`
/// positions were shown in uniformly random order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UniformLog {
    pub sessions: u64,
    pub clicks: Vec<u64>,
}

/// Full-randomization alternative: shuffle the top positions uniformly each
/// session. Content at every shuffled position is then identically
/// distributed and click counts are directly proportional to propensities.
pub fn simulate_uniform_experiment(
    scorer: &dyn Scorer,
    pool: &Dataset,
    n_sessions: u64,
    eta: f64,
    mu: f64,
    seed: u64,
    max_position: usize,
) -> Result<UniformLog> {
    if n_sessions == 0 {
        return Err(PrsError::InvalidArgument("n_sessions must be >= 1".into()));
    }
    let propensity = PropensityModel::new(eta)?;
    let noise = NoiseModel::new(mu)?;
    let rel_by_pos = presented_relevance(scorer, pool)?;

    let cap = |n: usize| if max_position == 0 { n } else { n.min(max_position) };
    let deepest = rel_by_pos.iter().map(|r| cap(r.len())).max().unwrap_or(0);
    if deepest == 0 {
        return Err(PrsError::Degenerate("no positions to randomize".into()));
    }
    let mut log = UniformLog {
        sessions: 0,
        clicks: vec![0; deepest],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_sessions {
        let qi = rng.gen_range(0..rel_by_pos.len());
        let k_max = cap(rel_by_pos[qi].len());
        let mut rel = rel_by_pos[qi].clone();
        rel[..k_max].shuffle(&mut rng);
        let (_, clicks, _) = draw_session_clicks(&mut rng, &rel, &propensity, &noise);
        log.sessions += 1;
        for m in 0..k_max {
            log.clicks[m] += clicks[m] as u64;
        }
    }
    Ok(log)
}

/// Ratios from a uniform-randomization log: clicks at k over clicks at 1.
pub fn estimate_ratios_uniform(log: &UniformLog) -> Result<Vec<f64>> {
    let first = *log.clicks.first().ok_or_else(|| {
        PrsError::Degenerate("uniform log covers no positions".into())
    })?;
    if first == 0 {
        return Err(PrsError::Degenerate(
            "no clicks at position 1; ratios are undefined".into(),
        ));
    }
    for (m, &c) in log.clicks.iter().enumerate() {
        if c == 0 {
            return Err(PrsError::Degenerate(format!(
                "no clicks at position {}; estimated ratios must stay positive",
                m + 1
            )));
        }
    }
    Ok(log
        .clicks
        .iter()
        .map(|&c| c as f64 / first as f64)
        .collect())
}

/// Persist estimated ratios, one row per position starting at 1. Values are
/// written with shortest round-trip formatting, so reading them back is
/// exact.
pub fn write_ratios_csv(ratios: &[f64], path: &Path) -> Result<()> {
    if ratios.is_empty() {
        return Err(PrsError::InvalidArgument("no ratios to write".into()));
    }
    let mut out = String::from("position,ratio\n");
    for (idx, r) in ratios.iter().enumerate() {
        writeln!(out, "{},{}", idx + 1, r).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ratios_csv(path: &Path) -> Result<Vec<f64>> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, "position,ratio")) => {}
        _ => return Err(PrsError::parse(1, "missing `position,ratio` header")),
    }
    let mut ratios = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (pos, ratio) = line.split_once(',').ok_or_else(|| {
            PrsError::parse(i + 1, format!("expected `position,ratio`, got `{line}`"))
        })?;
        let position: usize = pos
            .trim()
            .parse()
            .map_err(|_| PrsError::parse(i + 1, format!("bad position `{pos}`")))?;
        if position != ratios.len() + 1 {
            return Err(PrsError::parse(
                i + 1,
                format!("positions must be contiguous from 1; expected {}, got {position}", ratios.len() + 1),
            ));
        }
        let value: f64 = ratio
            .trim()
            .parse()
            .map_err(|_| PrsError::parse(i + 1, format!("bad ratio `{ratio}`")))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(PrsError::parse(
                i + 1,
                format!("ratio must be a positive finite number, got `{ratio}`"),
            ));
        }
        ratios.push(value);
    }
    if ratios.is_empty() {
        return Err(PrsError::parse(1, "ratio file has no rows"));
    }
    Ok(ratios)
}

pub fn write_swap_log(log: &SwapLog, path: &Path) -> Result<()> {
    let mut out = String::from("position,sessions,clicks_upper,clicks_lower\n");
    for (idx, pc) in log.pairs.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            idx + 2,
            pc.sessions,
            pc.clicks_upper,
            pc.clicks_lower
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_swap_log(path: &Path) -> Result<SwapLog> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, "position,sessions,clicks_upper,clicks_lower")) => {}
        _ => {
            return Err(PrsError::parse(1, "missing swap log header"));
        }
    }
    let mut pairs = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(PrsError::parse(i + 1, format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.trim()
                .parse()
                .map_err(|_| PrsError::parse(i + 1, format!("bad {what} `{s}`")))
        };
        let position = num(fields[0], "position")? as usize;
        if position != pairs.len() + 2 {
            return Err(PrsError::parse(
                i + 1,
                format!("positions must be contiguous from 2; expected {}, got {position}", pairs.len() + 2),
            ));
        }
        pairs.push(SwapPairCounts {
            sessions: num(fields[1], "session count")?,
            clicks_upper: num(fields[2], "upper click count")?,
            clicks_lower: num(fields[3], "lower click count")?,
        });
    }
    Ok(SwapLog { pairs })
}
