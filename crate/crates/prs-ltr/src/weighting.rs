//! Per-pair loss weights (Naive/IPS/PNS/PRS) and training-pair enumeration.
//!
//! All schemes weight a (clicked i, compared j) pair from the logged
//! propensities of the two positions:
//!
//! ```text
//! naive: 1
//! ips:   min(clip_inverse, 1/p_i)
//! pns:   p_j
//! prs:   min(clip_gamma, p_j * min(clip_inverse, 1/p_i))
//! ```
//!
//! With every propensity equal to 1 (no position bias) all four weights are
//! exactly 1, so the schemes coincide.

use serde::{Deserialize, Serialize};

use crate::error::{PrsError, Result};
use crate::simulate::ClickSession;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Naive,
    Ips,
    Pns,
    Prs,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Naive => "naive",
            SchemeKind::Ips => "ips",
            SchemeKind::Pns => "pns",
            SchemeKind::Prs => "prs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(SchemeKind::Naive),
            "ips" => Ok(SchemeKind::Ips),
            "pns" => Ok(SchemeKind::Pns),
            "prs" => Ok(SchemeKind::Prs),
            _ => Err(PrsError::InvalidArgument(format!(
                "unknown scheme `{s}` (expected naive|ips|pns|prs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightScheme {
    pub kind: SchemeKind,
    /// Cap on the PRS ratio weight; infinity disables ratio clipping.
    pub clip_gamma: f64,
    /// Cap on the clicked-side inverse 1/p; infinity disables it.
    pub clip_inverse: f64,
}

impl WeightScheme {
    pub fn new(kind: SchemeKind, clip_gamma: f64, clip_inverse: f64) -> Result<Self> {
        if !(clip_gamma > 0.0) || !(clip_inverse > 0.0) {
            return Err(PrsError::InvalidArgument(format!(
                "clip parameters must be positive, got gamma={clip_gamma} inverse={clip_inverse}"
            )));
        }
        Ok(WeightScheme {
            kind,
            clip_gamma,
            clip_inverse,
        })
    }

    pub fn naive() -> Self {
        WeightScheme::new(SchemeKind::Naive, f64::INFINITY, f64::INFINITY).expect("valid clips")
    }

    pub fn ips(clip_inverse: f64) -> Result<Self> {
        WeightScheme::new(SchemeKind::Ips, f64::INFINITY, clip_inverse)
    }

    pub fn pns() -> Self {
        WeightScheme::new(SchemeKind::Pns, f64::INFINITY, f64::INFINITY).expect("valid clips")
    }

    pub fn prs(clip_gamma: f64, clip_inverse: f64) -> Result<Self> {
        WeightScheme::new(SchemeKind::Prs, clip_gamma, clip_inverse)
    }

    /// Weight for a pair whose clicked doc sat at a position with propensity
    /// `p_clicked` and whose compared doc at one with propensity `p_compared`.
    pub fn pair_weight(&self, p_clicked: f64, p_compared: f64) -> Result<f64> {
        for p in [p_clicked, p_compared] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(PrsError::InvalidArgument(format!(
                    "propensities must lie in (0,1], got {p}"
                )));
            }
        }
        let inverse = (1.0 / p_clicked).min(self.clip_inverse);
        Ok(match self.kind {
            SchemeKind::Naive => 1.0,
            SchemeKind::Ips => inverse,
            SchemeKind::Pns => p_compared,
            SchemeKind::Prs => (p_compared * inverse).min(self.clip_gamma),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    /// Clicked doc vs every other doc in the session, clicked ones included.
    ClickedVsAll,
    /// Clicked doc vs every non-clicked doc.
    #[serde(rename = "clicked_vs_nonclicked")]
    ClickedVsNonClicked,
    /// Clicked doc vs non-clicked docs that are truly irrelevant; needs an
    /// oracle-mode log, exists only as an upper-bound ablation.
    ClickedVsIrrelevantOracle,
}

impl PairStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            PairStrategy::ClickedVsAll => "clicked_vs_all",
            PairStrategy::ClickedVsNonClicked => "clicked_vs_nonclicked",
            PairStrategy::ClickedVsIrrelevantOracle => "clicked_vs_irrelevant_oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clicked_vs_all" | "all" => Ok(PairStrategy::ClickedVsAll),
            "clicked_vs_nonclicked" | "nonclicked" => Ok(PairStrategy::ClickedVsNonClicked),
            "clicked_vs_irrelevant_oracle" | "oracle" => {
                Ok(PairStrategy::ClickedVsIrrelevantOracle)
            }
            _ => Err(PrsError::InvalidArgument(format!(
                "unknown pair strategy `{s}` \
                 (expected clicked_vs_all|clicked_vs_nonclicked|clicked_vs_irrelevant_oracle)"
            ))),
        }
    }
}

/// A weighted training pair. Indices are document indices within the query
/// group (not positions), so feature lookup is direct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPair {
    pub clicked: u32,
    pub compared: u32,
    pub weight: f64,
}

/// Enumerate weighted pairs for one session: for each clicked position, the
/// compared side ranges over the strategy's partner set. Pairs are emitted in
/// (clicked position, partner position) order. A session without clicks
/// yields no pairs.
pub fn generate_pairs(
    session: &ClickSession,
    strategy: PairStrategy,
    scheme: &WeightScheme,
) -> Result<Vec<TrainingPair>> {
    let n = session.presented_order.len();
    let hidden_rel = match strategy {
        PairStrategy::ClickedVsIrrelevantOracle => {
            Some(session.hidden_relevance.as_ref().ok_or_else(|| {
                PrsError::InvalidArgument(
                    "clicked_vs_irrelevant_oracle requires an oracle-mode click log".into(),
                )
            })?)
        }
        _ => None,
    };

    let mut pairs = Vec::new();
    for m in 0..n {
        if session.clicks[m] != 1 {
            continue;
        }
        for j in 0..n {
            if j == m {
                continue;
            }
            let keep = match strategy {
                PairStrategy::ClickedVsAll => true,
                PairStrategy::ClickedVsNonClicked => session.clicks[j] == 0,
                PairStrategy::ClickedVsIrrelevantOracle => {
                    session.clicks[j] == 0 && hidden_rel.expect("checked above")[j] == 0
                }
            };
            if !keep {
                continue;
            }
            let weight = scheme.pair_weight(session.propensities[m], session.propensities[j])?;
            pairs.push(TrainingPair {
                clicked: session.presented_order[m] as u32,
                compared: session.presented_order[j] as u32,
                weight,
            });
        }
    }
    Ok(pairs)
}
