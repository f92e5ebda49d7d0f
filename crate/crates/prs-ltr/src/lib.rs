//! Unbiased learning-to-rank from position-biased click logs.
//!
//! The crate simulates a production search system that logs clicks under
//! position bias, then trains pairwise rankers whose per-pair weights correct
//! for that bias. Four weighting schemes are supported:
//!
//! * `naive` treats clicks as ground truth (weight 1),
//! * `ips` reweights each pair by the inverse propensity of the clicked doc,
//! * `pns` reweights by the propensity of the non-clicked doc,
//! * `prs` reweights by the ratio of the two, which corrects both the
//!   missing-click bias on the clicked side and the not-observed ambiguity on
//!   the non-clicked side.
//!
//! [`oracle`] contains brute-force expectation machinery used to check the
//! closed forms behind those schemes, [`propensity`] estimates the position
//! bias curve from randomization experiments, and [`experiment`] drives full
//! simulate/train/evaluate grids.

pub mod data;
pub mod error;
pub mod experiment;
pub mod learn;
pub mod metrics;
pub mod oracle;
pub mod propensity;
pub mod simulate;
pub mod weighting;

pub use error::{PrsError, Result};
