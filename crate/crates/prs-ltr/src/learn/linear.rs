//! Pairwise logistic regression: a linear scorer trained by mini-batch
//! gradient descent on weighted click pairs, with l2 regularization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{PrsError, Result};
use crate::learn::{assemble_training, Scorer, SgdConfig};
use crate::simulate::ClickLog;
use crate::weighting::{PairStrategy, TrainingPair, WeightScheme};

pub const LINEAR_HEADER: &str = "prs-ltr linear v1";

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRanker {
    pub weights: Vec<f64>,
}

impl LinearRanker {
    pub fn zeros(dim: usize) -> Self {
        LinearRanker {
            weights: vec![0.0; dim],
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{LINEAR_HEADER}").expect("string write");
        writeln!(out, "dim {}", self.weights.len()).expect("string write");
        out.push_str("weights");
        for w in &self.weights {
            write!(out, " {w:.16e}").expect("string write");
        }
        out.push('\n');
        fs::write(path, out)?;
        Ok(())
    }
}

impl Scorer for LinearRanker {
    fn score(&self, features: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum()
    }
}

pub(crate) fn parse_linear(content: &str) -> Result<LinearRanker> {
    let mut lines = content.lines();
    if lines.next() != Some(LINEAR_HEADER) {
        return Err(PrsError::ModelFormat("missing linear model header".into()));
    }
    let dim_line = lines
        .next()
        .ok_or_else(|| PrsError::ModelFormat("missing dim line".into()))?;
    let dim: usize = dim_line
        .strip_prefix("dim ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PrsError::ModelFormat(format!("bad dim line `{dim_line}`")))?;
    let weights_line = lines
        .next()
        .ok_or_else(|| PrsError::ModelFormat("missing weights line".into()))?;
    let rest = weights_line
        .strip_prefix("weights")
        .ok_or_else(|| PrsError::ModelFormat("missing weights line".into()))?;
    let weights: Vec<f64> = rest
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| PrsError::ModelFormat(format!("bad weight `{t}`")))
        })
        .collect::<Result<_>>()?;
    if weights.len() != dim {
        return Err(PrsError::ModelFormat(format!(
            "dim says {} weights, found {}",
            dim,
            weights.len()
        )));
    }
    Ok(LinearRanker { weights })
}

/// Weighted pairwise logistic loss `weight * ln(1 + exp(-(score_i - score_j)))`,
/// in the overflow-safe max/log1p form.
pub fn pairwise_logistic_loss(score_i: f64, score_j: f64, weight: f64) -> f64 {
    let d = score_i - score_j;
    weight * ((-d).max(0.0) + (-d.abs()).exp().ln_1p())
}

/// Gradient of the weighted pairwise logistic loss with respect to the model
/// weights: `-weight * s * (features_i - features_j)` with
/// `s = 1/(1 + exp(score_i - score_j))`.
pub fn logistic_gradient(
    features_i: &[f64],
    features_j: &[f64],
    model_weights: &[f64],
    pair_weight: f64,
) -> Vec<f64> {
    let ranker = LinearRanker {
        weights: model_weights.to_vec(),
    };
    let d = ranker.score(features_i) - ranker.score(features_j);
    let s = 1.0 / (1.0 + d.exp());
    features_i
        .iter()
        .zip(features_j)
        .map(|(a, b)| -pair_weight * s * (a - b))
        .collect()
}

/// A training group: pairs over the documents of one query (one click
/// session, or one labeled query in the full-information case).
type Group = (usize, Vec<TrainingPair>);

/// Mini-batch gradient descent on
/// `mean over pairs of weighted logistic loss + (l2/2)*||w||^2`.
/// Returns the weights and the per-epoch mean training objective.
fn sgd_over_groups(
    dataset: &Dataset,
    groups: &[Group],
    cfg: &SgdConfig,
) -> (Vec<f64>, Vec<f64>) {
    let dim = dataset.feature_dim;
    let mut w = vec![0.0f64; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let total_pairs: usize = groups.iter().map(|(_, p)| p.len()).sum();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    let mut grad = vec![0.0f64; dim];
    let mut scores: Vec<f64> = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_sessions) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_pairs = 0usize;
            for &gi in batch {
                let (query_index, pairs) = &groups[gi];
                let docs = &dataset.queries[*query_index].docs;
                scores.clear();
                scores.extend(docs.iter().map(|d| {
                    d.features.iter().zip(&w).map(|(x, wk)| x * wk).sum::<f64>()
                }));
                for pair in pairs {
                    let (i, j) = (pair.clicked as usize, pair.compared as usize);
                    let d = scores[i] - scores[j];
                    epoch_loss += pairwise_logistic_loss(scores[i], scores[j], pair.weight);
                    let coeff = -pair.weight / (1.0 + d.exp());
                    let fi = &docs[i].features;
                    let fj = &docs[j].features;
                    for k in 0..dim {
                        grad[k] += coeff * (fi[k] - fj[k]);
                    }
                }
                batch_pairs += pairs.len();
            }
            if batch_pairs == 0 {
                continue;
            }
            let inv = 1.0 / batch_pairs as f64;
            for k in 0..dim {
                w[k] -= cfg.learning_rate * (grad[k] * inv + cfg.l2_lambda * w[k]);
            }
        }
        let reg = 0.5 * cfg.l2_lambda * w.iter().map(|x| x * x).sum::<f64>();
        epoch_losses.push(epoch_loss / total_pairs as f64 + reg);
    }
    (w, epoch_losses)
}

/// Like [`train_logreg`] but also returns the per-epoch training objective.
pub fn train_logreg_with_trace(
    log: &ClickLog,
    dataset: &Dataset,
    strategy: PairStrategy,
    scheme: &WeightScheme,
    cfg: &SgdConfig,
) -> Result<(LinearRanker, Vec<f64>)> {
    cfg.validate()?;
    let sessions = assemble_training(log, dataset, strategy, scheme)?;
    let groups: Vec<Group> = sessions
        .into_iter()
        .map(|sp| (sp.query_index, sp.pairs))
        .collect();
    let (weights, trace) = sgd_over_groups(dataset, &groups, cfg);
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        if last > first {
            log::warn!(
                "training objective rose over epochs ({first:.6} -> {last:.6}); \
                 consider lowering the learning rate"
            );
        }
    }
    Ok((LinearRanker { weights }, trace))
}

/// Train the linear ranker on a click log under the given pair strategy and
/// weighting scheme.
pub fn train_logreg(
    log: &ClickLog,
    dataset: &Dataset,
    strategy: PairStrategy,
    scheme: &WeightScheme,
    cfg: &SgdConfig,
) -> Result<LinearRanker> {
    train_logreg_with_trace(log, dataset, strategy, scheme, cfg).map(|(r, _)| r)
}

/// Full-information training on graded labels: every within-query pair with
/// a strictly higher grade on the left, weight 1. Degenerate data (no
/// discordant pair anywhere) yields a zero ranker with a warning rather than
/// an error.
pub fn train_full_info(dataset: &Dataset, cfg: &SgdConfig) -> Result<LinearRanker> {
    cfg.validate()?;
    if dataset.queries.is_empty() {
        return Err(PrsError::EmptyDataset("full-information training".into()));
    }
    let mut groups: Vec<Group> = Vec::new();
    for (qi, query) in dataset.queries.iter().enumerate() {
        let mut pairs = Vec::new();
        for i in 0..query.docs.len() {
            for j in 0..query.docs.len() {
                if query.docs[i].graded_label > query.docs[j].graded_label {
                    pairs.push(TrainingPair {
                        clicked: i as u32,
                        compared: j as u32,
                        weight: 1.0,
                    });
                }
            }
        }
        if !pairs.is_empty() {
            groups.push((qi, pairs));
        }
    }
    if groups.is_empty() {
        log::warn!("no discordant label pairs; returning a zero-weight ranker");
        return Ok(LinearRanker::zeros(dataset.feature_dim));
    }
    let (weights, _) = sgd_over_groups(dataset, &groups, cfg);
    Ok(LinearRanker { weights })
}
