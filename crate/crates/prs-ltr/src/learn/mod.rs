//! Pairwise learners over weighted click pairs: a linear logistic ranker and
//! a gradient-boosted LambdaMART variant whose lambdas carry the scheme
//! weights.

pub mod boost;
pub mod linear;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{PrsError, Result};
use crate::simulate::ClickLog;
use crate::weighting::{generate_pairs, PairStrategy, TrainingPair, WeightScheme};

pub use boost::GBDTRanker;
pub use linear::LinearRanker;

/// Anything that maps a feature vector to a real score. Rankings always sort
/// scores descending with ties broken by document index.
pub trait Scorer: Send + Sync {
    fn score(&self, features: &[f64]) -> f64;
}

/// Mini-batch gradient descent settings for the logistic learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    /// Sessions per mini-batch; the batch gradient averages over the pairs
    /// those sessions contain.
    pub batch_sessions: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epochs: 30,
            learning_rate: 0.5,
            l2_lambda: 1e-4,
            batch_sessions: 64,
            seed: 17,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_sessions == 0 {
            return Err(PrsError::Config(
                "epochs and batch_sessions must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_lambda >= 0.0) {
            return Err(PrsError::Config(
                "learning_rate must be positive and l2_lambda nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Boosting settings for the LambdaMART learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_docs_per_leaf: usize,
    /// Ridge term added to the hessian sum in Newton leaf values. Keeps a
    /// leaf dominated by a few badly mis-ranked, heavily weighted documents
    /// (tiny hessian, finite gradient) from emitting an enormous step.
    pub l2_lambda: f64,
    /// Steepness of the lambda sigmoid.
    pub sigma: f64,
    /// Histogram resolution for split finding.
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            num_trees: 300,
            learning_rate: 0.1,
            num_leaves: 31,
            min_docs_per_leaf: 1,
            l2_lambda: 1.0,
            sigma: 1.0,
            max_bins: 64,
            seed: 17,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_leaves < 2 || self.min_docs_per_leaf == 0 || self.max_bins < 2 {
            return Err(PrsError::Config(
                "num_leaves and max_bins must be >= 2, min_docs_per_leaf >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.sigma > 0.0) {
            return Err(PrsError::Config(
                "learning_rate and sigma must be positive".into(),
            ));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(PrsError::Config("l2_lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One session's training material: the query it came from, its weighted
/// pairs (document indices within that query), and per-document click gains.
#[derive(Debug, Clone)]
pub struct SessionPairs {
    pub query_index: usize,
    pub pairs: Vec<TrainingPair>,
    pub clicks_by_doc: Vec<u8>,
}

/// Expand a click log into per-session weighted pairs. Sessions without
/// clicks (hence without pairs) are dropped. Errors if the whole log yields
/// zero pairs or references a qid missing from the dataset.
pub fn assemble_training(
    log: &ClickLog,
    dataset: &Dataset,
    strategy: PairStrategy,
    scheme: &WeightScheme,
) -> Result<Vec<SessionPairs>> {
    let qid_index = dataset.qid_index();
    let mut out = Vec::new();
    for session in &log.sessions {
        let &query_index = qid_index.get(session.qid.as_str()).ok_or_else(|| {
            PrsError::InvalidArgument(format!(
                "click log references qid `{}` absent from the dataset",
                session.qid
            ))
        })?;
        let n_docs = dataset.queries[query_index].docs.len();
        if session.presented_order.len() != n_docs {
            return Err(PrsError::InvalidArgument(format!(
                "session for qid `{}` presents {} docs but the dataset has {}",
                session.qid,
                session.presented_order.len(),
                n_docs
            )));
        }
        let pairs = generate_pairs(session, strategy, scheme)?;
        if pairs.is_empty() {
            continue;
        }
        let mut clicks_by_doc = vec![0u8; n_docs];
        for (m, &doc) in session.presented_order.iter().enumerate() {
            clicks_by_doc[doc] = session.clicks[m];
        }
        out.push(SessionPairs {
            query_index,
            pairs,
            clicks_by_doc,
        });
    }
    if out.is_empty() {
        return Err(PrsError::Degenerate(
            "click log produced zero training pairs".into(),
        ));
    }
    Ok(out)
}

/// A deserialized ranker of either family.
pub enum Model {
    Linear(LinearRanker),
    Gbdt(GBDTRanker),
}

impl Model {
    pub fn feature_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.weights.len(),
            Model::Gbdt(m) => m.feature_dim,
        }
    }
}

impl Scorer for Model {
    fn score(&self, features: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.score(features),
            Model::Gbdt(m) => m.score(features),
        }
    }
}

/// Load a model file, sniffing the family from the header line.
pub fn load_model(path: &Path) -> Result<Model> {
    let content = fs::read_to_string(path)?;
    let header = content.lines().next().unwrap_or_default();
    match header {
        linear::LINEAR_HEADER => Ok(Model::Linear(linear::parse_linear(&content)?)),
        boost::GBDT_HEADER => Ok(Model::Gbdt(boost::parse_gbdt(&content)?)),
        _ => Err(PrsError::ModelFormat(format!(
            "unrecognized model header `{header}`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_corpus, SyntheticConfig};
    use crate::simulate::simulate_clicks;

    struct ZeroScorer;
    impl Scorer for ZeroScorer {
        fn score(&self, _f: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn assembly_drops_clickless_sessions_and_maps_docs() {
        let corpus = synthetic_corpus(&SyntheticConfig {
            train_queries: 6,
            test_queries: 2,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let log = simulate_clicks(&ZeroScorer, &corpus.train, 60, 1.0, 0.0, 4, false).unwrap();
        let sessions = assemble_training(
            &log,
            &corpus.train,
            PairStrategy::ClickedVsNonClicked,
            &WeightScheme::naive(),
        )
        .unwrap();
        assert!(!sessions.is_empty());
        for sp in &sessions {
            assert!(!sp.pairs.is_empty());
            let n = corpus.train.queries[sp.query_index].docs.len();
            assert_eq!(sp.clicks_by_doc.len(), n);
            for pair in &sp.pairs {
                assert!((pair.clicked as usize) < n);
                assert!((pair.compared as usize) < n);
                assert_eq!(sp.clicks_by_doc[pair.clicked as usize], 1);
            }
        }
    }

    #[test]
    fn assembly_rejects_unknown_qids() {
        let corpus = synthetic_corpus(&SyntheticConfig {
            train_queries: 4,
            test_queries: 4,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let log = simulate_clicks(&ZeroScorer, &corpus.train, 20, 1.0, 0.0, 4, false).unwrap();
        let err = assemble_training(
            &log,
            &corpus.test, // wrong dataset: test qids differ from train qids
            PairStrategy::ClickedVsNonClicked,
            &WeightScheme::naive(),
        )
        .unwrap_err();
        assert!(matches!(err, PrsError::InvalidArgument(_)));
    }
}
