//! Ranking metrics over binarized labels: NDCG@k, MAP, ARP, and
//! propensity-weighted MRR over click sessions.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{PrsError, Result};
use crate::learn::Scorer;

/// Positions of documents sorted by descending score, ties broken by original
/// document index. `result[pos] = doc`. This tie-break is the crate-wide rule;
/// every consumer of an induced ordering goes through here.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must not be NaN")
            .then(a.cmp(&b))
    });
    order
}

fn check_lengths(scores: &[f64], relevance: &[u8]) -> Result<()> {
    if scores.len() != relevance.len() {
        return Err(PrsError::InvalidArgument(format!(
            "scores ({}) and relevance ({}) lengths differ",
            scores.len(),
            relevance.len()
        )));
    }
    Ok(())
}

fn gain(rel: u8) -> f64 {
    (1u64 << rel) as f64 - 1.0 // 2^rel - 1
}

fn discount(position_1based: usize) -> f64 {
    1.0 / ((position_1based + 1) as f64).log2()
}

/// NDCG@k. `None` when the query has no relevant documents (the aggregate
/// excludes such queries rather than counting them as zero).
pub fn ndcg_at_k(scores: &[f64], relevance: &[u8], k: usize) -> Result<Option<f64>> {
    check_lengths(scores, relevance)?;
    if k == 0 {
        return Err(PrsError::InvalidArgument("k must be >= 1".into()));
    }
    let order = rank_by_scores(scores);
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &doc)| gain(relevance[doc]) * discount(pos + 1))
        .sum();

    let mut ideal: Vec<u8> = relevance.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &rel)| gain(rel) * discount(pos + 1))
        .sum();

    if idcg == 0.0 {
        Ok(None)
    } else {
        Ok(Some(dcg / idcg))
    }
}

/// Average precision over the full ranking. `None` when nothing is relevant.
pub fn average_precision(scores: &[f64], relevance: &[u8]) -> Result<Option<f64>> {
    check_lengths(scores, relevance)?;
    let order = rank_by_scores(scores);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &doc) in order.iter().enumerate() {
        if relevance[doc] > 0 {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    if hits == 0 {
        Ok(None)
    } else {
        Ok(Some(sum / hits as f64))
    }
}

/// Average relevance position: mean over all n docs of 0-based predicted rank
/// times binary relevance. Lower is better. Empty input yields 0.
pub fn arp(scores: &[f64], relevance: &[u8]) -> Result<f64> {
    check_lengths(scores, relevance)?;
    let n = scores.len();
    if n == 0 {
        return Ok(0.0);
    }
    let order = rank_by_scores(scores);
    let sum: f64 = order
        .iter()
        .enumerate()
        .filter(|&(_, &doc)| relevance[doc] > 0)
        .map(|(pos, _)| pos as f64)
        .sum();
    Ok(sum / n as f64)
}

/// Weighted mean reciprocal rank over click sessions: each entry is the
/// 1-based rank of a session's clicked document plus its inverse-propensity
/// weight. Returns sum(w/rank) / sum(w).
pub fn wmrr(entries: &[(usize, f64)]) -> Result<f64> {
    if entries.is_empty() {
        return Err(PrsError::InvalidArgument("wmrr over empty input".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(rank, weight) in entries {
        if rank == 0 {
            return Err(PrsError::InvalidArgument("wmrr ranks are 1-based".into()));
        }
        if !(weight > 0.0) {
            return Err(PrsError::InvalidArgument(format!(
                "wmrr weights must be positive, got {weight}"
            )));
        }
        num += weight / rank as f64;
        den += weight;
    }
    Ok(num / den)
}

#[derive(Debug, Clone)]
pub struct PerQueryMetrics {
    pub qid: String,
    pub ndcg: BTreeMap<usize, Option<f64>>,
    pub ap: Option<f64>,
    pub arp: f64,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    /// Mean NDCG per cutoff over queries that have at least one relevant doc.
    pub ndcg_at_k: BTreeMap<usize, f64>,
    pub map_score: f64,
    pub arp: f64,
    /// Queries contributing to NDCG/MAP means.
    pub evaluated_queries: usize,
    pub total_queries: usize,
    pub per_query: Option<Vec<PerQueryMetrics>>,
}

/// Score every query with `scorer` and aggregate metrics over the dataset.
/// Queries without relevant docs are skipped for NDCG/MAP and contribute 0 to
/// ARP's mean.
pub fn evaluate_ranker(
    scorer: &dyn Scorer,
    dataset: &Dataset,
    ks: &[usize],
    keep_per_query: bool,
) -> Result<MetricReport> {
    if dataset.queries.is_empty() {
        return Err(PrsError::EmptyDataset("evaluation dataset".into()));
    }
    let mut ndcg_sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut ap_sum = 0.0;
    let mut arp_sum = 0.0;
    let mut evaluated = 0usize;
    let mut per_query = keep_per_query.then(Vec::new);

    for query in &dataset.queries {
        let scores: Vec<f64> = query.docs.iter().map(|d| scorer.score(&d.features)).collect();
        let rel = &query.binary_relevance;

        let mut q_ndcg = BTreeMap::new();
        for &k in ks {
            let v = ndcg_at_k(&scores, rel, k)?;
            if let Some(x) = v {
                *ndcg_sums.get_mut(&k).expect("key present") += x;
            }
            q_ndcg.insert(k, v);
        }
        let ap = average_precision(&scores, rel)?;
        if let Some(x) = ap {
            ap_sum += x;
            evaluated += 1;
        }
        let q_arp = arp(&scores, rel)?;
        arp_sum += q_arp;

        if let Some(pq) = per_query.as_mut() {
            pq.push(PerQueryMetrics {
                qid: query.qid.clone(),
                ndcg: q_ndcg,
                ap,
                arp: q_arp,
            });
        }
    }

    if evaluated == 0 {
        return Err(PrsError::Degenerate(
            "no query in the evaluation set has a relevant document".into(),
        ));
    }

    Ok(MetricReport {
        ndcg_at_k: ndcg_sums
            .into_iter()
            .map(|(k, s)| (k, s / evaluated as f64))
            .collect(),
        map_score: ap_sum / evaluated as f64,
        arp: arp_sum / dataset.queries.len() as f64,
        evaluated_queries: evaluated,
        total_queries: dataset.queries.len(),
        per_query,
    })
}
