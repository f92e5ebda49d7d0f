//! LambdaMART over weighted click pairs: boosted regression trees fit to
//! lambda gradients whose pair terms carry the scheme weight.
//!
//! Sessions of the same query share one score per document (features are
//! identical), so training aggregates lambdas per unique (query, doc) row
//! while keeping per-session pair sets. Split gains and leaf values then
//! coincide exactly with the per-session-instance formulation at a fraction
//! of the cost.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{PrsError, Result};
use crate::learn::{assemble_training, BoostConfig, Scorer};
use crate::metrics::rank_by_scores;
use crate::simulate::ClickLog;
use crate::weighting::{PairStrategy, TrainingPair, WeightScheme};

pub const GBDT_HEADER: &str = "prs-ltr gbdt v1";

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a preorder node list; node 0 is the root and
/// routing goes left when `features[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_value(&self, features: &[f64]) -> f64 {
        let mut id = 0usize;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GBDTRanker {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub sigma: f64,
    pub feature_dim: usize,
}

impl Scorer for GBDTRanker {
    fn score(&self, features: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|t| self.learning_rate * t.leaf_value(features))
            .sum()
    }
}

/// Per-document lambda gradients and hessians for one session.
///
/// For each weighted pair (clicked i, compared j):
///
/// ```text
/// lambda_ij = -sigma * |dZ_ij| * w / (1 + exp(sigma (s_i - s_j)))
/// lambda_i += lambda_ij          lambda_j -= lambda_ij
/// hess_i   += sigma^2 |dZ_ij| w rho (1 - rho)    (same for j)
/// ```
///
/// |dZ_ij| is the absolute NDCG change from swapping i and j in the ranking
/// induced by `scores`, with click labels as gains. The lambda of a document
/// is the derivative of the session's weighted surrogate cost
/// `sum w |dZ| ln(1 + exp(-sigma (s_i - s_j)))` at the current scores with
/// |dZ| held fixed.
pub fn lambda_gradients(
    pairs: &[TrainingPair],
    scores: &[f64],
    gains: &[u8],
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = scores.len();
    let mut lambda = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];

    let n_clicked = gains.iter().filter(|&&g| g > 0).count();
    if n_clicked == 0 {
        return (lambda, hess);
    }
    let order = rank_by_scores(scores);
    let mut pos_of = vec![0usize; n];
    for (pos, &doc) in order.iter().enumerate() {
        pos_of[doc] = pos;
    }
    let disc: Vec<f64> = (0..n).map(|pos| 1.0 / ((pos + 2) as f64).log2()).collect();
    let idcg: f64 = disc.iter().take(n_clicked).sum();

    for pair in pairs {
        let (i, j) = (pair.clicked as usize, pair.compared as usize);
        let gain_gap = (gains[i] as f64 - gains[j] as f64).abs();
        if gain_gap == 0.0 || pair.weight == 0.0 {
            continue;
        }
        let dz = gain_gap * (disc[pos_of[i]] - disc[pos_of[j]]).abs() / idcg;
        let d = sigma * (scores[i] - scores[j]);
        let rho = 1.0 / (1.0 + d.exp());
        let lij = -sigma * dz * pair.weight * rho;
        lambda[i] += lij;
        lambda[j] -= lij;
        let h = sigma * sigma * dz * pair.weight * rho * (1.0 - rho);
        hess[i] += h;
        hess[j] += h;
    }
    (lambda, hess)
}

/// Quantile cut points for one feature. `bin(x) = #cuts < x`, so a split at
/// bin b routes left exactly when `x <= cuts[b]`; the stored threshold is the
/// cut value and evaluation on raw features matches binned training exactly.
fn build_cuts(mut values: Vec<f64>, max_bins: usize) -> Vec<f64> {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    values.dedup();
    if values.len() < 2 {
        return Vec::new();
    }
    if values.len() <= max_bins {
        return values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    }
    let mut cuts: Vec<f64> = (1..max_bins)
        .map(|b| {
            let idx = b * values.len() / max_bins;
            (values[idx - 1] + values[idx]) / 2.0
        })
        .collect();
    cuts.dedup();
    cuts
}

fn bin_value(cuts: &[f64], x: f64) -> u8 {
    cuts.partition_point(|&c| c < x) as u8
}

#[derive(Debug, Clone, Copy, Default)]
struct NodeStats {
    sum_t: f64,
    sum_h: f64,
    n: u64,
}

impl NodeStats {
    fn add(&mut self, t: f64, h: f64, c: u64) {
        self.sum_t += t;
        self.sum_h += h;
        self.n += c;
    }

    fn score_part(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum_t * self.sum_t / self.n as f64
        }
    }

    fn leaf_value(&self, l2: f64) -> f64 {
        // Newton step; the ridge term and floor guard near-zero hessians.
        self.sum_t / (self.sum_h + l2).max(1e-9)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: u8,
}

struct BuildNode {
    start: usize,
    end: usize,
    stats: NodeStats,
    cand: Option<Candidate>,
    split: Option<(Candidate, usize, usize)>,
}

struct TreeBuilder<'a> {
    binned: &'a [Vec<u8>],
    cuts: &'a [Vec<f64>],
    target: &'a [f64],
    hess: &'a [f64],
    count: &'a [u64],
    min_docs: u64,
    l2: f64,
}

impl<'a> TreeBuilder<'a> {
    fn node_stats(&self, seg: &[u32]) -> NodeStats {
        let mut s = NodeStats::default();
        for &r in seg {
            let r = r as usize;
            s.add(self.target[r], self.hess[r], self.count[r]);
        }
        s
    }

    /// Best variance-reduction split over all (feature, bin) candidates.
    /// Ties prefer the smaller feature, then the smaller bin, so rebuilding
    /// with the same inputs yields the same tree.
    fn best_split(&self, seg: &[u32], parent: &NodeStats) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for (feature, col) in self.binned.iter().enumerate() {
            let n_bins = self.cuts[feature].len() + 1;
            if n_bins < 2 {
                continue;
            }
            let mut hist = vec![NodeStats::default(); n_bins];
            for &r in seg {
                let r = r as usize;
                hist[col[r] as usize].add(self.target[r], self.hess[r], self.count[r]);
            }
            let mut left = NodeStats::default();
            for bin in 0..n_bins - 1 {
                left.add(hist[bin].sum_t, hist[bin].sum_h, hist[bin].n);
                let right = NodeStats {
                    sum_t: parent.sum_t - left.sum_t,
                    sum_h: parent.sum_h - left.sum_h,
                    n: parent.n - left.n,
                };
                if left.n < self.min_docs || right.n < self.min_docs {
                    continue;
                }
                let gain = left.score_part() + right.score_part() - parent.score_part();
                if gain > 1e-12 && best.map_or(true, |b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        feature,
                        bin: bin as u8,
                    });
                }
            }
        }
        best
    }

    fn build(&self, num_leaves: usize) -> Tree {
        let n_rows = self.target.len();
        let mut rows: Vec<u32> = (0..n_rows as u32).collect();
        let root_stats = self.node_stats(&rows);
        let root_cand = self.best_split(&rows, &root_stats);
        let mut nodes = vec![BuildNode {
            start: 0,
            end: n_rows,
            stats: root_stats,
            cand: root_cand,
            split: None,
        }];

        // Max-heap on gain; equal gains pop the earlier node first.
        let mut frontier: Vec<(f64, usize)> = Vec::new();
        if root_cand.is_some() {
            frontier.push((root_cand.expect("checked").gain, 0));
        }
        let mut n_leaves = 1usize;
        while n_leaves < num_leaves && !frontier.is_empty() {
            let mut pick = 0usize;
            for i in 1..frontier.len() {
                let (g, id) = frontier[i];
                let (bg, bid) = frontier[pick];
                if g > bg || (g == bg && id < bid) {
                    pick = i;
                }
            }
            let (_, node_id) = frontier.swap_remove(pick);
            let cand = nodes[node_id].cand.expect("only splittable nodes enqueued");
            let (start, end) = (nodes[node_id].start, nodes[node_id].end);

            // Stable partition: left child keeps bins <= cand.bin.
            let col = &self.binned[cand.feature];
            let mut left_rows = Vec::with_capacity(end - start);
            let mut right_rows = Vec::with_capacity(end - start);
            for &r in &rows[start..end] {
                if col[r as usize] <= cand.bin {
                    left_rows.push(r);
                } else {
                    right_rows.push(r);
                }
            }
            let mid = start + left_rows.len();
            rows[start..mid].copy_from_slice(&left_rows);
            rows[mid..end].copy_from_slice(&right_rows);

            let make_child = |s: usize, e: usize, nodes: &mut Vec<BuildNode>| -> usize {
                let stats = self.node_stats(&rows[s..e]);
                let cand = self.best_split(&rows[s..e], &stats);
                nodes.push(BuildNode {
                    start: s,
                    end: e,
                    stats,
                    cand,
                    split: None,
                });
                nodes.len() - 1
            };
            let li = make_child(start, mid, &mut nodes);
            let ri = make_child(mid, end, &mut nodes);
            nodes[node_id].split = Some((cand, li, ri));
            for id in [li, ri] {
                if let Some(c) = nodes[id].cand {
                    frontier.push((c.gain, id));
                }
            }
            n_leaves += 1;
        }

        let mut out = Vec::with_capacity(2 * n_leaves - 1);
        self.emit_preorder(&nodes, 0, &mut out);
        Tree { nodes: out }
    }

    fn emit_preorder(&self, nodes: &[BuildNode], b: usize, out: &mut Vec<TreeNode>) -> usize {
        match nodes[b].split {
            None => {
                out.push(TreeNode::Leaf {
                    value: nodes[b].stats.leaf_value(self.l2),
                });
                out.len() - 1
            }
            Some((cand, li, ri)) => {
                let id = out.len();
                out.push(TreeNode::Leaf { value: 0.0 }); // placeholder
                let left = self.emit_preorder(nodes, li, out);
                let right = self.emit_preorder(nodes, ri, out);
                out[id] = TreeNode::Split {
                    feature: cand.feature,
                    threshold: self.cuts[cand.feature][cand.bin as usize],
                    left,
                    right,
                };
                id
            }
        }
    }
}

fn split_by_lengths<'a>(buf: &'a mut [f64], lens: &[usize]) -> Vec<&'a mut [f64]> {
    let mut rest = buf;
    let mut out = Vec::with_capacity(lens.len());
    for &l in lens {
        let (head, tail) = std::mem::take(&mut rest).split_at_mut(l);
        out.push(head);
        rest = tail;
    }
    out
}

/// Train the boosted ranker on a click log. Pairs follow the
/// clicked-vs-non-clicked strategy; `scheme` supplies the pair weights that
/// scale each lambda term.
pub fn train_lambdamart(
    log: &ClickLog,
    dataset: &Dataset,
    scheme: &WeightScheme,
    cfg: &BoostConfig,
) -> Result<GBDTRanker> {
    cfg.validate()?;
    if cfg.max_bins > 256 {
        return Err(PrsError::Config("max_bins cannot exceed 256".into()));
    }
    let sessions = assemble_training(log, dataset, PairStrategy::ClickedVsNonClicked, scheme)?;

    // One row per unique (query, doc) among queries with at least one session.
    let mut query_base: BTreeMap<usize, usize> = BTreeMap::new();
    for sp in &sessions {
        query_base.entry(sp.query_index).or_insert(0);
    }
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for (&qi, base) in query_base.iter_mut() {
        *base = rows.len();
        for d in 0..dataset.queries[qi].docs.len() {
            rows.push((qi, d));
        }
    }
    let n_rows = rows.len();
    let row_features: Vec<&[f64]> = rows
        .iter()
        .map(|&(qi, d)| dataset.queries[qi].docs[d].features.as_slice())
        .collect();

    let session_base: Vec<usize> = sessions.iter().map(|sp| query_base[&sp.query_index]).collect();
    let session_len: Vec<usize> = sessions.iter().map(|sp| sp.clicks_by_doc.len()).collect();
    let mut row_count = vec![0u64; n_rows];
    for (si, &base) in session_base.iter().enumerate() {
        for d in 0..session_len[si] {
            row_count[base + d] += 1;
        }
    }

    let dim = dataset.feature_dim;
    let cuts: Vec<Vec<f64>> = (0..dim)
        .map(|f| build_cuts(row_features.iter().map(|fv| fv[f]).collect(), cfg.max_bins))
        .collect();
    let binned: Vec<Vec<u8>> = (0..dim)
        .map(|f| row_features.iter().map(|fv| bin_value(&cuts[f], fv[f])).collect())
        .collect();

    let total_inst: usize = session_len.iter().sum();
    let mut offsets = Vec::with_capacity(sessions.len());
    let mut acc = 0usize;
    for &l in &session_len {
        offsets.push(acc);
        acc += l;
    }

    let mut row_scores = vec![0.0f64; n_rows];
    let mut inst_lambda = vec![0.0f64; total_inst];
    let mut inst_hess = vec![0.0f64; total_inst];
    let mut row_target = vec![0.0f64; n_rows];
    let mut row_hess = vec![0.0f64; n_rows];
    let mut trees = Vec::with_capacity(cfg.num_trees);

    for _round in 0..cfg.num_trees {
        {
            // Parallel lambda pass: each session writes its own slice, so the
            // result is independent of scheduling.
            let lam_slices = split_by_lengths(&mut inst_lambda, &session_len);
            let hes_slices = split_by_lengths(&mut inst_hess, &session_len);
            let outputs: Vec<(&mut [f64], &mut [f64])> =
                lam_slices.into_iter().zip(hes_slices).collect();
            let scores_ref = &row_scores;
            sessions
                .par_iter()
                .zip(session_base.par_iter())
                .zip(outputs.into_par_iter())
                .for_each(|((sp, &base), (lam, hes))| {
                    let n = sp.clicks_by_doc.len();
                    let scores: Vec<f64> =
                        (0..n).map(|d| scores_ref[base + d]).collect();
                    let (l, h) =
                        lambda_gradients(&sp.pairs, &scores, &sp.clicks_by_doc, cfg.sigma);
                    lam.copy_from_slice(&l);
                    hes.copy_from_slice(&h);
                });
        }

        row_target.iter_mut().for_each(|t| *t = 0.0);
        row_hess.iter_mut().for_each(|h| *h = 0.0);
        for si in 0..sessions.len() {
            let (base, off) = (session_base[si], offsets[si]);
            for d in 0..session_len[si] {
                row_target[base + d] -= inst_lambda[off + d]; // trees fit -lambda
                row_hess[base + d] += inst_hess[off + d];
            }
        }

        let builder = TreeBuilder {
            binned: &binned,
            cuts: &cuts,
            target: &row_target,
            hess: &row_hess,
            count: &row_count,
            min_docs: cfg.min_docs_per_leaf as u64,
            l2: cfg.l2_lambda,
        };
        let tree = builder.build(cfg.num_leaves);
        for r in 0..n_rows {
            row_scores[r] += cfg.learning_rate * tree.leaf_value(row_features[r]);
        }
        trees.push(tree);
    }

    Ok(GBDTRanker {
        trees,
        learning_rate: cfg.learning_rate,
        sigma: cfg.sigma,
        feature_dim: dim,
    })
}

impl GBDTRanker {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{GBDT_HEADER}").expect("string write");
        writeln!(out, "dim {}", self.feature_dim).expect("string write");
        writeln!(out, "learning_rate {:.16e}", self.learning_rate).expect("string write");
        writeln!(out, "sigma {:.16e}", self.sigma).expect("string write");
        writeln!(out, "trees {}", self.trees.len()).expect("string write");
        for tree in &self.trees {
            writeln!(out, "tree {}", tree.nodes.len()).expect("string write");
            for node in &tree.nodes {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "split {feature} {threshold:.16e} {left} {right}")
                        .expect("string write"),
                    TreeNode::Leaf { value } => {
                        writeln!(out, "leaf {value:.16e}").expect("string write")
                    }
                }
            }
        }
        fs::write(path, out)?;
        Ok(())
    }
}

pub(crate) fn parse_gbdt(content: &str) -> Result<GBDTRanker> {
    let mut lines = content.lines();
    let bad = |m: &str| PrsError::ModelFormat(m.to_string());
    if lines.next() != Some(GBDT_HEADER) {
        return Err(bad("missing gbdt model header"));
    }
    let mut field = |prefix: &str| -> Result<String> {
        lines
            .next()
            .and_then(|l| l.strip_prefix(prefix))
            .map(|s| s.to_string())
            .ok_or_else(|| bad(&format!("missing `{prefix}` line")))
    };
    let feature_dim: usize = field("dim ")?.parse().map_err(|_| bad("bad dim"))?;
    let learning_rate: f64 = field("learning_rate ")?
        .parse()
        .map_err(|_| bad("bad learning_rate"))?;
    let sigma: f64 = field("sigma ")?.parse().map_err(|_| bad("bad sigma"))?;
    let n_trees: usize = field("trees ")?.parse().map_err(|_| bad("bad tree count"))?;

    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("tree "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing tree header"))?;
        if n_nodes == 0 {
            return Err(bad("tree with zero nodes"));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let line = lines.next().ok_or_else(|| bad("truncated tree"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let node = match toks.as_slice() {
                ["split", f, t, l, r] => {
                    let feature: usize = f.parse().map_err(|_| bad("bad split feature"))?;
                    let threshold: f64 = t.parse().map_err(|_| bad("bad split threshold"))?;
                    let left: usize = l.parse().map_err(|_| bad("bad left index"))?;
                    let right: usize = r.parse().map_err(|_| bad("bad right index"))?;
                    if feature >= feature_dim || !threshold.is_finite() {
                        return Err(bad("split on invalid feature or threshold"));
                    }
                    if left >= n_nodes || right >= n_nodes {
                        return Err(bad("child index out of range"));
                    }
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                }
                ["leaf", v] => TreeNode::Leaf {
                    value: v.parse().map_err(|_| bad("bad leaf value"))?,
                },
                _ => return Err(bad(&format!("bad node line `{line}`"))),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    Ok(GBDTRanker {
        trees,
        learning_rate,
        sigma,
        feature_dim,
    })
}
