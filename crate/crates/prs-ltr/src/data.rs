//! Ranking dataset handling: SVMLight/LETOR parsing, relevance binarization,
//! production/remainder splitting, and a synthetic corpus generator.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PrsError, Result};

/// One document of one query: dense features plus its original graded label.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedDocument {
    /// Ordinal of the document within its query, 0-based.
    pub doc_index: usize,
    pub features: Vec<f64>,
    pub graded_label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub qid: String,
    pub docs: Vec<GradedDocument>,
    /// binary_relevance[i] = 1 iff docs[i].graded_label >= the dataset threshold.
    pub binary_relevance: Vec<u8>,
}

impl QueryGroup {
    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_relevant(&self) -> usize {
        self.binary_relevance.iter().filter(|&&r| r == 1).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub queries: Vec<QueryGroup>,
    pub feature_dim: usize,
    pub binarization_threshold: u8,
}

impl Dataset {
    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_docs(&self) -> usize {
        self.queries.iter().map(|q| q.docs.len()).sum()
    }

    pub fn max_grade(&self) -> u8 {
        self.queries
            .iter()
            .flat_map(|q| q.docs.iter())
            .map(|d| d.graded_label)
            .max()
            .unwrap_or(0)
    }

    /// Lookup table from qid to position in `queries`.
    pub fn qid_index(&self) -> HashMap<&str, usize> {
        self.queries
            .iter()
            .enumerate()
            .map(|(i, q)| (q.qid.as_str(), i))
            .collect()
    }
}

/// Threshold convention used by the experiment pipeline: 5-grade corpora
/// binarize at 3, 3-grade corpora at 1.
pub fn default_threshold(max_grade: u8) -> u8 {
    if max_grade >= 3 {
        3
    } else {
        1
    }
}

fn binarize_group(docs: &[GradedDocument], threshold: u8) -> Vec<u8> {
    docs.iter()
        .map(|d| u8::from(d.graded_label >= threshold))
        .collect()
}

/// Parse an SVMLight/LETOR file: `<label> qid:<id> <fid>:<val> ... [# comment]`.
///
/// Documents are grouped by contiguous qid runs in file order. Missing feature
/// ids are zero-filled and the feature dimension is the maximum id seen
/// anywhere in the file. The returned dataset is binarized at threshold 1;
/// callers that want a different threshold re-binarize.
pub fn parse_svmlight(path: &Path) -> Result<Dataset> {
    let content = fs::read_to_string(path)?;
    parse_svmlight_str(&content)
}

pub fn parse_svmlight_str(content: &str) -> Result<Dataset> {
    struct RawDoc {
        label: u8,
        features: Vec<(usize, f64)>,
    }

    let mut groups: Vec<(String, Vec<RawDoc>)> = Vec::new();
    let mut seen_qids: HashSet<String> = HashSet::new();
    let mut max_fid = 0usize;

    for (idx, raw_line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank or comment-only line
        };

        let label_val: f64 = label_tok
            .parse()
            .map_err(|_| PrsError::parse(line_no, format!("bad relevance label `{label_tok}`")))?;
        if !label_val.is_finite() || label_val.fract() != 0.0 || !(0.0..=255.0).contains(&label_val)
        {
            return Err(PrsError::parse(
                line_no,
                format!("relevance label `{label_tok}` is not a small nonnegative integer"),
            ));
        }
        let label = label_val as u8;

        let qid_tok = tokens
            .next()
            .ok_or_else(|| PrsError::parse(line_no, "missing qid field"))?;
        let qid = qid_tok
            .strip_prefix("qid:")
            .ok_or_else(|| PrsError::parse(line_no, format!("expected qid:<id>, got `{qid_tok}`")))?
            .to_string();
        if qid.is_empty() {
            return Err(PrsError::parse(line_no, "empty qid"));
        }

        let mut features = Vec::new();
        let mut last_fid = 0usize;
        for tok in tokens {
            let (fid_s, val_s) = tok.split_once(':').ok_or_else(|| {
                PrsError::parse(line_no, format!("expected <fid>:<val>, got `{tok}`"))
            })?;
            let fid: usize = fid_s
                .parse()
                .map_err(|_| PrsError::parse(line_no, format!("bad feature id `{fid_s}`")))?;
            let val: f64 = val_s
                .parse()
                .map_err(|_| PrsError::parse(line_no, format!("bad feature value `{val_s}`")))?;
            if fid == 0 {
                return Err(PrsError::parse(line_no, "feature ids are 1-based"));
            }
            if fid <= last_fid {
                return Err(PrsError::parse(
                    line_no,
                    format!("feature ids must be strictly increasing, got {fid} after {last_fid}"),
                ));
            }
            if !val.is_finite() {
                return Err(PrsError::parse(line_no, format!("non-finite feature value `{val_s}`")));
            }
            last_fid = fid;
            max_fid = max_fid.max(fid);
            features.push((fid, val));
        }

        let doc = RawDoc { label, features };
        match groups.last_mut() {
            Some((gq, docs)) if *gq == qid => docs.push(doc),
            _ => {
                if !seen_qids.insert(qid.clone()) {
                    return Err(PrsError::parse(
                        line_no,
                        format!("qid {qid} appears in two non-adjacent blocks"),
                    ));
                }
                groups.push((qid, vec![doc]));
            }
        }
    }

    if groups.is_empty() {
        return Err(PrsError::EmptyDataset("no documents in input".into()));
    }

    let threshold = 1u8;
    let queries = groups
        .into_iter()
        .map(|(qid, raw_docs)| {
            let docs: Vec<GradedDocument> = raw_docs
                .into_iter()
                .enumerate()
                .map(|(i, rd)| {
                    let mut features = vec![0.0; max_fid];
                    for (fid, val) in rd.features {
                        features[fid - 1] = val;
                    }
                    GradedDocument {
                        doc_index: i,
                        features,
                        graded_label: rd.label,
                    }
                })
                .collect();
            let binary_relevance = binarize_group(&docs, threshold);
            QueryGroup {
                qid,
                docs,
                binary_relevance,
            }
        })
        .collect();

    Ok(Dataset {
        queries,
        feature_dim: max_fid,
        binarization_threshold: threshold,
    })
}

/// Write a dataset in SVMLight format, eliding exactly-zero features.
pub fn write_svmlight(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for query in &dataset.queries {
        for doc in &query.docs {
            write!(out, "{} qid:{}", doc.graded_label, query.qid).expect("string write");
            for (i, &v) in doc.features.iter().enumerate() {
                if v != 0.0 {
                    write!(out, " {}:{}", i + 1, v).expect("string write");
                }
            }
            out.push('\n');
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Recompute binary relevance at `threshold`, keeping graded labels.
pub fn binarize(dataset: &Dataset, threshold: u8) -> Dataset {
    let queries = dataset
        .queries
        .iter()
        .map(|q| QueryGroup {
            qid: q.qid.clone(),
            docs: q.docs.clone(),
            binary_relevance: binarize_group(&q.docs, threshold),
        })
        .collect();
    Dataset {
        queries,
        feature_dim: dataset.feature_dim,
        binarization_threshold: threshold,
    }
}

/// Carve out a production slice of ceil(fraction * |Q|) queries, sampled
/// without replacement. Both slices keep the original query order.
pub fn split_production(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PrsError::InvalidArgument(format!(
            "production fraction must be in (0,1), got {fraction}"
        )));
    }
    let n = dataset.n_queries();
    if n < 2 {
        return Err(PrsError::InvalidArgument(
            "need at least 2 queries to split".into(),
        ));
    }
    let n_prod = (fraction * n as f64).ceil() as usize;
    if n_prod == 0 {
        return Err(PrsError::InvalidArgument(
            "production fraction selects 0 queries".into(),
        ));
    }
    if n_prod >= n {
        return Err(PrsError::InvalidArgument(format!(
            "production fraction {fraction} leaves no remainder queries"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut prod_idx: Vec<usize> = indices[..n_prod].to_vec();
    let mut rest_idx: Vec<usize> = indices[n_prod..].to_vec();
    prod_idx.sort_unstable();
    rest_idx.sort_unstable();

    let take = |idx: &[usize]| Dataset {
        queries: idx.iter().map(|&i| dataset.queries[i].clone()).collect(),
        feature_dim: dataset.feature_dim,
        binarization_threshold: dataset.binarization_threshold,
    };
    Ok((take(&prod_idx), take(&rest_idx)))
}

/// Configuration for the synthetic ranking corpus.
///
/// Documents draw features uniformly from [0,1]; a hidden linear utility over
/// the first `informative_dims` features, perturbed by Gaussian label noise,
/// is bucketed per query into grades 4..0 so every query has a fixed share of
/// relevant documents. Train and test share the hidden utility weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train_queries: usize,
    pub test_queries: usize,
    pub docs_per_query: usize,
    pub feature_dim: usize,
    pub informative_dims: usize,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_queries: 200,
            test_queries: 100,
            docs_per_query: 15,
            feature_dim: 12,
            informative_dims: 8,
            label_noise: 0.25,
            seed: 7,
        }
    }
}

pub struct SyntheticCorpus {
    pub train: Dataset,
    pub test: Dataset,
}

/// Approximate standard normal draw (Irwin-Hall sum of 12 uniforms).
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0
}

pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.docs_per_query < 2 || cfg.feature_dim == 0 || cfg.informative_dims > cfg.feature_dim {
        return Err(PrsError::InvalidArgument(
            "synthetic corpus needs >=2 docs/query and 0 < informative_dims <= feature_dim".into(),
        ));
    }
    if cfg.train_queries == 0 || cfg.test_queries == 0 {
        return Err(PrsError::InvalidArgument(
            "synthetic corpus needs nonempty train and test".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let utility_weights: Vec<f64> = (0..cfg.feature_dim)
        .map(|k| {
            if k < cfg.informative_dims {
                rng.gen_range(0.5..1.5)
            } else {
                0.0
            }
        })
        .collect();

    let mut make_split = |prefix: &str, n_queries: usize| -> Dataset {
        let queries = (0..n_queries)
            .map(|qi| {
                let n = cfg.docs_per_query;
                let docs: Vec<GradedDocument> = (0..n)
                    .map(|di| {
                        let features: Vec<f64> =
                            (0..cfg.feature_dim).map(|_| rng.gen::<f64>()).collect();
                        GradedDocument {
                            doc_index: di,
                            features,
                            graded_label: 0,
                        }
                    })
                    .collect();
                let noisy_utility: Vec<f64> = docs
                    .iter()
                    .map(|d| {
                        let u: f64 = d
                            .features
                            .iter()
                            .zip(&utility_weights)
                            .map(|(x, w)| x * w)
                            .sum();
                        u + cfg.label_noise * gauss(&mut rng)
                    })
                    .collect();

                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    noisy_utility[b]
                        .partial_cmp(&noisy_utility[a])
                        .expect("finite utilities")
                        .then(a.cmp(&b))
                });

                // Grade shares top-down: 7% grade 4, 13% grade 3, 20% grade 2,
                // 25% grade 1, remainder grade 0. Binarizing at 3 marks the
                // top fifth of each query relevant.
                let n4 = ((0.07 * n as f64).round() as usize).max(1);
                let n3 = (0.13 * n as f64).round() as usize;
                let n2 = (0.20 * n as f64).round() as usize;
                let n1 = (0.25 * n as f64).round() as usize;
                let mut docs = docs;
                for (pos, &di) in order.iter().enumerate() {
                    docs[di].graded_label = if pos < n4 {
                        4
                    } else if pos < n4 + n3 {
                        3
                    } else if pos < n4 + n3 + n2 {
                        2
                    } else if pos < n4 + n3 + n2 + n1 {
                        1
                    } else {
                        0
                    };
                }
                let binary_relevance = binarize_group(&docs, 3);
                QueryGroup {
                    qid: format!("{prefix}{qi}"),
                    docs,
                    binary_relevance,
                }
            })
            .collect();
        Dataset {
            queries,
            feature_dim: cfg.feature_dim,
            binarization_threshold: 3,
        }
    };

    let train = make_split("t", cfg.train_queries);
    let test = make_split("e", cfg.test_queries);
    Ok(SyntheticCorpus { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn parses_single_line() {
        let ds = parse_svmlight_str("2 qid:7 1:0.5 3:1.0\n").unwrap();
        assert_eq!(ds.feature_dim, 3);
        assert_eq!(ds.queries.len(), 1);
        let q = &ds.queries[0];
        assert_eq!(q.qid, "7");
        assert_eq!(q.docs[0].graded_label, 2);
        assert_eq!(q.docs[0].features, vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn groups_contiguous_qids() {
        let ds = parse_svmlight_str("1 qid:a 1:1\n0 qid:a 1:2\n2 qid:b 1:3\n").unwrap();
        assert_eq!(ds.queries.len(), 2);
        assert_eq!(ds.queries[0].docs.len(), 2);
        assert_eq!(ds.queries[1].docs.len(), 1);
    }

    #[test]
    fn reports_line_number_on_bad_label() {
        let err = parse_svmlight_str("1 qid:7 1:0.5\nx qid:7 1:a\n").unwrap_err();
        match err {
            PrsError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_input() {
        assert!(matches!(
            parse_svmlight_str(""),
            Err(PrsError::EmptyDataset(_))
        ));
    }

    #[test]
    fn rejects_decreasing_feature_ids() {
        assert!(parse_svmlight_str("1 qid:7 2:1 1:1\n").is_err());
    }

    #[test]
    fn rejects_split_qid_blocks() {
        assert!(parse_svmlight_str("1 qid:a 1:1\n1 qid:b 1:1\n1 qid:a 1:1\n").is_err());
    }

    #[test]
    fn strips_comments() {
        let ds = parse_svmlight_str("1 qid:7 1:0.5 # docid=42\n").unwrap();
        assert_eq!(ds.queries[0].docs[0].features, vec![0.5]);
    }

    #[test]
    fn binarize_five_grades_at_three() {
        let text = "0 qid:q 1:1\n1 qid:q 1:1\n2 qid:q 1:1\n3 qid:q 1:1\n4 qid:q 1:1\n";
        let ds = binarize(&parse_svmlight_str(text).unwrap(), 3);
        assert_eq!(ds.queries[0].binary_relevance, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn binarize_three_grades_at_one() {
        let text = "0 qid:q 1:1\n1 qid:q 1:1\n2 qid:q 1:1\n";
        let ds = binarize(&parse_svmlight_str(text).unwrap(), 1);
        assert_eq!(ds.queries[0].binary_relevance, vec![0, 1, 1]);
    }

    #[test]
    fn binarize_all_zero_grades() {
        let ds = binarize(&parse_svmlight_str("0 qid:q 1:1\n0 qid:q 1:2\n").unwrap(), 1);
        assert_eq!(ds.queries[0].binary_relevance, vec![0, 0]);
    }

    #[test]
    fn binarize_is_idempotent() {
        let ds = parse_svmlight_str("0 qid:q 1:1\n3 qid:q 1:1\n4 qid:q 1:1\n").unwrap();
        let once = binarize(&ds, 3);
        let twice = binarize(&once, 3);
        assert_eq!(once, twice);
    }

    #[test]
    fn default_thresholds_follow_grade_range() {
        assert_eq!(default_threshold(4), 3);
        assert_eq!(default_threshold(2), 1);
    }

    fn many_query_dataset(n: usize) -> Dataset {
        let text: String = (0..n).map(|i| format!("1 qid:{i} 1:{i}\n")).collect();
        parse_svmlight_str(&text).unwrap()
    }

    #[test]
    fn split_one_percent_of_hundred() {
        let ds = many_query_dataset(100);
        let (prod, rest) = split_production(&ds, 0.01, 3).unwrap();
        assert_eq!(prod.n_queries(), 1);
        assert_eq!(rest.n_queries(), 99);
    }

    #[test]
    fn split_half_of_four() {
        let ds = many_query_dataset(4);
        let (prod, rest) = split_production(&ds, 0.5, 3).unwrap();
        assert_eq!(prod.n_queries(), 2);
        assert_eq!(rest.n_queries(), 2);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let ds = many_query_dataset(30);
        let a = split_production(&ds, 0.2, 11).unwrap();
        let b = split_production(&ds, 0.2, 11).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = many_query_dataset(10);
        assert!(split_production(&ds, 0.0, 1).is_err());
        assert!(split_production(&ds, 1.0, 1).is_err());
        assert!(split_production(&ds, 0.99, 1).is_err()); // ceil(9.9) = 10 leaves nothing
    }

    #[test]
    fn synthetic_corpus_shape_and_relevance_share() {
        let cfg = SyntheticConfig {
            train_queries: 10,
            test_queries: 5,
            ..SyntheticConfig::default()
        };
        let corpus = synthetic_corpus(&cfg).unwrap();
        assert_eq!(corpus.train.n_queries(), 10);
        assert_eq!(corpus.test.n_queries(), 5);
        for q in corpus.train.queries.iter().chain(&corpus.test.queries) {
            assert_eq!(q.n_docs(), cfg.docs_per_query);
            assert_eq!(q.n_relevant(), 3); // grades 4 and 3 out of 15 docs
        }
    }

    #[test]
    fn synthetic_corpus_is_seed_deterministic() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_corpus(&cfg).unwrap();
        let b = synthetic_corpus(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    proptest! {
        #[test]
        fn roundtrip_through_svmlight(
            n_queries in 1usize..5,
            docs in 1usize..4,
            dim in 1usize..6,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut text = String::new();
            for q in 0..n_queries {
                for _ in 0..docs {
                    text.push_str(&format!("{} qid:{}", rng.gen_range(0u8..5), q));
                    for f in 0..dim {
                        // Mix of exact zeros (elided on write) and random values.
                        if rng.gen::<f64>() < 0.7 {
                            text.push_str(&format!(" {}:{}", f + 1, rng.gen::<f64>()));
                        }
                    }
                    text.push('\n');
                }
            }
            // Guarantee the max fid appears so feature_dim survives the trip.
            text.push_str(&format!("0 qid:last {dim}:1\n"));

            let ds = parse_svmlight_str(&text).unwrap();
            let tmp = tempfile::NamedTempFile::new().unwrap();
            write_svmlight(&ds, tmp.path()).unwrap();
            let back = parse_svmlight(tmp.path()).unwrap();
            prop_assert_eq!(ds, back);
        }

        #[test]
        fn split_partitions_queries(n in 3usize..40, seed in 0u64..500, pct in 1u32..50) {
            let ds = many_query_dataset(n);
            let fraction = pct as f64 / 100.0;
            let n_prod = (fraction * n as f64).ceil() as usize;
            prop_assume!(n_prod < n);
            let (prod, rest) = split_production(&ds, fraction, seed).unwrap();
            prop_assert_eq!(prod.n_queries(), n_prod);
            prop_assert_eq!(prod.n_queries() + rest.n_queries(), n);
            let mut qids: Vec<&str> = prod.queries.iter().chain(&rest.queries)
                .map(|q| q.qid.as_str()).collect();
            qids.sort_unstable();
            qids.dedup();
            prop_assert_eq!(qids.len(), n);
        }
    }
}
