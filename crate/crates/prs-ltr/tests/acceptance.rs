//! Release gate: every acceptance criterion in one test, each reported as a
//! pass/fail line. Tolerances, corpus shapes and sweep settings are pinned
//! here on purpose; if a change moves one of these numbers it is a behavior
//! change and should be treated as such.
//!
//! The criterion lines go to the real stdout, past the harness capture, so
//! a plain `cargo test` streams them as they finish. Criteria 1 through 8
//! are exact property checks and take seconds; criteria 9 through 13
//! retrain rankers from simulated click logs and dominate the runtime
//! (several minutes on one core).

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prs_ltr::data::{split_production, synthetic_corpus, SyntheticConfig};
use prs_ltr::experiment::{
    load_experiment_data, run_experiment_with_data, ExperimentConfig, ExperimentData, Learner,
    PropensitySource, RunRow,
};
use prs_ltr::learn::boost::{lambda_gradients, train_lambdamart};
use prs_ltr::learn::linear::{logistic_gradient, pairwise_logistic_loss, train_logreg};
use prs_ltr::learn::{BoostConfig, LinearRanker, Scorer, SgdConfig};
use prs_ltr::metrics::{arp, average_precision, ndcg_at_k, rank_by_scores, wmrr};
use prs_ltr::oracle::{
    closed_form_ips_expectation, closed_form_prs_expectation, exact_expected_loss,
    fd_gradient_check, hoeffding_bounds, ips_relevant_relevant_contamination,
    pointwise_ips_unbiasedness, prs_relevant_relevant_residue, random_session,
};
use prs_ltr::propensity::{estimate_ratios, simulate_swap_experiment};
use prs_ltr::simulate::{
    observation_propensity, simulate_clicks, simulate_sessions, train_production_ranker,
};
use prs_ltr::weighting::{PairStrategy, SchemeKind, TrainingPair, WeightScheme};
use prs_ltr::Result;

/// Clicked-vs-all differs from clicked-vs-non-clicked only on pairs whose
/// partner was itself clicked, and with binarized labels those extra pairs
/// mostly relate two relevant documents, which the test metric is nearly
/// indifferent to. Their ordering is a near-tie, so the "not worse" leg of
/// criterion 9 carries a margin of about three seed standard deviations.
const STRATEGY_TIE_MARGIN: f64 = 0.0035;

#[derive(Default)]
struct Gate {
    results: Vec<(usize, bool)>,
}

impl Gate {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        // The print macros land in the harness capture buffer; these lines
        // are the release evidence, so write the handle directly.
        writeln!(
            io::stdout(),
            "criterion {id:2}: {}  {detail}",
            if ok { "pass" } else { "FAIL" }
        )
        .expect("stdout write");
        self.results.push((id, ok));
    }

    fn run(&mut self, id: usize, body: impl FnOnce() -> Result<(bool, String)>) {
        match body() {
            Ok((ok, detail)) => self.record(id, ok, detail),
            Err(e) => self.record(id, false, format!("errored: {e}")),
        }
    }
}

/// Shared corpus for the sweep criteria: wide lists and heavy label noise so
/// the production ranker starts weak and the weighting schemes separate.
fn wide_corpus() -> SyntheticConfig {
    SyntheticConfig {
        train_queries: 1000,
        test_queries: 100,
        docs_per_query: 30,
        feature_dim: 24,
        informative_dims: 6,
        label_noise: 0.35,
        seed: 7,
    }
}

/// Base sweep settings for the logistic criteria (10 through 13). The SGD
/// rate is lowered from the library default because unclipped inverse
/// weights on thirty-document lists diverge at 0.5.
fn logreg_base() -> ExperimentConfig {
    ExperimentConfig {
        synthetic: Some(wide_corpus()),
        schemes: vec![SchemeKind::Naive, SchemeKind::Ips, SchemeKind::Prs],
        sgd: SgdConfig {
            learning_rate: 0.2,
            ..SgdConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

fn per_seed(rows: &[RunRow], pred: impl Fn(&RunRow) -> bool) -> BTreeMap<u64, f64> {
    rows.iter()
        .filter(|r| pred(r))
        .filter_map(|r| r.seed.parse::<u64>().ok().map(|s| (s, r.ndcg10)))
        .collect()
}

fn summary(rows: &[RunRow], which: &str, pred: impl Fn(&RunRow) -> bool) -> f64 {
    rows.iter()
        .find(|r| r.seed == which && pred(r))
        .map(|r| r.ndcg10)
        .expect("summary row present")
}

/// Seeds where ndcg@10 strictly orders prs > ips > naive in `rows` at the
/// given click budget.
fn ordered_seeds(rows: &[RunRow], clicks: u64) -> usize {
    let of = |scheme: SchemeKind| per_seed(rows, |r| r.scheme == scheme && r.n_clicks == clicks);
    let (naive, ips, prs) = (of(SchemeKind::Naive), of(SchemeKind::Ips), of(SchemeKind::Prs));
    naive
        .keys()
        .filter(|s| prs[s] > ips[s] && ips[s] > naive[s])
        .count()
}

fn criterion_1(gate: &mut Gate) {
    gate.run(1, || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let s = random_session(&mut rng, 8);
            let deltas: Vec<f64> = (0..s.n()).map(|_| rng.gen_range(0.0..2.0)).collect();
            let (estimate, truth) = pointwise_ips_unbiasedness(&s, &deltas)?;
            worst = worst.max((estimate - truth).abs());
        }
        let secs = started.elapsed().as_secs_f64();
        Ok((
            worst <= 1e-12 && secs < 5.0,
            format!(
                "per-document inverse-propensity expectation equals the true risk on 200 \
                 enumerated sessions, worst gap {worst:.1e} (tol 1e-12), {secs:.2}s"
            ),
        ))
    });
}

fn criterion_2(gate: &mut Gate) {
    gate.run(2, || {
        let started = Instant::now();
        let ips = WeightScheme::ips(f64::INFINITY)?;
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut worst = 0.0f64;
        let mut exercised = 0usize;
        let mut positive = true;
        for _ in 0..200 {
            let s = random_session(&mut rng, 8);
            let enumerated = exact_expected_loss(&s, &ips, PairStrategy::ClickedVsNonClicked)?;
            worst = worst.max((enumerated - closed_form_ips_expectation(&s)).abs());
            let rel: Vec<usize> = (0..s.n()).filter(|&i| s.relevance[i] == 1).collect();
            let applies = rel.iter().any(|&i| {
                rel.iter()
                    .any(|&j| j != i && s.propensities[j] < 1.0 && s.delta[i][j] > 0.0)
            });
            if applies {
                exercised += 1;
                positive &= ips_relevant_relevant_contamination(&s) > 0.0;
            }
        }
        let secs = started.elapsed().as_secs_f64();
        Ok((
            worst <= 1e-10 && positive && exercised >= 50 && secs < 10.0,
            format!(
                "inverse-propensity pair expectation matches enumeration on 200 sessions, worst \
                 gap {worst:.1e} (tol 1e-10); relevant-relevant contamination strictly positive \
                 in all {exercised} sessions where a relevant partner can go unobserved, \
                 {secs:.2}s"
            ),
        ))
    });
}

fn criterion_3(gate: &mut Gate) {
    gate.run(3, || {
        let started = Instant::now();
        let prs = WeightScheme::prs(f64::INFINITY, f64::INFINITY)?;
        let strategy = PairStrategy::ClickedVsNonClicked;
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let mut worst = 0.0f64;
        let mut worst_shift = 0.0f64;
        let mut exercised = 0usize;
        for _ in 0..200 {
            let s = random_session(&mut rng, 8);
            let enumerated = exact_expected_loss(&s, &prs, strategy)?;
            let closed = closed_form_prs_expectation(&s) + prs_relevant_relevant_residue(&s);
            worst = worst.max((enumerated - closed).abs());
            // Bumping a relevant-relevant loss entry must leave the
            // relevant-vs-irrelevant form untouched and move the enumeration
            // by exactly what the residue predicts.
            let rel: Vec<usize> = (0..s.n()).filter(|&i| s.relevance[i] == 1).collect();
            if rel.len() >= 2 {
                exercised += 1;
                let (a, b) = (rel[0], rel[1]);
                let mut bumped = s.clone();
                bumped.delta[a][b] += 1.0;
                let closed_shift =
                    closed_form_prs_expectation(&bumped) - closed_form_prs_expectation(&s);
                let enum_shift = exact_expected_loss(&bumped, &prs, strategy)? - enumerated;
                let residue_shift =
                    prs_relevant_relevant_residue(&bumped) - prs_relevant_relevant_residue(&s);
                worst_shift = worst_shift
                    .max(closed_shift.abs())
                    .max((enum_shift - residue_shift).abs());
            }
        }
        let secs = started.elapsed().as_secs_f64();
        Ok((
            worst <= 1e-10 && worst_shift <= 1e-10 && exercised >= 30 && secs < 10.0,
            format!(
                "ratio-weighted expectation equals its relevant-vs-irrelevant form plus the \
                 relevant-relevant residue on 200 sessions, worst gap {worst:.1e} (tol 1e-10); \
                 perturbing a relevant-relevant loss never moves the closed form and moves the \
                 enumeration by the residue exactly ({exercised} sessions, worst \
                 {worst_shift:.1e}), {secs:.2}s"
            ),
        ))
    });
}

fn criterion_4(gate: &mut Gate) {
    gate.run(4, || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut seen = 0usize;
        let mut worst = f64::NEG_INFINITY;
        while seen < 500 {
            let s = random_session(&mut rng, 8);
            if !s.relevance.contains(&1) {
                continue;
            }
            seen += 1;
            let b = hoeffding_bounds(&s, 0.05)?;
            for (r, t) in b.rho.iter().zip(&b.tau) {
                worst = worst.max(r - t);
            }
            worst = worst.max(b.prs_bound - b.ips_bound);
        }
        let secs = started.elapsed().as_secs_f64();
        Ok((
            worst <= 0.0 && secs < 5.0,
            format!(
                "per-click deviation ranges obey rho <= tau elementwise and the pooled ratio \
                 bound never exceeds the inverse-propensity bound on 500 sessions, worst excess \
                 {worst:.1e}, {secs:.2}s"
            ),
        ))
    });
}

fn criterion_5(gate: &mut Gate) {
    gate.run(5, || {
        // With every propensity 1 all four weights are exactly 1, for any
        // ratio cap at or above 1.
        let unit_schemes = [
            WeightScheme::naive(),
            WeightScheme::ips(f64::INFINITY)?,
            WeightScheme::pns(),
            WeightScheme::prs(1.0, f64::INFINITY)?,
            WeightScheme::prs(f64::INFINITY, f64::INFINITY)?,
        ];
        let mut weights_unit = true;
        for s in &unit_schemes {
            weights_unit &= s.pair_weight(1.0, 1.0)? == 1.0;
        }

        // A flat-exposure log (severity 0) then trains byte-identical
        // rankers under every scheme and both learners.
        let corpus = synthetic_corpus(&SyntheticConfig::default())?;
        let (slice, pool) = split_production(&corpus.train, 0.05, 42)?;
        let production = train_production_ranker(&slice, &SgdConfig::default())?;
        let log = simulate_clicks(&production, &pool, 4_000, 0.0, 0.1, 11, false)?;

        let four = |gamma: f64| -> Result<Vec<WeightScheme>> {
            Ok(vec![
                WeightScheme::naive(),
                WeightScheme::ips(f64::INFINITY)?,
                WeightScheme::pns(),
                WeightScheme::prs(gamma, f64::INFINITY)?,
            ])
        };

        let sgd = SgdConfig {
            learning_rate: 0.2,
            ..SgdConfig::default()
        };
        let mut linear = Vec::new();
        for scheme in &four(1.0)? {
            linear.push(train_logreg(
                &log,
                &pool,
                PairStrategy::ClickedVsNonClicked,
                scheme,
                &sgd,
            )?);
        }
        let linear_same = linear.iter().all(|m| m.weights == linear[0].weights);

        let boost = BoostConfig {
            num_trees: 20,
            num_leaves: 15,
            min_docs_per_leaf: 10,
            ..BoostConfig::default()
        };
        let mut boosted = Vec::new();
        for scheme in &four(f64::INFINITY)? {
            boosted.push(train_lambdamart(&log, &pool, scheme, &boost)?);
        }
        let mut boosted_same = true;
        for q in &corpus.test.queries {
            for d in &q.docs {
                let reference = boosted[0].score(&d.features);
                boosted_same &= boosted.iter().all(|m| m.score(&d.features) == reference);
            }
        }

        Ok((
            weights_unit && linear_same && boosted_same,
            format!(
                "at severity 0 every scheme weight is exactly 1 and the four rankers coincide \
                 bit for bit (linear weights equal: {linear_same}, boosted test scores equal: \
                 {boosted_same})"
            ),
        ))
    });
}

fn criterion_6(gate: &mut Gate) {
    gate.run(6, || {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        let mut worst_logistic = 0.0f64;
        for _ in 0..200 {
            let dim = rng.gen_range(1..6usize);
            let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let xj: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pw = rng.gen_range(0.1..3.0);
            let (xi_c, xj_c) = (xi.clone(), xj.clone());
            let loss = move |w: &[f64]| -> f64 {
                let si: f64 = w.iter().zip(&xi_c).map(|(a, b)| a * b).sum();
                let sj: f64 = w.iter().zip(&xj_c).map(|(a, b)| a * b).sum();
                pairwise_logistic_loss(si, sj, pw)
            };
            let grad = move |w: &[f64]| -> Vec<f64> { logistic_gradient(&xi, &xj, w, pw) };
            let point: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst_logistic = worst_logistic.max(fd_gradient_check(&loss, &grad, &point, 1e-6));
        }

        // The lambda vector is the gradient of the session surrogate
        // sum w |dZ| ln(1 + exp(-sigma (s_i - s_j))) with |dZ| held at the
        // base ranking, so freeze |dZ| the same way in the reference.
        let mut worst_lambda = 0.0f64;
        for _ in 0..200 {
            let n = rng.gen_range(4..=10usize);
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 - 1.5).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                scores.swap(i, j);
            }
            let gains: Vec<u8> = loop {
                let g: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.4)).collect();
                if g.contains(&1) && g.contains(&0) {
                    break g;
                }
            };
            let mut pairs = Vec::new();
            for i in 0..n {
                if gains[i] != 1 {
                    continue;
                }
                for j in 0..n {
                    if gains[j] == 0 {
                        pairs.push(TrainingPair {
                            clicked: i as u32,
                            compared: j as u32,
                            weight: rng.gen_range(0.1..3.0),
                        });
                    }
                }
            }
            let sigma = rng.gen_range(0.5..2.0);

            let order = rank_by_scores(&scores);
            let mut pos = vec![0usize; n];
            for (p, &d) in order.iter().enumerate() {
                pos[d] = p;
            }
            let disc: Vec<f64> = (0..n).map(|p| 1.0 / ((p + 2) as f64).log2()).collect();
            let n_clicked = gains.iter().filter(|&&g| g > 0).count();
            let idcg: f64 = disc.iter().take(n_clicked).sum();
            let frozen: Vec<f64> = pairs
                .iter()
                .map(|pr| {
                    let (i, j) = (pr.clicked as usize, pr.compared as usize);
                    (gains[i] as f64 - gains[j] as f64).abs()
                        * (disc[pos[i]] - disc[pos[j]]).abs()
                        / idcg
                })
                .collect();

            let pairs_f = pairs.clone();
            let surrogate = move |s: &[f64]| -> f64 {
                pairs_f
                    .iter()
                    .zip(&frozen)
                    .map(|(pr, dz)| {
                        let d = sigma * (s[pr.clicked as usize] - s[pr.compared as usize]);
                        pr.weight * dz * (1.0 + (-d).exp()).ln()
                    })
                    .sum()
            };
            let gains_g = gains.clone();
            let grad = move |s: &[f64]| -> Vec<f64> { lambda_gradients(&pairs, s, &gains_g, sigma).0 };
            worst_lambda = worst_lambda.max(fd_gradient_check(&surrogate, &grad, &scores, 1e-6));
        }

        Ok((
            worst_logistic < 1e-5 && worst_lambda < 1e-5,
            format!(
                "central differences confirm the logistic gradient (worst rel err \
                 {worst_logistic:.1e}) and the lambda gradients (worst rel err \
                 {worst_lambda:.1e}) over 200 random cases each (tol 1e-5)"
            ),
        ))
    });
}

fn ndcg_direct(scores: &[f64], rel: &[u8], k: usize) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let gain = |r: u8| 2f64.powi(r as i32) - 1.0;
    let dcg: f64 = idx
        .iter()
        .take(k)
        .enumerate()
        .map(|(p, &d)| gain(rel[d]) / ((p + 2) as f64).log2())
        .sum();
    let mut sorted = rel.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = sorted
        .iter()
        .take(k)
        .enumerate()
        .map(|(p, &r)| gain(r) / ((p + 2) as f64).log2())
        .sum();
    (idcg > 0.0).then(|| dcg / idcg)
}

fn ap_direct(scores: &[f64], rel: &[u8]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (p, &d) in idx.iter().enumerate() {
        if rel[d] > 0 {
            hits += 1;
            sum += hits as f64 / (p + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

fn arp_direct(scores: &[f64], rel: &[u8]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let sum: f64 = idx
        .iter()
        .enumerate()
        .filter(|&(_, &d)| rel[d] > 0)
        .map(|(p, _)| p as f64)
        .sum();
    sum / scores.len() as f64
}

fn option_gap(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (None, None) => 0.0,
        (Some(x), Some(y)) => (x - y).abs(),
        _ => f64::INFINITY,
    }
}

fn criterion_7(gate: &mut Gate) {
    gate.run(7, || {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        let mut worst = 0.0f64;
        let mut perm_equal = true;
        for _ in 0..1000 {
            let n = rng.gen_range(2..=10usize);
            // Distinct scores keep same-label permutations exact; crossing
            // ties would make stable index order observable.
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 - 1.7).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                scores.swap(i, j);
            }
            let rel: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=2u8)).collect();
            let k = rng.gen_range(1..=n);

            worst = worst.max(option_gap(ndcg_at_k(&scores, &rel, k)?, ndcg_direct(&scores, &rel, k)));
            worst = worst.max(option_gap(average_precision(&scores, &rel)?, ap_direct(&scores, &rel)));
            worst = worst.max((arp(&scores, &rel)? - arp_direct(&scores, &rel)).abs());

            let mut permuted = scores.clone();
            for label in 0..=2u8 {
                let group: Vec<usize> = (0..n).filter(|&i| rel[i] == label).collect();
                let mut vals: Vec<f64> = group.iter().map(|&i| scores[i]).collect();
                for i in (1..vals.len()).rev() {
                    let j = rng.gen_range(0..=i);
                    vals.swap(i, j);
                }
                for (&g, &v) in group.iter().zip(&vals) {
                    permuted[g] = v;
                }
            }
            perm_equal &= arp(&permuted, &rel)? == arp(&scores, &rel)?;
        }

        let mut worst_wmrr = 0.0f64;
        for _ in 0..200 {
            let m = rng.gen_range(1..=40usize);
            let entries: Vec<(usize, f64)> = (0..m)
                .map(|_| (rng.gen_range(1..=30usize), rng.gen_range(0.05..4.0)))
                .collect();
            let num: f64 = entries.iter().map(|&(r, w)| w / r as f64).sum();
            let den: f64 = entries.iter().map(|&(_, w)| w).sum();
            worst_wmrr = worst_wmrr.max((wmrr(&entries)? - num / den).abs());
        }

        Ok((
            worst <= 1e-12 && perm_equal && worst_wmrr <= 1e-12,
            format!(
                "ndcg/map/arp match direct definitions on 1000 random lists, worst gap \
                 {worst:.1e} (tol 1e-12); arp is bit-identical under same-label score \
                 permutations; weighted reciprocal rank matches its definition, worst gap \
                 {worst_wmrr:.1e}"
            ),
        ))
    });
}

fn criterion_8(gate: &mut Gate) {
    gate.run(8, || {
        let corpus = synthetic_corpus(&SyntheticConfig::default())?;
        let pool = &corpus.train;
        let zeros = LinearRanker::zeros(pool.feature_dim);

        let n_sessions = 100_000u64;
        let log = simulate_sessions(&zeros, pool, n_sessions, 1.0, 0.1, 29, true)?;
        let positions = log.sessions[0].presented_order.len();
        let mut observed = vec![0u64; positions];
        for s in &log.sessions {
            let o = s.hidden_observation.as_ref().expect("oracle log");
            for (m, &bit) in o.iter().enumerate() {
                observed[m] += bit as u64;
            }
        }
        let mut worst_z = 0.0f64;
        let mut degenerate_ok = true;
        for k in 1..=positions {
            let p = observation_propensity(k, 1.0)?;
            let emp = observed[k - 1] as f64 / n_sessions as f64;
            let se = (p * (1.0 - p) / n_sessions as f64).sqrt();
            if se == 0.0 {
                degenerate_ok &= emp == p;
            } else {
                worst_z = worst_z.max((emp - p).abs() / se);
            }
        }

        let noise_free = simulate_sessions(&zeros, pool, 20_000, 1.0, 0.0, 31, true)?;
        let mut identity = true;
        for s in &noise_free.sessions {
            let o = s.hidden_observation.as_ref().expect("oracle log");
            let r = s.hidden_relevance.as_ref().expect("oracle log");
            for m in 0..s.clicks.len() {
                identity &= s.clicks[m] == u8::from(o[m] == 1 && r[m] == 1);
            }
        }

        Ok((
            worst_z <= 3.0 && degenerate_ok && identity,
            format!(
                "observation rate per position within {worst_z:.2} standard errors of (1/k)^1 \
                 over {n_sessions} sessions (limit 3); noise-free clicks equal observation and \
                 relevance exactly over 20000 sessions: {identity}"
            ),
        ))
    });
}

fn criterion_9(gate: &mut Gate) {
    gate.run(9, || {
        // Thin production slice and a low relevance bar: the production
        // ranking stays near-random, which is what separates the oracle
        // strategy from plain non-clicked pairing here.
        let cfg = ExperimentConfig {
            synthetic: Some(wide_corpus()),
            production_fraction: 0.002,
            binarization_threshold: Some(2),
            mu_grid: vec![0.0],
            schemes: vec![SchemeKind::Ips],
            strategies: vec![
                PairStrategy::ClickedVsAll,
                PairStrategy::ClickedVsNonClicked,
                PairStrategy::ClickedVsIrrelevantOracle,
            ],
            sgd: SgdConfig {
                learning_rate: 0.2,
                ..SgdConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let data = load_experiment_data(&cfg)?;
        let rows = run_experiment_with_data(&cfg, &data)?;

        let of = |st: PairStrategy| per_seed(&rows, |r| r.strategy == st);
        let all = of(PairStrategy::ClickedVsAll);
        let noncl = of(PairStrategy::ClickedVsNonClicked);
        let oracle = of(PairStrategy::ClickedVsIrrelevantOracle);
        let good = oracle
            .keys()
            .filter(|s| oracle[s] > noncl[s] && noncl[s] >= all[s] - STRATEGY_TIE_MARGIN)
            .count();

        let mean_of = |st: PairStrategy| summary(&rows, "mean", |r| r.strategy == st);
        Ok((
            good >= 4,
            format!(
                "at 128000 noise-free clicks the oracle pairing beats non-clicked and \
                 non-clicked stays within {STRATEGY_TIE_MARGIN} of all-partners in {good}/5 \
                 seeds (need 4); mean ndcg@10 oracle {:.4}, non-clicked {:.4}, all {:.4}",
                mean_of(PairStrategy::ClickedVsIrrelevantOracle),
                mean_of(PairStrategy::ClickedVsNonClicked),
                mean_of(PairStrategy::ClickedVsAll),
            ),
        ))
    });
}

/// Sweep outputs shared by criteria 11 through 13.
struct SharedSweep {
    base: ExperimentConfig,
    data: ExperimentData,
    rows: Vec<RunRow>,
}

fn criterion_10(gate: &mut Gate) -> Option<SharedSweep> {
    let outcome = (|| -> Result<(bool, String, SharedSweep)> {
        let base = logreg_base();
        let data = load_experiment_data(&base)?;
        let cfg = ExperimentConfig {
            click_grid: vec![8_000, 32_000, 128_000],
            ..base.clone()
        };
        let rows = run_experiment_with_data(&cfg, &data)?;
        let logistic_good = ordered_seeds(&rows, 128_000);

        let mart_cfg = ExperimentConfig {
            synthetic: Some(wide_corpus()),
            schemes: vec![SchemeKind::Naive, SchemeKind::Ips, SchemeKind::Prs],
            learner: Learner::Lambdamart,
            // The unbounded ratio cap lets single deep noise clicks dominate
            // leaves at this corpus size, so the sweep pins the cap at 1.
            clip_gamma: Some(1.0),
            boost: BoostConfig {
                num_trees: 150,
                learning_rate: 0.15,
                num_leaves: 15,
                min_docs_per_leaf: 10,
                // Unshrunk Newton steps: the default ridge narrows the
                // scheme gaps below per-seed noise on a corpus this small.
                l2_lambda: 0.0,
                ..BoostConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let mart_data = load_experiment_data(&mart_cfg)?;
        let mart_rows = run_experiment_with_data(&mart_cfg, &mart_data)?;
        let mart_good = ordered_seeds(&mart_rows, 128_000);

        let mean128 = |rows: &[RunRow], scheme: SchemeKind| {
            summary(rows, "mean", |r| r.scheme == scheme && r.n_clicks == 128_000)
        };
        let detail = format!(
            "per-seed ndcg@10 orders prs > ips > naive at 128000 clicks for the logistic \
             learner in {logistic_good}/5 seeds (means {:.4}/{:.4}/{:.4}) and the boosted \
             learner in {mart_good}/5 (means {:.4}/{:.4}/{:.4}), need 4 each",
            mean128(&rows, SchemeKind::Prs),
            mean128(&rows, SchemeKind::Ips),
            mean128(&rows, SchemeKind::Naive),
            mean128(&mart_rows, SchemeKind::Prs),
            mean128(&mart_rows, SchemeKind::Ips),
            mean128(&mart_rows, SchemeKind::Naive),
        );
        Ok((
            logistic_good >= 4 && mart_good >= 4,
            detail,
            SharedSweep { base, data, rows },
        ))
    })();
    match outcome {
        Ok((ok, detail, shared)) => {
            gate.record(10, ok, detail);
            Some(shared)
        }
        Err(e) => {
            gate.record(10, false, format!("errored: {e}"));
            None
        }
    }
}

fn criterion_11(gate: &mut Gate, shared: &SharedSweep) {
    gate.run(11, || {
        let cfg = ExperimentConfig {
            eta_grid: vec![0.0, 2.0],
            ..shared.base.clone()
        };
        let rows = run_experiment_with_data(&cfg, &shared.data)?;

        let schemes = [SchemeKind::Naive, SchemeKind::Ips, SchemeKind::Prs];
        let at = |scheme: SchemeKind, eta: f64, which: &str| {
            summary(&rows, which, |r| r.scheme == scheme && r.eta == eta)
        };
        let mut flat_gap = 0.0f64;
        let mut flat_ok = true;
        for a in &schemes {
            for b in &schemes {
                let gap = (at(*a, 0.0, "mean") - at(*b, 0.0, "mean")).abs();
                flat_gap = flat_gap.max(gap);
                flat_ok &= gap <= at(*a, 0.0, "std").max(at(*b, 0.0, "std"));
            }
        }
        let prs_gap = at(SchemeKind::Prs, 2.0, "mean") - at(SchemeKind::Naive, 2.0, "mean");
        let ips_gap = at(SchemeKind::Ips, 2.0, "mean") - at(SchemeKind::Naive, 2.0, "mean");

        Ok((
            flat_ok && prs_gap > ips_gap,
            format!(
                "at severity 0 all schemes agree (largest mean gap {flat_gap:.1e}, within one \
                 seed std); at severity 2 prs stands {prs_gap:+.4} from naive while ips stands \
                 {ips_gap:+.4}"
            ),
        ))
    });
}

fn criterion_12(gate: &mut Gate, shared: &SharedSweep) {
    gate.run(12, || {
        let cfg = ExperimentConfig {
            schemes: vec![SchemeKind::Ips, SchemeKind::Prs],
            propensity_source: PropensitySource::Misspecified {
                eta_grid: vec![0.5, 1.0, 2.0],
            },
            ..shared.base.clone()
        };
        let rows = run_experiment_with_data(&cfg, &shared.data)?;

        let mean_at = |scheme: SchemeKind, assumed: &str| {
            summary(&rows, "mean", |r| r.scheme == scheme && r.eta_assumed == assumed)
        };
        let degradation = |scheme: SchemeKind| {
            let peak = ["0.5", "1", "2"]
                .iter()
                .map(|a| mean_at(scheme, a))
                .fold(f64::NEG_INFINITY, f64::max);
            peak - mean_at(scheme, "2")
        };
        let prs_drop = degradation(SchemeKind::Prs);
        let ips_drop = degradation(SchemeKind::Ips);

        Ok((
            prs_drop < ips_drop,
            format!(
                "with true severity 1 and assumed severities 0.5/1/2, overstating the bias at 2 \
                 costs prs {prs_drop:.3} ndcg@10 from its peak versus {ips_drop:.3} for ips"
            ),
        ))
    });
}

struct ByFirstFeature;

impl Scorer for ByFirstFeature {
    fn score(&self, features: &[f64]) -> f64 {
        features[0]
    }
}

fn criterion_13(gate: &mut Gate, shared: &SharedSweep) {
    gate.run(13, || {
        // Part one: adjacent swaps over the top five positions recover the
        // propensity ratios to within five percent.
        let pool = synthetic_corpus(&SyntheticConfig {
            train_queries: 40,
            test_queries: 1,
            seed: 19,
            ..SyntheticConfig::default()
        })?
        .train;
        let swap = simulate_swap_experiment(&ByFirstFeature, &pool, 100_000, 1.0, 0.1, 11, 5)?;
        let ratios = estimate_ratios(&swap)?;
        let mut worst_rel = 0.0f64;
        for (idx, &r) in ratios.iter().enumerate() {
            let truth = observation_propensity(idx + 1, 1.0)?;
            worst_rel = worst_rel.max((r - truth).abs() / truth);
        }
        let swap_ok = ratios.len() == 5 && worst_rel < 0.05;

        // Part two: a ratio-weighted run trained on estimated ratios stays
        // within one seed standard deviation of the run trained on the
        // recorded propensities. The true-propensity cell comes from the
        // criterion 10 grid, which already ran prs at this click budget.
        let cfg = ExperimentConfig {
            schemes: vec![SchemeKind::Prs],
            click_grid: vec![32_000],
            propensity_source: PropensitySource::Estimated {
                sessions: 300_000,
                max_position: 0,
            },
            ..shared.base.clone()
        };
        let rows = run_experiment_with_data(&cfg, &shared.data)?;
        let est_mean = summary(&rows, "mean", |r| r.eta_assumed == "estimated");
        let true_cell = |which: &str| {
            summary(&shared.rows, which, |r| {
                r.scheme == SchemeKind::Prs && r.n_clicks == 32_000
            })
        };
        let (true_mean, true_std) = (true_cell("mean"), true_cell("std"));
        let est_ok = (est_mean - true_mean).abs() <= true_std;

        Ok((
            swap_ok && est_ok,
            format!(
                "swap-estimated ratios within {:.1}% of truth at the top five positions (limit \
                 5%); prs on estimated ratios reaches ndcg@10 {est_mean:.4} versus {true_mean:.4} \
                 on recorded propensities, gap within one seed std ({true_std:.4})",
                worst_rel * 100.0
            ),
        ))
    });
}

#[test]
fn acceptance() {
    let mut gate = Gate::default();

    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    match criterion_10(&mut gate) {
        Some(shared) => {
            criterion_11(&mut gate, &shared);
            criterion_12(&mut gate, &shared);
            criterion_13(&mut gate, &shared);
        }
        None => {
            for id in 11..=13 {
                gate.record(id, false, "skipped: the shared sweep failed to build".into());
            }
        }
    }

    let failed: Vec<usize> = gate
        .results
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(id, _)| *id)
        .collect();
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}
