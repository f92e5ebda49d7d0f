//! Brute-force verification engines for the weighting schemes.
//!
//! Sessions small enough to enumerate every observation vector (n <= 16)
//! admit exact expected losses, which anchor everything else in the crate:
//! closed-form expectations, the unbiasedness of inverse-propensity
//! weighting, per-click deviation bounds, and finite-difference gradient
//! checks all reduce to comparisons against these sums.
//!
//! Enumeration here is noise-free: a click happens iff a document is both
//! observed and relevant. Noisy regimes are exercised by Monte Carlo tests
//! elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PrsError, Result};
use crate::learn::linear::{logistic_gradient, pairwise_logistic_loss};
use crate::weighting::{PairStrategy, WeightScheme};

/// 2^n observation vectors are enumerated, so n is capped.
pub const MAX_ENUM_DOCS: usize = 16;

/// A fully specified small session: true relevance, per-document observation
/// propensities, and a fixed pairwise loss matrix delta[i][j] >= 0.
#[derive(Debug, Clone)]
pub struct OracleSession {
    pub relevance: Vec<u8>,
    pub propensities: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
}

impl OracleSession {
    pub fn new(relevance: Vec<u8>, propensities: Vec<f64>, delta: Vec<Vec<f64>>) -> Result<Self> {
        let n = relevance.len();
        if n == 0 || n > MAX_ENUM_DOCS {
            return Err(PrsError::InvalidArgument(format!(
                "session must have between 1 and {MAX_ENUM_DOCS} documents, got {n}"
            )));
        }
        if propensities.len() != n || delta.len() != n {
            return Err(PrsError::InvalidArgument(
                "relevance, propensities and delta must have matching sizes".into(),
            ));
        }
        if relevance.iter().any(|&r| r > 1) {
            return Err(PrsError::InvalidArgument(
                "relevance entries must be 0 or 1".into(),
            ));
        }
        if propensities.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(PrsError::InvalidArgument(
                "propensities must lie in (0, 1]".into(),
            ));
        }
        for (i, row) in delta.iter().enumerate() {
            if row.len() != n {
                return Err(PrsError::InvalidArgument("delta must be square".into()));
            }
            if row[i] != 0.0 {
                return Err(PrsError::InvalidArgument(
                    "delta must be zero on the diagonal".into(),
                ));
            }
            if row.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
                return Err(PrsError::InvalidArgument(
                    "delta entries must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(OracleSession {
            relevance,
            propensities,
            delta,
        })
    }

    /// Build the loss matrix from candidate scores with the pairwise
    /// logistic loss at unit weight.
    pub fn from_scores(relevance: Vec<u8>, propensities: Vec<f64>, scores: &[f64]) -> Result<Self> {
        if scores.len() != relevance.len() {
            return Err(PrsError::InvalidArgument(
                "scores must match the session length".into(),
            ));
        }
        let n = scores.len();
        let delta: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            pairwise_logistic_loss(scores[i], scores[j], 1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(relevance, propensities, delta)
    }

    pub fn n(&self) -> usize {
        self.relevance.len()
    }

    fn relevant(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| self.relevance[i] == 1)
    }

    fn irrelevant(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| self.relevance[i] == 0)
    }
}

/// Exact expected training loss: sum over all 2^n observation vectors of
/// P(o) times the weighted pair loss of the clicks induced by o.
pub fn exact_expected_loss(
    session: &OracleSession,
    scheme: &WeightScheme,
    strategy: PairStrategy,
) -> Result<f64> {
    let n = session.n();
    let p = &session.propensities;
    let r = &session.relevance;
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if (mask >> i) & 1 == 1 { pi } else { 1.0 - pi };
        }
        if prob == 0.0 {
            continue;
        }
        let clicked: Vec<bool> = (0..n)
            .map(|i| (mask >> i) & 1 == 1 && r[i] == 1)
            .collect();
        let mut loss = 0.0;
        for i in 0..n {
            if !clicked[i] {
                continue;
            }
            for j in 0..n {
                if j == i {
                    continue;
                }
                let partner = match strategy {
                    PairStrategy::ClickedVsAll => true,
                    PairStrategy::ClickedVsNonClicked => !clicked[j],
                    PairStrategy::ClickedVsIrrelevantOracle => !clicked[j] && r[j] == 0,
                };
                if partner {
                    loss += scheme.pair_weight(p[i], p[j])? * session.delta[i][j];
                }
            }
        }
        total += prob * loss;
    }
    Ok(total)
}

/// Expected unclipped inverse-propensity loss under the clicked-vs-non-clicked
/// strategy: every relevant-vs-irrelevant pair at full loss plus a
/// contamination term for relevant partners, which are non-clicked exactly
/// when unobserved.
pub fn closed_form_ips_expectation(session: &OracleSession) -> f64 {
    let mut total = 0.0;
    for i in session.relevant() {
        for j in session.irrelevant() {
            total += session.delta[i][j];
        }
    }
    total + ips_relevant_relevant_contamination(session)
}

/// The relevant-vs-relevant part of the inverse-propensity expectation:
/// sum over relevant i and relevant j != i of (1 - p_j) delta(i, j).
pub fn ips_relevant_relevant_contamination(session: &OracleSession) -> f64 {
    let mut total = 0.0;
    for i in session.relevant() {
        for j in session.relevant() {
            if j != i {
                total += (1.0 - session.propensities[j]) * session.delta[i][j];
            }
        }
    }
    total
}

/// Expected unclipped ratio-weighted loss restricted to relevant-vs-irrelevant
/// pairs: sum over relevant i and irrelevant j of p_j delta(i, j). This is
/// the idealized target the ratio scheme optimizes; the exact expectation
/// under clicked-vs-non-clicked pairing adds [`prs_relevant_relevant_residue`]
/// on top for relevant partners that happened to be unobserved.
pub fn closed_form_prs_expectation(session: &OracleSession) -> f64 {
    let mut total = 0.0;
    for i in session.relevant() {
        for j in session.irrelevant() {
            total += session.propensities[j] * session.delta[i][j];
        }
    }
    total
}

/// Residual relevant-vs-relevant term of the exact ratio-weighted
/// expectation: sum over relevant i and relevant j != i of
/// p_j (1 - p_j) delta(i, j). A relevant partner enters a pair only when
/// unobserved (probability 1 - p_j) and the ratio weight contributes p_j.
pub fn prs_relevant_relevant_residue(session: &OracleSession) -> f64 {
    let mut total = 0.0;
    for i in session.relevant() {
        for j in session.relevant() {
            if j != i {
                let pj = session.propensities[j];
                total += pj * (1.0 - pj) * session.delta[i][j];
            }
        }
    }
    total
}

/// Per-document inverse-propensity estimation is unbiased: returns the
/// enumerated expectation of sum over clicked i of delta_i / p_i, together
/// with the true risk sum over relevant i of delta_i. The two are equal.
pub fn pointwise_ips_unbiasedness(
    session: &OracleSession,
    delta_per_doc: &[f64],
) -> Result<(f64, f64)> {
    let n = session.n();
    if delta_per_doc.len() != n {
        return Err(PrsError::InvalidArgument(
            "delta_per_doc must match the session length".into(),
        ));
    }
    if delta_per_doc.iter().any(|d| !d.is_finite()) {
        return Err(PrsError::InvalidArgument(
            "delta_per_doc entries must be finite".into(),
        ));
    }
    let p = &session.propensities;
    let r = &session.relevance;
    let mut estimate = 0.0;
    for mask in 0u32..(1u32 << n) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if (mask >> i) & 1 == 1 { pi } else { 1.0 - pi };
        }
        if prob == 0.0 {
            continue;
        }
        let mut sum = 0.0;
        for i in 0..n {
            if (mask >> i) & 1 == 1 && r[i] == 1 {
                sum += delta_per_doc[i] / p[i];
            }
        }
        estimate += prob * sum;
    }
    let true_risk = session.relevant().map(|i| delta_per_doc[i]).sum();
    Ok((estimate, true_risk))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingBounds {
    pub prs_bound: f64,
    pub ips_bound: f64,
    /// Per-click deviation range of the ratio-weighted estimator; zero for
    /// irrelevant documents.
    pub rho: Vec<f64>,
    /// Worst-case per-click range of the inverse-propensity estimator.
    pub tau: Vec<f64>,
}

/// Hoeffding-style tail bounds on the two estimators at confidence 1 - xi.
///
/// For relevant i:
///
/// ```text
/// rho_i = (1/p_i) sum_{j irrelevant} p_j delta(i, j)
/// tau_i = (1/p_i) ( sum_{j irrelevant} delta(i, j)
///                 + sum_{j relevant, j != i, p_j < 1} delta(i, j) )
/// ```
///
/// tau instantiates the non-clicked partner set at its largest realizable
/// value: all irrelevant documents plus every relevant one that can be
/// unobserved. A relevant document with p_j = 1 is always clicked, so it can
/// never be a partner and stays out of the worst case; this is what makes
/// rho_i = tau_i when every propensity is 1. Each bound is
/// (1/N) sqrt( (ln(2/xi) / 2) sum_i range_i^2 ) with N the relevant count.
pub fn hoeffding_bounds(session: &OracleSession, xi: f64) -> Result<HoeffdingBounds> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(PrsError::InvalidArgument(format!(
            "confidence parameter must lie in (0, 1), got {xi}"
        )));
    }
    let n_relevant = session.relevant().count();
    if n_relevant == 0 {
        return Err(PrsError::Degenerate(
            "deviation bounds need at least one relevant document".into(),
        ));
    }
    let n = session.n();
    let p = &session.propensities;
    let mut rho = vec![0.0f64; n];
    let mut tau = vec![0.0f64; n];
    for i in session.relevant() {
        let mut rho_sum = 0.0;
        let mut tau_sum = 0.0;
        for j in session.irrelevant() {
            rho_sum += p[j] * session.delta[i][j];
            tau_sum += session.delta[i][j];
        }
        for j in session.relevant() {
            if j != i && p[j] < 1.0 {
                tau_sum += session.delta[i][j];
            }
        }
        rho[i] = rho_sum / p[i];
        tau[i] = tau_sum / p[i];
    }
    let scale = (2.0 / xi).ln() / 2.0;
    let bound = |ranges: &[f64]| -> f64 {
        let ss: f64 = ranges.iter().map(|v| v * v).sum();
        (scale * ss).sqrt() / n_relevant as f64
    };
    Ok(HoeffdingBounds {
        prs_bound: bound(&rho),
        ips_bound: bound(&tau),
        rho,
        tau,
    })
}

/// Central-difference check of an analytic gradient. Returns the worst
/// relative error across coordinates, with the denominator floored at 1 so
/// near-zero gradients compare absolutely.
pub fn fd_gradient_check<F, G>(f: &F, grad: &G, point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert!(h > 0.0, "step size must be positive");
    let analytic = grad(point);
    assert_eq!(analytic.len(), point.len());
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for k in 0..point.len() {
        let orig = x[k];
        x[k] = orig + h;
        let fp = f(&x);
        x[k] = orig - h;
        let fm = f(&x);
        x[k] = orig;
        let fd = (fp - fm) / (2.0 * h);
        let denom = fd.abs().max(analytic[k].abs()).max(1.0);
        worst = worst.max((fd - analytic[k]).abs() / denom);
    }
    worst
}

/// Random session generator for property sweeps: 2..=max_n documents,
/// Bernoulli(1/2) relevance, propensities mostly in [0.05, 1) with an
/// occasional exact 1, and a loss matrix from uniform scores.
pub fn random_session(rng: &mut ChaCha8Rng, max_n: usize) -> OracleSession {
    let max_n = max_n.clamp(2, MAX_ENUM_DOCS);
    let n = rng.gen_range(2..=max_n);
    let relevance: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.5)).collect();
    let propensities: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < 0.15 {
                1.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    OracleSession::from_scores(relevance, propensities, &scores)
        .expect("generated session is valid")
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub trials: usize,
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Closed forms under test; swapped out in tests to prove the harness can
/// actually catch a wrong formula.
struct ClosedForms {
    ips: fn(&OracleSession) -> f64,
    prs: fn(&OracleSession) -> f64,
    prs_residue: fn(&OracleSession) -> f64,
}

const STANDARD_FORMS: ClosedForms = ClosedForms {
    ips: closed_form_ips_expectation,
    prs: closed_form_prs_expectation,
    prs_residue: prs_relevant_relevant_residue,
};

/// Run the full verification sweep over `trials` random sessions.
pub fn oracle_suite(seed: u64, trials: usize) -> Result<OracleReport> {
    run_checks(seed, trials, &STANDARD_FORMS)
}

fn run_checks(seed: u64, trials: usize, forms: &ClosedForms) -> Result<OracleReport> {
    if trials == 0 {
        return Err(PrsError::InvalidArgument("trials must be >= 1".into()));
    }
    let ips = WeightScheme::ips(f64::INFINITY)?;
    let prs = WeightScheme::prs(f64::INFINITY, f64::INFINITY)?;
    let strategy = PairStrategy::ClickedVsNonClicked;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sessions: Vec<OracleSession> = (0..trials).map(|_| random_session(&mut rng, 8)).collect();

    let mut checks = Vec::new();
    let mut push = |name: &str, worst: f64, tol: f64| {
        checks.push(OracleCheck {
            name: name.to_string(),
            passed: worst <= tol,
            detail: format!("worst deviation {worst:.3e} over {trials} sessions (tolerance {tol:.0e})"),
        });
    };

    let mut worst_ips = 0.0f64;
    let mut worst_prs = 0.0f64;
    let mut worst_point = 0.0f64;
    let mut worst_residue = 0.0f64;
    let mut worst_order = 0.0f64;
    for s in &sessions {
        let enum_ips = exact_expected_loss(s, &ips, strategy)?;
        worst_ips = worst_ips.max((enum_ips - (forms.ips)(s)).abs());

        let enum_prs = exact_expected_loss(s, &prs, strategy)?;
        worst_prs = worst_prs.max((enum_prs - ((forms.prs)(s) + (forms.prs_residue)(s))).abs());

        let deltas: Vec<f64> = (0..s.n()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let (estimate, truth) = pointwise_ips_unbiasedness(s, &deltas)?;
        worst_point = worst_point.max((estimate - truth).abs());

        // Perturbing a relevant-relevant loss entry moves the enumerated
        // ratio-weighted expectation by exactly the residue's prediction and
        // leaves the relevant-vs-irrelevant closed form untouched.
        let rel: Vec<usize> = s.relevant().collect();
        if rel.len() >= 2 {
            let (a, b) = (rel[0], rel[1]);
            let mut bumped = s.clone();
            bumped.delta[a][b] += 1.0;
            let closed_shift = (forms.prs)(&bumped) - (forms.prs)(s);
            let predicted = (forms.prs_residue)(&bumped) - (forms.prs_residue)(s);
            let actual = exact_expected_loss(&bumped, &prs, strategy)? - enum_prs;
            worst_residue = worst_residue
                .max(closed_shift.abs())
                .max((actual - predicted).abs());
        }

        if rel.is_empty() {
            continue;
        }
        let bounds = hoeffding_bounds(s, 0.05)?;
        let elementwise = bounds
            .rho
            .iter()
            .zip(&bounds.tau)
            .map(|(r, t)| r - t)
            .fold(0.0f64, f64::max);
        worst_order = worst_order
            .max(elementwise)
            .max(bounds.prs_bound - bounds.ips_bound);
    }
    push("ips closed form matches enumeration", worst_ips, 1e-10);
    push(
        "prs closed form plus relevant-relevant residue matches enumeration",
        worst_prs,
        1e-10,
    );
    push(
        "pointwise inverse-propensity estimate equals true risk",
        worst_point,
        1e-12,
    );
    push(
        "relevant-relevant perturbations shift enumeration by the residue only",
        worst_residue,
        1e-10,
    );
    push(
        "per-click ranges and bounds: prs never exceeds ips",
        worst_order,
        1e-15,
    );

    let mut worst_grad = 0.0f64;
    for _ in 0..trials {
        let dim = rng.gen_range(1..6usize);
        let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xj: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pw = rng.gen_range(0.0..3.0);
        let (xi_c, xj_c) = (xi.clone(), xj.clone());
        let loss = move |w: &[f64]| -> f64 {
            let si: f64 = w.iter().zip(&xi_c).map(|(a, b)| a * b).sum();
            let sj: f64 = w.iter().zip(&xj_c).map(|(a, b)| a * b).sum();
            pairwise_logistic_loss(si, sj, pw)
        };
        let grad = move |w: &[f64]| -> Vec<f64> { logistic_gradient(&xi, &xj, w, pw) };
        let point: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst_grad = worst_grad.max(fd_gradient_check(&loss, &grad, &point, 1e-6));
    }
    push(
        "pairwise logistic gradient matches finite differences",
        worst_grad,
        1e-5,
    );

    Ok(OracleReport { trials, checks })
}
