//! Offline policy selection with a certified lower bound.
//!
//! For a fixed KL budget, the policy maximizing the linear objective
//! `sum_a pi(a) score(a)` is the Gibbs policy
//! `pi_eta(a) ∝ mu(a) exp(eta score(a))` for some `eta >= 0`. The search over
//! policies therefore reduces to a one-dimensional search over `eta` of
//!
//! ```text
//! F(eta) = rhat(pi_eta, h) - B(KL(pi_eta || mu))
//! ```
//!
//! where `B` is the chosen PAC-Bayes radius. Because the radii hold for all
//! policies simultaneously, the data-dependent maximizer keeps its guarantee.

use serde::{Deserialize, Serialize};

use crate::bandit::{kl_divergence, Policy};
use crate::bounds::{bernstein_admissible_kl, BoundKind, BoundSpec};
use crate::error::{Error, Result};
use crate::estimators::{is_estimates, policy_value};
use crate::history::History;

/// Coarse scan: `{0} ∪ logspace(-3, 3, 61)`.
const SCAN_LOG_MIN: f64 = -3.0;
const SCAN_LOG_MAX: f64 = 3.0;
const SCAN_POINTS: usize = 61;
const ETA_TOLERANCE: f64 = 1e-10;
const MAX_GOLDEN_ITERS: usize = 200;
const MAX_DOUBLINGS: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// `pi(a) ∝ prior(a) exp(eta score(a))`, normalized after shifting by the
/// largest score on the prior's support.
pub fn gibbs_policy(prior: &Policy, scores: &[f64], eta: f64) -> Result<Policy> {
    if scores.len() != prior.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: prior.num_actions(),
            found: scores.len(),
        });
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            reason: "must be nonnegative and finite",
        });
    }
    let support = || prior.probs().iter().zip(scores).filter(|(p, _)| **p > 0.0);
    if let Some((_, s)) = support().find(|(_, s)| !s.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "score",
            value: *s,
            reason: "must be finite on the prior's support",
        });
    }
    let top = support().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let bottom = support().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    if eta == 0.0 || top == bottom {
        return Ok(prior.clone());
    }
    let weights: Vec<f64> = prior
        .probs()
        .iter()
        .zip(scores)
        .map(|(p, s)| if *p > 0.0 { p * (eta * (s - top)).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    Policy::new(weights.into_iter().map(|w| w / total).collect())
}

/// A policy with its estimate, complexity and certified lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub policy: Policy,
    pub prior: Policy,
    pub is_estimate: f64,
    pub kl_to_prior: f64,
    pub bound: BoundSpec,
    pub bound_kind: BoundKind,
    pub bound_value: f64,
    /// `is_estimate - bound_value`.
    pub lower_bound: f64,
    pub beta: f64,
    pub t: usize,
    pub epsilon: f64,
    /// Per-action IS estimates the policy value was computed from.
    pub action_estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPolicy {
    pub certificate: Certificate,
    /// Gibbs temperature of the selected policy.
    pub eta: f64,
}

fn check_inputs(h: &History, prior: &Policy, bound: &BoundSpec) -> Result<()> {
    if h.is_contextual() {
        return Err(Error::HistoryKind {
            expected: "multi-armed",
        });
    }
    if h.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if prior.num_actions() != h.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: h.num_actions(),
            found: prior.num_actions(),
        });
    }
    if bound.kind.is_oracle() {
        return Err(Error::Unsupported(format!(
            "{} tunes lambda on the data and cannot certify a policy",
            bound.kind
        )));
    }
    bound.validate()
}

fn certificate_from_scores(
    policy: &Policy,
    prior: &Policy,
    scores: &[f64],
    h: &History,
    bound: &BoundSpec,
) -> Result<Certificate> {
    if policy.num_actions() != prior.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: prior.num_actions(),
            found: policy.num_actions(),
        });
    }
    let is_estimate = policy_value(policy, scores);
    let kl_to_prior = kl_divergence(policy, prior)?;
    let radius = bound.evaluate(kl_to_prior, h.len(), h.epsilon())?;
    Ok(Certificate {
        policy: policy.clone(),
        prior: prior.clone(),
        is_estimate,
        kl_to_prior,
        bound: bound.clone(),
        bound_kind: bound.kind,
        bound_value: radius.value,
        lower_bound: is_estimate - radius.value,
        beta: bound.beta,
        t: h.len(),
        epsilon: h.epsilon(),
        action_estimates: scores.to_vec(),
    })
}

/// Evaluates the bound for a given policy without any search.
pub fn certify(policy: &Policy, h: &History, prior: &Policy, bound: &BoundSpec) -> Result<Certificate> {
    check_inputs(h, prior, bound)?;
    let scores = is_estimates(h)?;
    certificate_from_scores(policy, prior, &scores, h, bound)
}

struct Objective<'a> {
    prior: &'a Policy,
    scores: &'a [f64],
    bound: &'a BoundSpec,
    t: usize,
    eps: f64,
}

impl Objective<'_> {
    /// `F(eta)`; `-inf` where the bound does not apply.
    fn at(&self, eta: f64) -> f64 {
        let Ok(policy) = gibbs_policy(self.prior, self.scores, eta) else {
            return f64::NEG_INFINITY;
        };
        let Ok(kl) = kl_divergence(&policy, self.prior) else {
            return f64::NEG_INFINITY;
        };
        match self.bound.evaluate(kl, self.t, self.eps) {
            Ok(r) => policy_value(&policy, self.scores) - r.value,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Maximizes `f` on `[lo, hi]` by golden-section search.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if hi - lo <= tol * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// The temperatures visited by the coarse scan.
pub fn scan_grid() -> Vec<f64> {
    let step = (SCAN_LOG_MAX - SCAN_LOG_MIN) / (SCAN_POINTS - 1) as f64;
    std::iter::once(0.0)
        .chain((0..SCAN_POINTS).map(|i| 10f64.powf(SCAN_LOG_MIN + step * i as f64)))
        .collect()
}

/// Searches the Gibbs family around `prior` for the policy with the largest
/// certified lower bound.
///
/// A coarse scan over [`scan_grid`] picks a bracket (extended by doubling
/// when the best point is the largest one), golden-section search refines it,
/// and the best of `eta = 0`, the scan and the refinement is certified.
pub fn optimize_policy(h: &History, prior: &Policy, bound: &BoundSpec) -> Result<OptimizedPolicy> {
    check_inputs(h, prior, bound)?;
    if prior.min_prob() <= 0.0 {
        return Err(Error::InvalidDistribution(
            "prior must be strictly positive".into(),
        ));
    }
    if bound.kind == BoundKind::BernsteinOptimized {
        let threshold = bernstein_admissible_kl(h.len(), h.epsilon(), bound.beta)?;
        if threshold < 0.0 {
            return Err(Error::BoundInapplicable {
                t: h.len(),
                eps: h.epsilon(),
                beta: bound.beta,
                threshold,
            });
        }
    }
    let scores = is_estimates(h)?;
    let objective = Objective {
        prior,
        scores: &scores,
        bound,
        t: h.len(),
        eps: h.epsilon(),
    };

    let grid = scan_grid();
    let values: Vec<f64> = grid.iter().map(|&eta| objective.at(eta)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });

    let (lo, hi) = if best == 0 {
        (0.0, grid[1])
    } else if best + 1 < grid.len() {
        (grid[best - 1], grid[best + 1])
    } else {
        let (mut lo, mut mid) = (grid[best - 1], grid[best]);
        let mut f_mid = values[best];
        let mut hi = 2.0 * mid;
        for _ in 0..MAX_DOUBLINGS {
            let f_hi = objective.at(hi);
            if f_hi <= f_mid {
                break;
            }
            lo = mid;
            mid = hi;
            f_mid = f_hi;
            hi *= 2.0;
        }
        (lo, hi)
    };
    let (refined, f_refined) =
        golden_section_max(|eta| objective.at(eta), lo, hi, ETA_TOLERANCE, MAX_GOLDEN_ITERS);

    let mut eta = 0.0;
    let mut f_best = values[0];
    for (cand, f) in [(grid[best], values[best]), (refined, f_refined)] {
        if f > f_best {
            eta = cand;
            f_best = f;
        }
    }
    let policy = gibbs_policy(prior, &scores, eta)?;
    Ok(OptimizedPolicy {
        certificate: certificate_from_scores(&policy, prior, &scores, h, bound)?,
        eta,
    })
}
