//! Finite action and context spaces, policies, ground-truth reward models and
//! relative entropy.
//!
//! Actions are indices `0..K` and contexts are indices `0..C`. A [`Policy`] is
//! one probability row over the actions; a [`ContextualPolicy`] holds one row
//! per context.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance applied to every probability-sum check.
pub const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    size: usize,
}

impl ActionSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter {
                name: "K",
                value: 0.0,
                reason: "action space needs at least one action",
            });
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Finite context space with its sampling distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSpace {
    probs: Vec<f64>,
}

impl ContextSpace {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter {
                name: "C",
                value: 0.0,
                reason: "context space needs at least one context",
            });
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample_with(&self, u: f64) -> usize {
        inverse_cdf(&self.probs, u)
    }
}

fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "entry {p} is negative or not finite"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Index drawn by inverse CDF from a uniform variate `u` in `[0, 1)`.
/// Zero-probability entries are never returned.
pub(crate) fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last partial sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// A probability distribution over `K` actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Policy {
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        ActionSpace::new(k)?;
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn point_mass(k: usize, action: usize) -> Result<Self> {
        ActionSpace::new(k)?;
        if action >= k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: action + 1,
            });
        }
        let mut probs = vec![0.0; k];
        probs[action] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_actions(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Inverse-CDF draw from a uniform variate `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        inverse_cdf(&self.probs, u)
    }
}

impl TryFrom<Vec<f64>> for Policy {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Policy::new(probs)
    }
}

impl From<Policy> for Vec<f64> {
    fn from(p: Policy) -> Self {
        p.probs
    }
}

/// One action distribution per context (a row-stochastic C×K matrix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Policy>", into = "Vec<Policy>")]
pub struct ContextualPolicy {
    rows: Vec<Policy>,
}

impl ContextualPolicy {
    pub fn new(rows: Vec<Policy>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidDistribution("contextual policy has no rows".into()))?;
        let k = first.num_actions();
        if let Some(row) = rows.iter().find(|r| r.num_actions() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: row.num_actions(),
            });
        }
        Ok(Self { rows })
    }

    pub fn uniform(c: usize, k: usize) -> Result<Self> {
        ContextSpace::uniform(c)?;
        Self::new(vec![Policy::uniform(k)?; c])
    }

    pub fn rows(&self) -> &[Policy] {
        &self.rows
    }

    pub fn row(&self, context: usize) -> &Policy {
        &self.rows[context]
    }

    pub fn num_contexts(&self) -> usize {
        self.rows.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rows[0].num_actions()
    }
}

impl TryFrom<Vec<Policy>> for ContextualPolicy {
    type Error = Error;

    fn try_from(rows: Vec<Policy>) -> Result<Self> {
        ContextualPolicy::new(rows)
    }
}

impl From<ContextualPolicy> for Vec<Policy> {
    fn from(p: ContextualPolicy) -> Self {
        p.rows
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardFamily {
    /// `R ~ Bernoulli(mean)`.
    #[default]
    Bernoulli,
    /// `R = mean` with probability one.
    Deterministic,
}

/// Ground-truth mean rewards. Only the simulator and the verification
/// harness ever see one of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    /// One row per context; a single row for multi-armed problems.
    means: Vec<Vec<f64>>,
    contextual: bool,
    family: RewardFamily,
}

impl RewardModel {
    pub fn multi_armed(means: Vec<f64>, family: RewardFamily) -> Result<Self> {
        Self::build(vec![means], false, family)
    }

    pub fn contextual(means: Vec<Vec<f64>>, family: RewardFamily) -> Result<Self> {
        Self::build(means, true, family)
    }

    fn build(means: Vec<Vec<f64>>, contextual: bool, family: RewardFamily) -> Result<Self> {
        let k = means.first().map(Vec::len).unwrap_or(0);
        ActionSpace::new(k)?;
        for row in &means {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: row.len(),
                });
            }
            if let Some(m) = row.iter().find(|m| !(0.0..=1.0).contains(*m)) {
                return Err(Error::InvalidParameter {
                    name: "mean reward",
                    value: *m,
                    reason: "must lie in [0, 1]",
                });
            }
        }
        Ok(Self {
            means,
            contextual,
            family,
        })
    }

    pub fn is_contextual(&self) -> bool {
        self.contextual
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    pub fn num_actions(&self) -> usize {
        self.means[0].len()
    }

    pub fn num_contexts(&self) -> Option<usize> {
        self.contextual.then_some(self.means.len())
    }

    /// Mean reward of `action` in `context` (ignored for multi-armed models).
    pub fn mean(&self, action: usize, context: Option<usize>) -> f64 {
        let row = if self.contextual {
            context.unwrap_or(0)
        } else {
            0
        };
        self.means[row][action]
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }
}

/// Relative entropy `KL(p || q)` in nats. Infinite when `p` is not absolutely
/// continuous with respect to `q`.
pub fn kl_divergence(p: &Policy, q: &Policy) -> Result<f64> {
    if p.num_actions() != q.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: q.num_actions(),
            found: p.num_actions(),
        });
    }
    let mut kl = 0.0;
    for (&pa, &qa) in p.probs().iter().zip(q.probs()) {
        if pa == 0.0 {
            continue;
        }
        if qa == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += pa * (pa / qa).ln();
    }
    Ok(kl.max(0.0))
}

/// Expected reward `E_{A~pi}[rbar(A)]` of a multi-armed policy.
pub fn true_expected_reward(policy: &Policy, model: &RewardModel) -> Result<f64> {
    if model.is_contextual() {
        return Err(Error::HistoryKind {
            expected: "multi-armed reward model for a",
        });
    }
    check_actions(model.num_actions(), policy.num_actions())?;
    Ok(policy
        .probs()
        .iter()
        .zip(&model.means()[0])
        .map(|(p, m)| p * m)
        .sum())
}

/// Expected reward `E_{X~p_X, A~pi(.|X)}[rbar(A, X)]` of a contextual policy.
pub fn true_expected_reward_contextual(
    policy: &ContextualPolicy,
    model: &RewardModel,
    contexts: &ContextSpace,
) -> Result<f64> {
    let c = model.num_contexts().ok_or(Error::HistoryKind {
        expected: "contextual reward model for a",
    })?;
    check_actions(model.num_actions(), policy.num_actions())?;
    if policy.num_contexts() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: policy.num_contexts(),
        });
    }
    if contexts.size() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: contexts.size(),
        });
    }
    let mut total = 0.0;
    for (x, px) in contexts.probs().iter().enumerate() {
        let inner: f64 = policy
            .row(x)
            .probs()
            .iter()
            .zip(&model.means()[x])
            .map(|(p, m)| p * m)
            .sum();
        total += px * inner;
    }
    Ok(total)
}

fn check_actions(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Mixes `policy` with the uniform distribution so that every action keeps
/// probability at least `epsilon`: `(1 - K eps) pi(a) + eps`.
pub fn epsilon_floor_policy(policy: &Policy, epsilon: f64) -> Result<Policy> {
    let k = policy.num_actions();
    let max = 1.0 / k as f64;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must be positive",
        });
    }
    if epsilon > max {
        return Err(Error::InfeasibleFloor {
            epsilon,
            actions: k,
            max,
        });
    }
    let scale = (1.0 - k as f64 * epsilon).max(0.0);
    let probs = policy.probs().iter().map(|p| scale * p + epsilon).collect();
    Policy::new(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kl_identity_and_point_mass() {
        let u = Policy::uniform(4).unwrap();
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);
        let p = Policy::point_mass(4, 0).unwrap();
        assert!((kl_divergence(&p, &u).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_absolute_continuity_violation() {
        let p = Policy::new(vec![0.5, 0.5, 0.0]).unwrap();
        let q = Policy::new(vec![0.0, 0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let p = Policy::uniform(2).unwrap();
        let q = Policy::uniform(3).unwrap();
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn expected_reward_examples() {
        let model = RewardModel::multi_armed(vec![0.3, 0.8], RewardFamily::Bernoulli).unwrap();
        let pm = Policy::point_mass(2, 1).unwrap();
        assert_eq!(true_expected_reward(&pm, &model).unwrap(), 0.8);
        let u = Policy::uniform(2).unwrap();
        assert!((true_expected_reward(&u, &model).unwrap() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn expected_reward_contextual_table() {
        let model = RewardModel::contextual(
            vec![vec![0.2, 0.9], vec![0.7, 0.1]],
            RewardFamily::Bernoulli,
        )
        .unwrap();
        let policy = ContextualPolicy::new(vec![
            Policy::point_mass(2, 1).unwrap(),
            Policy::point_mass(2, 0).unwrap(),
        ])
        .unwrap();
        let ctx = ContextSpace::new(vec![0.5, 0.5]).unwrap();
        // 0.5 * 0.9 + 0.5 * 0.7
        let v = true_expected_reward_contextual(&policy, &model, &ctx).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn epsilon_floor_examples() {
        let p = Policy::point_mass(2, 0).unwrap();
        let f = epsilon_floor_policy(&p, 0.1).unwrap();
        assert!((f.prob(0) - 0.9).abs() < 1e-15);
        assert!((f.prob(1) - 0.1).abs() < 1e-15);

        let u = Policy::uniform(5).unwrap();
        let f = epsilon_floor_policy(&u, 0.07).unwrap();
        for a in 0..5 {
            assert!((f.prob(a) - 0.2).abs() < 1e-15);
        }

        let p = Policy::point_mass(4, 0).unwrap();
        assert!(matches!(
            epsilon_floor_policy(&p, 0.3),
            Err(Error::InfeasibleFloor { .. })
        ));
    }

    #[test]
    fn policy_rejects_bad_rows() {
        assert!(Policy::new(vec![0.5, 0.6]).is_err());
        assert!(Policy::new(vec![-0.1, 1.1]).is_err());
        assert!(Policy::new(vec![]).is_err());
        assert!(serde_json::from_str::<Policy>("[0.2, 0.2]").is_err());
        let p: Policy = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(p.probs(), &[0.25, 0.75]);
    }

    fn distribution(k: usize) -> impl Strategy<Value = Policy> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
            let total: f64 = w.iter().sum();
            Policy::new(w.iter().map(|x| x / total).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_zero_iff_equal(p in distribution(5), q in distribution(5)) {
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            if p != q {
                let max_diff = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if max_diff > 1e-6 {
                    prop_assert!(kl > 0.0);
                }
            }
        }

        #[test]
        fn floor_respects_minimum(p in distribution(6), frac in 0.001f64..1.0) {
            let eps = frac / 6.0;
            let f = epsilon_floor_policy(&p, eps).unwrap();
            prop_assert!(f.min_prob() >= eps);
            prop_assert!((f.probs().iter().sum::<f64>() - 1.0).abs() <= PROB_TOLERANCE);
        }

        #[test]
        fn reward_is_linear_in_policy(
            p in distribution(4),
            q in distribution(4),
            alpha in 0.0f64..1.0,
            means in prop::collection::vec(0.0f64..=1.0, 4),
        ) {
            let model = RewardModel::multi_armed(means, RewardFamily::Bernoulli).unwrap();
            let mix: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let s: f64 = mix.iter().sum();
            prop_assume!((s - 1.0).abs() <= PROB_TOLERANCE);
            let mix = Policy::new(mix).unwrap();
            let lhs = true_expected_reward(&mix, &model).unwrap();
            let rhs = alpha * true_expected_reward(&p, &model).unwrap()
                + (1.0 - alpha) * true_expected_reward(&q, &model).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}
