//! Importance-sampling (IS) reward estimates and the martingale difference
//! terms behind their concentration.

use serde::{Deserialize, Serialize};

use crate::bandit::{ContextualPolicy, Policy, RewardFamily, RewardModel};
use crate::error::{Error, Result};
use crate::history::{History, LoggedStep};

fn require_multi_armed(h: &History) -> Result<()> {
    if h.is_contextual() {
        return Err(Error::HistoryKind {
            expected: "multi-armed",
        });
    }
    if h.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(())
}

fn require_contextual(h: &History) -> Result<usize> {
    let c = h.num_contexts().ok_or(Error::HistoryKind {
        expected: "contextual",
    })?;
    if h.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(c)
}

fn check_action(h: &History, action: usize) -> Result<()> {
    if action >= h.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: h.num_actions(),
            found: action + 1,
        });
    }
    Ok(())
}

/// `(1/t) sum_n 1{a_n = a} r_n / pi_n(a_n)`.
pub fn is_estimate_action(action: usize, h: &History) -> Result<f64> {
    require_multi_armed(h)?;
    check_action(h, action)?;
    Ok(weighted_sum(action, h) / h.len() as f64)
}

fn weighted_sum(action: usize, h: &History) -> f64 {
    h.steps()
        .iter()
        .filter(|s| s.action == action)
        .map(|s| s.reward / s.logging_prob)
        .sum()
}

/// IS estimates for every action of a multi-armed history.
pub fn is_estimates(h: &History) -> Result<Vec<f64>> {
    require_multi_armed(h)?;
    let mut sums = vec![0.0; h.num_actions()];
    for s in h.steps() {
        sums[s.action] += s.reward / s.logging_prob;
    }
    let t = h.len() as f64;
    Ok(sums.into_iter().map(|s| s / t).collect())
}

/// `E_{A~pi}[rhat(A, h)]` for a multi-armed history.
pub fn is_estimate_policy(policy: &Policy, h: &History) -> Result<f64> {
    require_multi_armed(h)?;
    if policy.num_actions() != h.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: h.num_actions(),
            found: policy.num_actions(),
        });
    }
    Ok(policy_value(policy, &is_estimates(h)?))
}

/// `sum_a pi(a) scores(a)`. Shared by estimation and certification so both
/// produce bit-identical values.
pub fn policy_value(policy: &Policy, scores: &[f64]) -> f64 {
    policy
        .probs()
        .iter()
        .zip(scores)
        .map(|(p, s)| p * s)
        .sum()
}

/// `(1/n(x,h)) sum_n 1{(a_n, x_n) = (a, x)} r_n / pi_n(a_n, x_n)`.
///
/// Fails with [`Error::UnseenContext`] when `x` never appears in `h`.
pub fn contextual_is_estimate(action: usize, context: usize, h: &History) -> Result<f64> {
    let c = require_contextual(h)?;
    check_action(h, action)?;
    if context >= c {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: context + 1,
        });
    }
    let mut count = 0usize;
    let mut sum = 0.0;
    for s in h.steps().iter().filter(|s| s.context == Some(context)) {
        count += 1;
        if s.action == action {
            sum += s.reward / s.logging_prob;
        }
    }
    if count == 0 {
        return Err(Error::UnseenContext(context));
    }
    Ok(sum / count as f64)
}

/// Policy-level estimate for contextual logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualPolicyEstimate {
    /// `sum_x (n(x,h)/t) sum_a pi(a,x) chat(a,x,h)` over contexts seen in `h`.
    pub value: f64,
    /// Contexts with `n(x,h) = 0`; they contribute nothing to `value`.
    pub unseen_contexts: Vec<usize>,
}

/// Count-weighted policy estimate over the contexts present in `h`.
///
/// The weighting by empirical context frequency is a choice of this crate;
/// unseen contexts are reported rather than imputed.
pub fn contextual_policy_estimate(
    policy: &ContextualPolicy,
    h: &History,
) -> Result<ContextualPolicyEstimate> {
    let c = require_contextual(h)?;
    if policy.num_contexts() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: policy.num_contexts(),
        });
    }
    if policy.num_actions() != h.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: h.num_actions(),
            found: policy.num_actions(),
        });
    }
    let t = h.len() as f64;
    let mut value = 0.0;
    let mut unseen_contexts = Vec::new();
    for x in 0..c {
        let n = h.context_count(x);
        if n == 0 {
            unseen_contexts.push(x);
            continue;
        }
        let mut inner = 0.0;
        for a in 0..h.num_actions() {
            inner += policy.row(x).prob(a) * contextual_is_estimate(a, x, h)?;
        }
        value += n as f64 / t * inner;
    }
    Ok(ContextualPolicyEstimate {
        value,
        unseen_contexts,
    })
}

/// `Z_n(a) = 1{a_n = a} r_n / pi_n(a_n) - rbar(a)` for one multi-armed step.
pub fn martingale_difference(action: usize, step: &LoggedStep, model: &RewardModel) -> Result<f64> {
    if step.context.is_some() || model.is_contextual() {
        return Err(Error::HistoryKind {
            expected: "multi-armed",
        });
    }
    if action >= model.num_actions() || step.action >= model.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: model.num_actions(),
            found: action.max(step.action) + 1,
        });
    }
    let hit = if step.action == action {
        step.reward / step.logging_prob
    } else {
        0.0
    };
    Ok(hit - model.mean(action, None))
}

/// Every `(step, probability)` outcome of one round: action drawn from
/// `logging`, reward drawn from `model`. Zero-probability outcomes are
/// dropped.
pub fn step_outcomes(logging: &Policy, model: &RewardModel) -> Result<Vec<(LoggedStep, f64)>> {
    if model.is_contextual() {
        return Err(Error::HistoryKind {
            expected: "multi-armed",
        });
    }
    if logging.num_actions() != model.num_actions() {
        return Err(Error::DimensionMismatch {
            expected: model.num_actions(),
            found: logging.num_actions(),
        });
    }
    let mut out = Vec::with_capacity(2 * logging.num_actions());
    for (b, &pb) in logging.probs().iter().enumerate() {
        if pb == 0.0 {
            continue;
        }
        let mean = model.mean(b, None);
        match model.family() {
            RewardFamily::Bernoulli => {
                if mean > 0.0 {
                    out.push((LoggedStep::new(b, 1.0, pb), pb * mean));
                }
                if mean < 1.0 {
                    out.push((LoggedStep::new(b, 0.0, pb), pb * (1.0 - mean)));
                }
            }
            RewardFamily::Deterministic => out.push((LoggedStep::new(b, mean, pb), pb)),
        }
    }
    Ok(out)
}

/// `E[Z_n(a)^2]` under logging row `logging`, by exact enumeration of
/// outcomes.
pub fn conditional_variance_step(action: usize, logging: &Policy, model: &RewardModel) -> Result<f64> {
    let mut total = 0.0;
    for (step, prob) in step_outcomes(logging, model)? {
        let z = martingale_difference(action, &step, model)?;
        total += prob * z * z;
    }
    Ok(total)
}

/// Per-action (or per action-context) IS estimates of one history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub t: usize,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub num_actions: usize,
    #[serde(rename = "C")]
    pub num_contexts: Option<usize>,
    /// Multi-armed: `per_action[a]`. Contextual: empty.
    pub per_action: Vec<f64>,
    /// Contextual: `per_context[x][a]`, `None` for unseen contexts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_context: Option<Vec<Option<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_counts: Option<Vec<usize>>,
    /// Filled when a target policy was supplied.
    pub policy_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen_contexts: Option<Vec<usize>>,
}

impl EstimateReport {
    pub fn multi_armed(h: &History, policy: Option<&Policy>) -> Result<Self> {
        let per_action = is_estimates(h)?;
        let policy_value = match policy {
            Some(p) => Some(is_estimate_policy(p, h)?),
            None => None,
        };
        Ok(Self {
            t: h.len(),
            epsilon: h.epsilon(),
            num_actions: h.num_actions(),
            num_contexts: None,
            per_action,
            per_context: None,
            context_counts: None,
            policy_value,
            unseen_contexts: None,
        })
    }

    pub fn contextual(h: &History, policy: Option<&ContextualPolicy>) -> Result<Self> {
        let c = require_contextual(h)?;
        let counts: Vec<usize> = (0..c).map(|x| h.context_count(x)).collect();
        let mut per_context = Vec::with_capacity(c);
        for (x, &n) in counts.iter().enumerate() {
            if n == 0 {
                per_context.push(None);
                continue;
            }
            let row = (0..h.num_actions())
                .map(|a| contextual_is_estimate(a, x, h))
                .collect::<Result<Vec<_>>>()?;
            per_context.push(Some(row));
        }
        let (policy_value, unseen) = match policy {
            Some(p) => {
                let est = contextual_policy_estimate(p, h)?;
                (Some(est.value), est.unseen_contexts)
            }
            None => (
                None,
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| **n == 0)
                    .map(|(x, _)| x)
                    .collect(),
            ),
        };
        Ok(Self {
            t: h.len(),
            epsilon: h.epsilon(),
            num_actions: h.num_actions(),
            num_contexts: Some(c),
            per_action: Vec::new(),
            per_context: Some(per_context),
            context_counts: Some(counts),
            policy_value,
            unseen_contexts: Some(unseen),
        })
    }
}
