//! Synthetic bandit environments and logged histories.
//!
//! # Random streams
//!
//! Every history is drawn from its own ChaCha8 stream: the generator is
//! seeded with `ChaCha8Rng::seed_from_u64(seed)` and then switched to stream
//! `index` with `set_stream(index)`. Replicate `i` always reads stream `i`,
//! so replicates can be produced in any order or in parallel and still come
//! out identical. Randomly drawn reward means use the reserved stream
//! [`MEANS_STREAM`], so they are shared by all replicates of a config.
//!
//! Per step the draws are, in order: one uniform for the context (contextual
//! configs only), one uniform for the action (inverse CDF of the logging
//! row), one uniform `u` for a Bernoulli reward (`r = 1` iff `u < mean`).
//! Deterministic rewards consume no draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    epsilon_floor_policy, inverse_cdf, ContextSpace, Policy, RewardFamily, RewardModel,
};
use crate::error::{Error, Result};
use crate::history::{History, LoggedStep};

/// Stream reserved for drawing `"random"` reward means.
pub const MEANS_STREAM: u64 = u64::MAX;

/// Generator for replicate `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomTag {
    #[serde(rename = "random")]
    Random,
}

/// Reward means: `"random"` (uniform on `[0, 1]`), a length-K row, or a C×K
/// matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeansSpec {
    Random(RandomTag),
    Row(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

/// A length-K row (shared by every context) or a C×K matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Row(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoggingScheme {
    FixedUniform,
    FixedPolicy {
        policy: PolicySpec,
    },
    /// Step `n` (0-based) is logged with `policies[n % len]`.
    #[serde(rename = "round-robin-of-policies", alias = "round-robin")]
    RoundRobin {
        policies: Vec<PolicySpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "K")]
    pub num_actions: usize,
    #[serde(rename = "C", default)]
    pub num_contexts: Option<usize>,
    pub t: usize,
    pub epsilon: f64,
    pub reward_means: MeansSpec,
    #[serde(default)]
    pub reward_family: RewardFamily,
    /// Context distribution; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_probs: Option<Vec<f64>>,
    pub logging_scheme: LoggingScheme,
    pub seed: u64,
}

impl SimConfig {
    /// Multi-armed config with uniform logging and random Bernoulli means.
    pub fn uniform(num_actions: usize, t: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            num_actions,
            num_contexts: None,
            t,
            epsilon,
            reward_means: MeansSpec::Random(RandomTag::Random),
            reward_family: RewardFamily::Bernoulli,
            context_probs: None,
            logging_scheme: LoggingScheme::FixedUniform,
            seed,
        }
    }

    /// Validates the config and fixes the ground truth.
    pub fn build(&self) -> Result<Environment> {
        let k = self.num_actions;
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "K",
                value: 0.0,
                reason: "action space needs at least one action",
            });
        }
        if self.t == 0 {
            return Err(Error::InvalidParameter {
                name: "t",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "must be positive",
            });
        }
        let max = 1.0 / k as f64;
        if self.epsilon > max {
            return Err(Error::InfeasibleFloor {
                epsilon: self.epsilon,
                actions: k,
                max,
            });
        }
        let rows = self.num_contexts.unwrap_or(1);
        if rows == 0 {
            return Err(Error::InvalidParameter {
                name: "C",
                value: 0.0,
                reason: "context space needs at least one context",
            });
        }

        let means = match &self.reward_means {
            MeansSpec::Random(_) => {
                let mut rng = substream(self.seed, MEANS_STREAM);
                (0..rows)
                    .map(|_| (0..k).map(|_| rng.gen::<f64>()).collect())
                    .collect()
            }
            MeansSpec::Row(row) if rows == 1 => vec![row.clone()],
            MeansSpec::Row(_) => {
                return Err(Error::Unsupported(
                    "contextual configs need a C×K reward_means matrix".into(),
                ))
            }
            MeansSpec::Matrix(m) => m.clone(),
        };
        if means.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: means.len(),
            });
        }
        let model = match self.num_contexts {
            None => RewardModel::multi_armed(means.into_iter().next().unwrap(), self.reward_family)?,
            Some(_) => RewardModel::contextual(means, self.reward_family)?,
        };
        if model.num_actions() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: model.num_actions(),
            });
        }

        let contexts = match self.num_contexts {
            None => None,
            Some(c) => Some(match &self.context_probs {
                Some(p) if p.len() != c => {
                    return Err(Error::DimensionMismatch {
                        expected: c,
                        found: p.len(),
                    })
                }
                Some(p) => ContextSpace::new(p.clone())?,
                None => ContextSpace::uniform(c)?,
            }),
        };

        let specs: Vec<Option<&PolicySpec>> = match &self.logging_scheme {
            LoggingScheme::FixedUniform => vec![None],
            LoggingScheme::FixedPolicy { policy } => vec![Some(policy)],
            LoggingScheme::RoundRobin { policies } if policies.is_empty() => {
                return Err(Error::Unsupported(
                    "round-robin logging needs at least one policy".into(),
                ))
            }
            LoggingScheme::RoundRobin { policies } => policies.iter().map(Some).collect(),
        };
        let schedule = specs
            .into_iter()
            .map(|spec| logging_rows(spec, k, rows, self.epsilon))
            .collect::<Result<Vec<_>>>()?;

        Ok(Environment {
            model,
            contexts,
            schedule,
            epsilon: self.epsilon,
            t: self.t,
            seed: self.seed,
        })
    }
}

fn logging_rows(spec: Option<&PolicySpec>, k: usize, rows: usize, eps: f64) -> Result<Vec<Policy>> {
    let raw: Vec<Vec<f64>> = match spec {
        None => return Ok(vec![Policy::uniform(k)?; rows]),
        Some(PolicySpec::Row(r)) => vec![r.clone(); rows],
        Some(PolicySpec::Matrix(m)) if m.len() == 1 => vec![m[0].clone(); rows],
        Some(PolicySpec::Matrix(m)) => m.clone(),
    };
    if raw.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: raw.len(),
        });
    }
    raw.into_iter()
        .map(|r| {
            if r.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: r.len(),
                });
            }
            epsilon_floor_policy(&Policy::new(r)?, eps)
        })
        .collect()
}

/// A validated config with its ground truth fixed.
#[derive(Debug, Clone)]
pub struct Environment {
    model: RewardModel,
    contexts: Option<ContextSpace>,
    /// `schedule[j][x]`: logging row for context `x` under the j-th policy.
    schedule: Vec<Vec<Policy>>,
    epsilon: f64,
    t: usize,
    seed: u64,
}

impl Environment {
    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn contexts(&self) -> Option<&ContextSpace> {
        self.contexts.as_ref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Logging row used at 0-based step `n` for `context`.
    pub fn logging_row(&self, n: usize, context: Option<usize>) -> &Policy {
        &self.schedule[n % self.schedule.len()][context.unwrap_or(0)]
    }

    /// Replicate `index`, drawn from substream `index`.
    pub fn history(&self, index: u64) -> History {
        let mut rng = substream(self.seed, index);
        let mut steps = Vec::with_capacity(self.t);
        for n in 0..self.t {
            let context = self
                .contexts
                .as_ref()
                .map(|c| inverse_cdf(c.probs(), rng.gen::<f64>()));
            let row = self.logging_row(n, context);
            let action = row.sample_with(rng.gen::<f64>());
            let mean = self.model.mean(action, context);
            let reward = match self.model.family() {
                RewardFamily::Bernoulli => {
                    if rng.gen::<f64>() < mean {
                        1.0
                    } else {
                        0.0
                    }
                }
                RewardFamily::Deterministic => mean,
            };
            steps.push(LoggedStep {
                action,
                reward,
                logging_prob: row.prob(action),
                context,
            });
        }
        History::new(
            steps,
            self.epsilon,
            self.model.num_actions(),
            self.model.num_contexts(),
        )
        .expect("simulated steps satisfy the history invariants")
    }

    /// `m` replicates in index order. Each one is independent of the others,
    /// so the iterator can be split or reordered freely.
    pub fn replicate(&self, m: usize) -> impl Iterator<Item = History> + '_ {
        (0..m as u64).map(move |i| self.history(i))
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            note: GROUND_TRUTH_NOTE.to_string(),
            model: self.model.clone(),
            context_probs: self.contexts.as_ref().map(|c| c.probs().to_vec()),
        }
    }
}

pub const GROUND_TRUTH_NOTE: &str = "oracle: not available to learners";

/// Sidecar written next to a simulated history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub note: String,
    pub model: RewardModel,
    pub context_probs: Option<Vec<f64>>,
}

/// Builds the environment and draws replicate 0.
pub fn generate_history(config: &SimConfig) -> Result<(History, RewardModel)> {
    let env = config.build()?;
    Ok((env.history(0), env.model.clone()))
}

/// `m` histories from substreams `0..m`.
pub fn replicate(config: &SimConfig, m: usize) -> Result<Vec<History>> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    let env = config.build()?;
    Ok(env.replicate(m).collect())
}
