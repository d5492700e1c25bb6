//! Logged bandit data and its JSON Lines encoding.
//!
//! The first line is a header `{"epsilon": f64, "K": int, "C": int|null}`;
//! every following line is one step
//! `{"n": int, "action": int, "context": int|null, "reward": f64, "logging_prob": f64}`
//! with `n` counting from 1.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedStep {
    pub action: usize,
    pub reward: f64,
    /// Probability the logging policy gave to `action` (given `context`).
    pub logging_prob: f64,
    pub context: Option<usize>,
}

impl LoggedStep {
    pub fn new(action: usize, reward: f64, logging_prob: f64) -> Self {
        Self {
            action,
            reward,
            logging_prob,
            context: None,
        }
    }

    pub fn with_context(action: usize, context: usize, reward: f64, logging_prob: f64) -> Self {
        Self {
            action,
            reward,
            logging_prob,
            context: Some(context),
        }
    }
}

/// An ordered log `h^t` together with the declared floor `epsilon` on every
/// logging probability.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    steps: Vec<LoggedStep>,
    epsilon: f64,
    num_actions: usize,
    num_contexts: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    epsilon: f64,
    #[serde(rename = "K")]
    num_actions: usize,
    #[serde(rename = "C")]
    num_contexts: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepLine {
    n: usize,
    action: usize,
    context: Option<usize>,
    reward: f64,
    logging_prob: f64,
}

impl History {
    /// Validates every step against the declared floor and dimensions.
    /// `num_contexts` is `None` for multi-armed logs.
    pub fn new(
        steps: Vec<LoggedStep>,
        epsilon: f64,
        num_actions: usize,
        num_contexts: Option<usize>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: epsilon,
                reason: "must lie in (0, 1]",
            });
        }
        if num_actions == 0 {
            return Err(Error::InvalidParameter {
                name: "K",
                value: 0.0,
                reason: "action space needs at least one action",
            });
        }
        if num_contexts == Some(0) {
            return Err(Error::InvalidParameter {
                name: "C",
                value: 0.0,
                reason: "context space needs at least one context",
            });
        }
        for (index, step) in steps.iter().enumerate() {
            let fail = |reason: String| Err(Error::InvalidStep { index, reason });
            if step.action >= num_actions {
                return fail(format!("action {} outside 0..{num_actions}", step.action));
            }
            if !(0.0..=1.0).contains(&step.reward) {
                return fail(format!("reward {} outside [0, 1]", step.reward));
            }
            if !(step.logging_prob > 0.0 && step.logging_prob <= 1.0) {
                return fail(format!("logging_prob {} outside (0, 1]", step.logging_prob));
            }
            if step.logging_prob < epsilon {
                return fail(format!(
                    "logging_prob {} below declared floor {epsilon}",
                    step.logging_prob
                ));
            }
            match (num_contexts, step.context) {
                (None, None) => {}
                (Some(c), Some(x)) if x < c => {}
                (Some(c), Some(x)) => return fail(format!("context {x} outside 0..{c}")),
                (None, Some(_)) => return fail("context given in a multi-armed log".into()),
                (Some(_), None) => return fail("missing context in a contextual log".into()),
            }
        }
        Ok(Self {
            steps,
            epsilon,
            num_actions,
            num_contexts,
        })
    }

    pub fn steps(&self) -> &[LoggedStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_contexts(&self) -> Option<usize> {
        self.num_contexts
    }

    pub fn is_contextual(&self) -> bool {
        self.num_contexts.is_some()
    }

    /// `n(x, h)`: how often context `x` was observed.
    pub fn context_count(&self, context: usize) -> usize {
        self.steps
            .iter()
            .filter(|s| s.context == Some(context))
            .count()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            epsilon: self.epsilon,
            num_actions: self.num_actions,
            num_contexts: self.num_contexts,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (i, s) in self.steps.iter().enumerate() {
            let line = StepLine {
                n: i + 1,
                action: s.action,
                context: s.context,
                reward: s.reward,
                logging_prob: s.logging_prob,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parses a JSONL log. Blank lines are skipped; line numbers in errors are
    /// 1-based.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<Header> = None;
        let mut steps = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| Error::Parse {
                line: lineno,
                message: e.to_string(),
            };
            match header {
                None => header = Some(serde_json::from_str(&line).map_err(parse_err)?),
                Some(_) => {
                    let s: StepLine = serde_json::from_str(&line).map_err(parse_err)?;
                    if s.n != steps.len() + 1 {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("field `n` is {}, expected {}", s.n, steps.len() + 1),
                        });
                    }
                    steps.push(LoggedStep {
                        action: s.action,
                        reward: s.reward,
                        logging_prob: s.logging_prob,
                        context: s.context,
                    });
                }
            }
        }
        let header = header.ok_or(Error::Parse {
            line: 1,
            message: "missing header line".into(),
        })?;
        History::new(steps, header.epsilon, header.num_actions, header.num_contexts).map_err(
            |e| match e {
                // header occupies line 1, so step i sits on line i + 2
                Error::InvalidStep { index, reason } => Error::Parse {
                    line: index + 2,
                    message: reason,
                },
                other => other,
            },
        )
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }
}
