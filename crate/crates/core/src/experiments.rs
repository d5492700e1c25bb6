//! Monte Carlo coverage runs and side-by-side bound comparisons.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{true_expected_reward, Policy};
use crate::bounds::{
    bernstein_oracle, default_grid, hoeffding_grid_union, hoeffding_oracle,
    oracle_lambda_bernstein, oracle_lambda_hoeffding, BoundKind, BoundSpec,
};
use crate::error::{Error, Result};
use crate::optimizer::{certify, optimize_policy};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PolicyMode {
    /// Certify the same policy on every replicate.
    Fixed { policy: Policy },
    /// Re-optimize the policy on every replicate.
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub sim: SimConfig,
    pub m: usize,
    pub bound: BoundSpec,
    pub policy_mode: PolicyMode,
    /// Uniform when absent.
    #[serde(default)]
    pub prior: Option<Policy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub replicate: u64,
    pub kl: f64,
    pub estimate: f64,
    pub true_value: f64,
    pub bound_value: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub m: usize,
    pub violations: usize,
    pub beta: f64,
    pub violation_rate: f64,
    pub bound_kind: BoundKind,
    pub policy_mode: String,
    /// `beta m + 3 sqrt(m beta (1 - beta))`.
    pub allowance: f64,
    pub trials: Vec<TrialRecord>,
}

impl CoverageReport {
    pub fn within_allowance(&self) -> bool {
        self.violations as f64 <= self.allowance
    }

    /// One line per trial: `replicate,kl,estimate,true_value,bound_value,violated`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,kl,estimate,true_value,bound_value,violated\n");
        for r in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.replicate, r.kl, r.estimate, r.true_value, r.bound_value, r.violated
            );
        }
        out
    }
}

/// Binomial three-sigma ceiling on the violation count: `beta m + 3 sqrt(m beta (1-beta))`.
pub fn binomial_allowance(m: usize, beta: f64) -> f64 {
    let m = m as f64;
    beta * m + 3.0 * (m * beta * (1.0 - beta)).sqrt()
}

/// Draws `m` histories, certifies a policy on each and counts how often the
/// true value falls outside the certified radius. Replicates run in parallel;
/// the result does not depend on the thread count.
pub fn run_coverage(config: &CoverageConfig) -> Result<CoverageReport> {
    if config.m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if config.sim.num_contexts.is_some() {
        return Err(Error::Unsupported(
            "coverage runs need a multi-armed config".into(),
        ));
    }
    config.bound.validate()?;
    let env = config.sim.build()?;
    let k = env.model().num_actions();
    let prior = match &config.prior {
        Some(p) => p.clone(),
        None => Policy::uniform(k)?,
    };
    let trials = (0..config.m as u64)
        .into_par_iter()
        .map(|i| {
            let h = env.history(i);
            let cert = match &config.policy_mode {
                PolicyMode::Fixed { policy } => certify(policy, &h, &prior, &config.bound)?,
                PolicyMode::Optimized => optimize_policy(&h, &prior, &config.bound)?.certificate,
            };
            let true_value = true_expected_reward(&cert.policy, env.model())?;
            Ok(TrialRecord {
                replicate: i,
                kl: cert.kl_to_prior,
                estimate: cert.is_estimate,
                true_value,
                bound_value: cert.bound_value,
                violated: (true_value - cert.is_estimate).abs() > cert.bound_value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = trials.iter().filter(|t| t.violated).count();
    Ok(CoverageReport {
        m: config.m,
        violations,
        beta: config.bound.beta,
        violation_rate: violations as f64 / config.m as f64,
        bound_kind: config.bound.kind,
        policy_mode: match config.policy_mode {
            PolicyMode::Fixed { .. } => "fixed".into(),
            PolicyMode::Optimized => "optimized".into(),
        },
        allowance: binomial_allowance(config.m, config.bound.beta),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub kind: BoundKind,
    /// `None` when the bound does not apply at these inputs.
    pub value: Option<f64>,
    pub lambda: Option<f64>,
    pub feasible: bool,
    /// False for oracle rows: their `lambda` depends on the data.
    pub valid_a_priori: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub kl: f64,
    pub t: usize,
    pub eps: f64,
    pub beta: f64,
    pub grid: Vec<f64>,
    pub rows: Vec<CompareRow>,
    /// optimized Hoeffding / Hoeffding oracle.
    pub hoeffding_ratio: f64,
}

/// Fixed `lambda` values for the parametric rows of a comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompareLambdas {
    pub hoeffding: Option<f64>,
    pub bernstein: Option<f64>,
}

const ORACLE_NOTE: &str = "not a valid a-priori bound (lambda depends on data)";
/// Parametric Bernstein fallback when the KL = 0 oracle lambda is not below 1.
const BERNSTEIN_FALLBACK_LAMBDA: f64 = 0.999;

/// Evaluates every bound kind at one `(kl, t, eps, beta)`.
///
/// Parametric rows default to the data-independent choice `lambda =
/// oracle lambda at KL = 0` (Bernstein: capped at 0.999). The grid row uses
/// `grid`, or [`default_grid`] when `None`.
pub fn compare_bounds(
    kl: f64,
    t: usize,
    eps: f64,
    beta: f64,
    grid: Option<Vec<f64>>,
    lambdas: CompareLambdas,
) -> Result<CompareTable> {
    let grid = match grid {
        Some(g) => g,
        None => default_grid(t, eps, beta)?,
    };
    let row = |kind: BoundKind, value: Option<f64>, lambda: Option<f64>, feasible: bool, note: &str| CompareRow {
        kind,
        value,
        lambda,
        feasible,
        valid_a_priori: !kind.is_oracle(),
        note: note.to_string(),
    };
    let mut rows = Vec::with_capacity(BoundKind::ALL.len());

    let lh = match lambdas.hoeffding {
        Some(l) => l,
        None => oracle_lambda_hoeffding(0.0, t, eps, beta)?,
    };
    let v = BoundSpec::new(BoundKind::HoeffdingParametric, beta)
        .with_lambda(lh)
        .evaluate(kl, t, eps)?;
    rows.push(row(v.kind, Some(v.value), Some(lh), true, ""));

    let lb = match lambdas.bernstein {
        Some(l) => l,
        None => oracle_lambda_bernstein(0.0, t, eps, beta)?.min(BERNSTEIN_FALLBACK_LAMBDA),
    };
    match BoundSpec::new(BoundKind::BernsteinParametric, beta)
        .with_lambda(lb)
        .evaluate(kl, t, eps)
    {
        Ok(v) => rows.push(row(v.kind, Some(v.value), Some(lb), true, "")),
        Err(e) if e.is_precondition() => rows.push(row(
            BoundKind::BernsteinParametric,
            None,
            Some(lb),
            false,
            &e.to_string(),
        )),
        Err(e) => return Err(e),
    }

    let g = hoeffding_grid_union(kl, t, eps, beta, &grid)?;
    rows.push(row(
        BoundKind::HoeffdingGrid,
        Some(g.value),
        Some(g.lambda),
        true,
        &format!("{} grid points", grid.len()),
    ));

    let v = BoundSpec::new(BoundKind::HoeffdingOptimized, beta).evaluate(kl, t, eps)?;
    rows.push(row(v.kind, Some(v.value), None, true, ""));
    let optimized_hoeffding = v.value;

    match BoundSpec::new(BoundKind::BernsteinOptimized, beta).evaluate(kl, t, eps) {
        Ok(v) => rows.push(row(v.kind, Some(v.value), None, true, "")),
        Err(e @ Error::InadmissibleKl { .. }) => rows.push(row(
            BoundKind::BernsteinOptimized,
            None,
            None,
            false,
            &e.to_string(),
        )),
        Err(e) => return Err(e),
    }

    let ho = hoeffding_oracle(kl, t, eps, beta)?;
    rows.push(row(
        BoundKind::HoeffdingOracle,
        Some(ho),
        Some(oracle_lambda_hoeffding(kl, t, eps, beta)?),
        true,
        ORACLE_NOTE,
    ));

    let bo = bernstein_oracle(kl, t, eps, beta)?;
    let note = if bo.feasible {
        ORACLE_NOTE.to_string()
    } else {
        format!("{ORACLE_NOTE}; lambda >= 1 violates the Bernstein condition")
    };
    rows.push(row(
        BoundKind::BernsteinOracle,
        Some(bo.value),
        Some(bo.lambda),
        bo.feasible,
        &note,
    ));

    Ok(CompareTable {
        kl,
        t,
        eps,
        beta,
        grid,
        rows,
        hoeffding_ratio: optimized_hoeffding / ho,
    })
}

impl CompareTable {
    pub fn row(&self, kind: BoundKind) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// Columns: `kind,value,lambda,feasible,valid_a_priori`; missing values
    /// are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,value,lambda,feasible,valid_a_priori\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.kind,
                cell(r.value),
                cell(r.lambda),
                r.feasible,
                r.valid_a_priori
            );
        }
        out
    }
}

/// Grid-union radius as the grid grows: `(size, value)` for geometric grids
/// of each size over the same span.
pub fn grid_tradeoff(
    kl: f64,
    t: usize,
    eps: f64,
    beta: f64,
    sizes: &[usize],
    decades: f64,
) -> Result<Vec<(usize, f64)>> {
    let center = oracle_lambda_hoeffding(0.0, t, eps, beta)?;
    sizes
        .iter()
        .map(|&n| {
            let grid = crate::bounds::geometric_grid(center, n, decades)?;
            Ok((n, hoeffding_grid_union(kl, t, eps, beta, &grid)?.value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::RewardFamily;
    use crate::simulator::MeansSpec;

    #[test]
    fn allowance_for_two_thousand_trials() {
        assert_eq!(binomial_allowance(2000, 0.05).floor(), 129.0);
    }

    #[test]
    fn compare_reference_point() {
        let table = compare_bounds(0.0, 1000, 0.1, 0.05, None, CompareLambdas::default()).unwrap();
        let ho = table.row(BoundKind::HoeffdingOptimized).unwrap().value.unwrap();
        assert!((ho - 0.665_443_027_753_328_6).abs() < 1e-12);
        let oracle = table.row(BoundKind::HoeffdingOracle).unwrap();
        assert!((oracle.value.unwrap() - 0.429_469_408_346_737_56).abs() < 1e-12);
        assert!(!oracle.valid_a_priori);
        assert!((table.hoeffding_ratio - 1.549_453_848_913_203).abs() < 1e-12);
        let bern = table.row(BoundKind::BernsteinOptimized).unwrap();
        assert!(!bern.feasible && bern.value.is_none());
        assert!(!table.row(BoundKind::BernsteinOracle).unwrap().feasible);
        assert_eq!(table.rows.len(), BoundKind::ALL.len());
        let csv = table.to_csv();
        assert!(csv.starts_with("kind,value,lambda,feasible,valid_a_priori\n"));
        assert_eq!(csv.lines().count(), 8);
    }

    #[test]
    fn hoeffding_rows_dominate_oracle() {
        for (kl, t, eps) in [(0.0, 10, 0.5), (2.0, 500, 0.05), (30.0, 100_000, 0.01)] {
            let table = compare_bounds(kl, t, eps, 0.05, None, CompareLambdas::default()).unwrap();
            let oracle = table.row(BoundKind::HoeffdingOracle).unwrap().value.unwrap();
            for kind in [
                BoundKind::HoeffdingParametric,
                BoundKind::HoeffdingGrid,
                BoundKind::HoeffdingOptimized,
            ] {
                assert!(table.row(kind).unwrap().value.unwrap() >= oracle * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn deterministic_rewards_never_violate() {
        let sim = SimConfig {
            reward_means: MeansSpec::Row(vec![0.2, 0.5, 0.9]),
            reward_family: RewardFamily::Deterministic,
            ..SimConfig::uniform(3, 20_000, 1.0 / 3.0, 4)
        };
        let report = run_coverage(&CoverageConfig {
            sim,
            m: 20,
            bound: BoundSpec::new(BoundKind::HoeffdingOptimized, 0.05),
            policy_mode: PolicyMode::Fixed {
                policy: Policy::uniform(3).unwrap(),
            },
            prior: None,
        })
        .unwrap();
        assert_eq!(report.violations, 0);
        for t in &report.trials {
            assert!((t.estimate - t.true_value).abs() < 0.02);
        }
        assert_eq!(report.violation_rate, 0.0);
    }

    #[test]
    fn huge_confidence_radius_never_violates() {
        let report = run_coverage(&CoverageConfig {
            sim: SimConfig::uniform(4, 30, 0.25, 1),
            m: 200,
            bound: BoundSpec::new(BoundKind::HoeffdingOptimized, 1e-12),
            policy_mode: PolicyMode::Optimized,
            prior: None,
        })
        .unwrap();
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn csv_has_one_line_per_trial() {
        let report = run_coverage(&CoverageConfig {
            sim: SimConfig::uniform(2, 10, 0.5, 1),
            m: 5,
            bound: BoundSpec::new(BoundKind::HoeffdingOptimized, 0.05),
            policy_mode: PolicyMode::Optimized,
            prior: None,
        })
        .unwrap();
        assert_eq!(report.to_csv().lines().count(), 6);
    }
}
