//! PAC-Bayes deviation radii for the IS policy estimate.
//!
//! Every function returns a radius `B` such that, with probability at least
//! `1 - beta` over the logged data, `|r(pi) - rhat(pi, H^t)| <= B` for all
//! policies `pi` simultaneously, where `B` depends on `pi` only through
//! `KL(pi || mu)` to a data-independent prior `mu`.
//!
//! * parametric Hoeffding: `lambda/(8 t eps^2) + (KL + ln(2/beta))/lambda`, any `lambda > 0`
//! * parametric Bernstein: `2 lambda (e-2)/(t eps) + (KL + ln(2/beta))/lambda`, `lambda in (0,1)`
//! * optimized Hoeffding: `(1/eps) sqrt((KL + ln(4 pi/(3 beta)))/t)`
//! * optimized Bernstein: `2 sqrt((e-2)(KL + ln(4 pi/(3 beta)))/(t eps))`, restricted to
//!   `KL <= (2(e-2) - t eps (2 + ln(2/beta)))/(2 t eps)`
//!
//! The optimized radii come from splitting the KL axis into unit-width events
//! `E_k = {k-1 < KL <= k}`, tuning `lambda` per event and paying for the split
//! with a union bound over per-event confidence budgets `beta_k`.
//!
//! The oracle radii plug in the `lambda` that minimizes the parametric radius
//! for the realized KL. That `lambda` depends on the data, so oracle values
//! are reference points only, never valid a-priori bounds.
//!
//! # Per-event budget
//!
//! A budget `beta_k = 6 beta/(pi k^2)` sums to `pi * beta` because
//! `sum 1/k^2 = pi^2/6`. [`event_confidence_budget`] therefore uses
//! `6 beta/(pi^2 k^2)`, which sums to exactly `beta`. The optimized Hoeffding
//! constant `ln(4 pi/(3 beta))` is kept as is: with the corrected budget the
//! per-event radius ([`hoeffding_stratified_radius`]) is still below it.
//!
//! # Bernstein admissibility
//!
//! [`bernstein_admissible_kl`] uses `ln(2/beta)`. The per-event construction
//! caps the number of events with `ln(pi/(3 beta))` instead; that variant is
//! exposed as [`bernstein_admissible_kl_proof_variant`].

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const E_MINUS_2: f64 = E - 2.0;

fn check_common(kl: f64, t: usize, eps: f64, beta: f64) -> Result<()> {
    if kl.is_nan() || kl < 0.0 {
        return Err(Error::InvalidParameter {
            name: "kl",
            value: kl,
            reason: "must be nonnegative",
        });
    }
    check_sample(t, eps, beta)
}

fn check_sample(t: usize, eps: f64, beta: f64) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidParameter {
            name: "t",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            value: eps,
            reason: "must lie in (0, 1]",
        });
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
            reason: "must lie in (0, 1)",
        });
    }
    Ok(())
}

/// `KL + ln(2/beta)`.
fn complexity(kl: f64, beta: f64) -> f64 {
    kl + (2.0 / beta).ln()
}

/// `KL + ln(4 pi/(3 beta))`.
fn optimized_complexity(kl: f64, beta: f64) -> f64 {
    kl + (4.0 * PI / (3.0 * beta)).ln()
}

pub fn hoeffding_parametric(kl: f64, lambda: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "must be positive and finite",
        });
    }
    Ok(lambda / (8.0 * t as f64 * eps * eps) + complexity(kl, beta) / lambda)
}

pub fn bernstein_parametric(kl: f64, lambda: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "must lie in (0, 1)",
        });
    }
    Ok(2.0 * lambda * E_MINUS_2 / (t as f64 * eps) + complexity(kl, beta) / lambda)
}

/// Minimizer of [`hoeffding_parametric`] in `lambda`: `2 eps sqrt(2 t (KL + ln(2/beta)))`.
pub fn oracle_lambda_hoeffding(kl: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    Ok(2.0 * eps * (2.0 * t as f64 * complexity(kl, beta)).sqrt())
}

/// `(1/eps) sqrt((KL + ln(2/beta))/(2t))`.
pub fn hoeffding_oracle(kl: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    Ok((complexity(kl, beta) / (2.0 * t as f64)).sqrt() / eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinOracle {
    pub lambda: f64,
    pub value: f64,
    /// `lambda < 1`. Otherwise the parametric Bernstein radius is not
    /// defined at `lambda` and `value` is only the unconstrained minimum.
    pub feasible: bool,
}

pub fn oracle_lambda_bernstein(kl: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    Ok((t as f64 * eps * complexity(kl, beta) / (2.0 * E_MINUS_2)).sqrt())
}

/// Oracle `lambda` and radius `sqrt(8 (e-2)(KL + ln(2/beta))/(t eps))`.
pub fn bernstein_oracle(kl: f64, t: usize, eps: f64, beta: f64) -> Result<BernsteinOracle> {
    let lambda = oracle_lambda_bernstein(kl, t, eps, beta)?;
    let value = (8.0 * E_MINUS_2 * complexity(kl, beta) / (t as f64 * eps)).sqrt();
    Ok(BernsteinOracle {
        lambda,
        value,
        feasible: lambda < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridUnion {
    pub value: f64,
    /// Grid point attaining the minimum.
    pub lambda: f64,
}

/// Union bound over a fixed grid of `lambda` values with the confidence
/// split evenly: `min_i hoeffding_parametric(KL, lambda_i, t, eps, beta/|grid|)`.
pub fn hoeffding_grid_union(
    kl: f64,
    t: usize,
    eps: f64,
    beta: f64,
    grid: &[f64],
) -> Result<GridUnion> {
    check_common(kl, t, eps, beta)?;
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let share = beta / grid.len() as f64;
    let mut best = GridUnion {
        value: f64::INFINITY,
        lambda: f64::NAN,
    };
    for &lambda in grid {
        let v = hoeffding_parametric(kl, lambda, t, eps, share)?;
        if v < best.value {
            best = GridUnion { value: v, lambda };
        }
    }
    Ok(best)
}

/// Geometric grid of `size` points spanning `decades` decades, centred (in
/// log scale) on `center`.
pub fn geometric_grid(center: f64, size: usize, decades: f64) -> Result<Vec<f64>> {
    if size == 0 || !(center > 0.0) || !center.is_finite() {
        return Err(Error::EmptyGrid);
    }
    if !(decades >= 0.0) || !decades.is_finite() {
        return Err(Error::InvalidParameter {
            name: "decades",
            value: decades,
            reason: "must be nonnegative and finite",
        });
    }
    if size == 1 {
        return Ok(vec![center]);
    }
    let lo = center.log10() - decades / 2.0;
    let step = decades / (size - 1) as f64;
    Ok((0..size).map(|i| 10f64.powf(lo + step * i as f64)).collect())
}

/// Data-independent default grid: 16 points over 3 decades around the
/// Hoeffding oracle `lambda` at `KL = 0`, which depends on `(t, eps, beta)`
/// only.
pub fn default_grid(t: usize, eps: f64, beta: f64) -> Result<Vec<f64>> {
    geometric_grid(oracle_lambda_hoeffding(0.0, t, eps, beta)?, 16, 3.0)
}

/// `(1/eps) sqrt((KL + ln(4 pi/(3 beta)))/t)`, no tuning parameter.
pub fn optimized_hoeffding(kl: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    Ok((optimized_complexity(kl, beta) / t as f64).sqrt() / eps)
}

/// Largest KL covered by [`optimized_bernstein`]:
/// `(2(e-2) - t eps (2 + ln(2/beta)))/(2 t eps)`. Negative means no policy
/// is covered.
pub fn bernstein_admissible_kl(t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_sample(t, eps, beta)?;
    let te = t as f64 * eps;
    Ok((2.0 * E_MINUS_2 - te * (2.0 + (2.0 / beta).ln())) / (2.0 * te))
}

/// Same threshold with `ln(pi/(3 beta))` in place of `ln(2/beta)`; this is
/// the form that caps the number of KL events in the per-event construction.
pub fn bernstein_admissible_kl_proof_variant(t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_sample(t, eps, beta)?;
    let te = t as f64 * eps;
    Ok((2.0 * E_MINUS_2 - te * (2.0 + (PI / (3.0 * beta)).ln())) / (2.0 * te))
}

/// `2 sqrt((e-2)(KL + ln(4 pi/(3 beta)))/(t eps))` for admissible KL.
pub fn optimized_bernstein(kl: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    let threshold = bernstein_admissible_kl(t, eps, beta)?;
    if kl > threshold {
        return Err(Error::InadmissibleKl { kl, threshold });
    }
    Ok(2.0 * (E_MINUS_2 * optimized_complexity(kl, beta) / (t as f64 * eps)).sqrt())
}

/// Confidence spent on KL event `k >= 1`: `6 beta/(pi^2 k^2)`. Summed over
/// all `k` this is exactly `beta`.
pub fn event_confidence_budget(beta: f64, k: u64) -> f64 {
    6.0 * beta / (PI * PI * (k as f64) * (k as f64))
}

/// Radius obtained directly from the KL-event split with the budgets of
/// [`event_confidence_budget`], before the envelope relaxation: for
/// `k = max(1, ceil(KL))`, `(1/eps) sqrt((k + ln(2/beta_k))/(2t))`.
pub fn hoeffding_stratified_radius(kl: f64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_common(kl, t, eps, beta)?;
    let k = kl.ceil().max(1.0);
    let beta_k = event_confidence_budget(beta, k as u64);
    Ok(((k + (2.0 / beta_k).ln()) / (2.0 * t as f64)).sqrt() / eps)
}

/// Number of KL events `K = max(1, ceil(threshold))` for the admissible
/// Bernstein region, or `None` when nothing is admissible.
pub fn bernstein_event_count(t: usize, eps: f64, beta: f64) -> Result<Option<u64>> {
    let threshold = bernstein_admissible_kl(t, eps, beta)?;
    if threshold < 0.0 {
        return Ok(None);
    }
    Ok(Some(threshold.ceil().max(1.0) as u64))
}

/// Per-event Bernstein parameter
/// `lambda_k = sqrt(t eps (k + ln(2 pi k^2/(6 beta)))/(2(e-2)))`.
pub fn bernstein_event_lambda(k: u64, t: usize, eps: f64, beta: f64) -> Result<f64> {
    check_sample(t, eps, beta)?;
    let k = k as f64;
    let inner = k + (2.0 * PI * k * k / (6.0 * beta)).ln();
    Ok((t as f64 * eps * inner / (2.0 * E_MINUS_2)).sqrt())
}

/// `(2x + ln(4 pi/(3 beta))) - (x + ln(e pi (1+x)^2/(3 beta)))`; the tangent
/// line at `x = 1` minus the concave function it dominates.
pub fn envelope_gap(x: f64, beta: f64) -> f64 {
    let line = 2.0 * x + (4.0 * PI / (3.0 * beta)).ln();
    let curve = x + (E * PI * (1.0 + x) * (1.0 + x) / (3.0 * beta)).ln();
    line - curve
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    HoeffdingParametric,
    BernsteinParametric,
    HoeffdingGrid,
    HoeffdingOptimized,
    BernsteinOptimized,
    HoeffdingOracle,
    BernsteinOracle,
}

impl BoundKind {
    pub const ALL: [BoundKind; 7] = [
        BoundKind::HoeffdingParametric,
        BoundKind::BernsteinParametric,
        BoundKind::HoeffdingGrid,
        BoundKind::HoeffdingOptimized,
        BoundKind::BernsteinOptimized,
        BoundKind::HoeffdingOracle,
        BoundKind::BernsteinOracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::HoeffdingParametric => "hoeffding-parametric",
            BoundKind::BernsteinParametric => "bernstein-parametric",
            BoundKind::HoeffdingGrid => "hoeffding-grid",
            BoundKind::HoeffdingOptimized => "hoeffding-optimized",
            BoundKind::BernsteinOptimized => "bernstein-optimized",
            BoundKind::HoeffdingOracle => "hoeffding-oracle",
            BoundKind::BernsteinOracle => "bernstein-oracle",
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            BoundKind::HoeffdingParametric | BoundKind::BernsteinParametric
        )
    }

    /// Oracle kinds tune `lambda` on the realized KL and do not certify
    /// anything.
    pub fn is_oracle(self) -> bool {
        matches!(self, BoundKind::HoeffdingOracle | BoundKind::BernsteinOracle)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = BoundKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown bound kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Which radius to compute and with which fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub kind: BoundKind,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

impl BoundSpec {
    pub fn new(kind: BoundKind, beta: f64) -> Self {
        Self {
            kind,
            beta,
            lambda: None,
            grid: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: self.beta,
                reason: "must lie in (0, 1)",
            });
        }
        match (self.kind.is_parametric(), self.lambda) {
            (true, None) => {
                return Err(Error::Unsupported(format!(
                    "{} requires lambda",
                    self.kind
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Unsupported(format!(
                    "{} takes no lambda",
                    self.kind
                )))
            }
            _ => {}
        }
        if let (BoundKind::BernsteinParametric, Some(l)) = (self.kind, self.lambda) {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "lambda",
                    value: l,
                    reason: "must lie in (0, 1)",
                });
            }
        }
        match (self.kind == BoundKind::HoeffdingGrid, &self.grid) {
            (true, None) => return Err(Error::EmptyGrid),
            (true, Some(g)) if g.is_empty() || g.iter().any(|l| !(*l > 0.0)) => {
                return Err(Error::EmptyGrid)
            }
            (false, Some(_)) => {
                return Err(Error::Unsupported(format!("{} takes no grid", self.kind)))
            }
            _ => {}
        }
        Ok(())
    }

    /// Radius at the given KL and sample description.
    pub fn evaluate(&self, kl: f64, t: usize, eps: f64) -> Result<BoundResult> {
        self.validate()?;
        let beta = self.beta;
        let mut result = BoundResult {
            kind: self.kind,
            value: f64::NAN,
            kl,
            t,
            eps,
            beta,
            lambda: self.lambda,
            admissible: None,
        };
        match self.kind {
            BoundKind::HoeffdingParametric => {
                result.value = hoeffding_parametric(kl, self.lambda.unwrap(), t, eps, beta)?;
            }
            BoundKind::BernsteinParametric => {
                result.value = bernstein_parametric(kl, self.lambda.unwrap(), t, eps, beta)?;
            }
            BoundKind::HoeffdingGrid => {
                let g = hoeffding_grid_union(kl, t, eps, beta, self.grid.as_deref().unwrap())?;
                result.value = g.value;
                result.lambda = Some(g.lambda);
            }
            BoundKind::HoeffdingOptimized => {
                result.value = optimized_hoeffding(kl, t, eps, beta)?;
            }
            BoundKind::BernsteinOptimized => {
                result.value = optimized_bernstein(kl, t, eps, beta)?;
                result.admissible = Some(true);
            }
            BoundKind::HoeffdingOracle => {
                result.value = hoeffding_oracle(kl, t, eps, beta)?;
                result.lambda = Some(oracle_lambda_hoeffding(kl, t, eps, beta)?);
            }
            BoundKind::BernsteinOracle => {
                let o = bernstein_oracle(kl, t, eps, beta)?;
                result.value = o.value;
                result.lambda = Some(o.lambda);
                result.admissible = Some(o.feasible);
            }
        }
        Ok(result)
    }
}

/// A computed radius with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub kind: BoundKind,
    pub value: f64,
    pub kl: f64,
    pub t: usize,
    pub eps: f64,
    pub beta: f64,
    pub lambda: Option<f64>,
    pub admissible: Option<bool>,
}
