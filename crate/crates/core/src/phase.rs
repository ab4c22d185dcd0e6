//! High-temperature boundaries in the `(T, h)` plane.
//!
//! Each boundary is the root in `β` of `condition(β, h, q(β, h)) = 1`, with
//! the overlap re-solved at every probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::QuadratureRule;
use crate::registry::{Named, Registry};
use crate::scalar::{at_value, solve_q, tech_value, ModelParams, MIN_TOL};

/// Search interval for the boundary in `β`.
pub const BETA_BRACKET: (f64, f64) = (0.0, 10.0);

/// A high-temperature condition of the form `value(β, h, q) ≤ 1`.
pub trait Condition: Named + Send + Sync {
    fn value(&self, params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64>;
}

/// `β² E sech⁴(β√q Z + h)`
#[derive(Debug, Clone, Copy, Default)]
pub struct AtCondition;

impl Named for AtCondition {
    fn name(&self) -> &'static str {
        "at"
    }
}

impl Condition for AtCondition {
    fn value(&self, params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
        at_value(params, q, rule)
    }
}

/// `β² E sech²(β√q Z + h)`
#[derive(Debug, Clone, Copy, Default)]
pub struct TechCondition;

impl Named for TechCondition {
    fn name(&self) -> &'static str {
        "tech"
    }
}

impl Condition for TechCondition {
    fn value(&self, params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
        tech_value(params, q, rule)
    }
}

pub fn condition_registry() -> Registry<dyn Condition> {
    let mut r: Registry<dyn Condition> = Registry::new();
    r.register(Box::new(AtCondition))
        .register(Box::new(TechCondition));
    r
}

/// `condition(β, h, q(β, h))`, solving for `q` first.
pub fn condition_at(
    cond: &dyn Condition,
    beta: f64,
    h: f64,
    rule: &QuadratureRule,
) -> Result<(f64, f64)> {
    let params = ModelParams::new(beta, h)?;
    let q = solve_q(&params, MIN_TOL, rule)?.q;
    Ok((cond.value(&params, q, rule)?, q))
}

/// Root in `β ∈ [0, 10]` of `condition − 1` by bisection to width `tol`.
/// Returns `(β, q(β, h))`.
pub fn boundary_beta(
    cond: &dyn Condition,
    h: f64,
    tol: f64,
    rule: &QuadratureRule,
) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = BETA_BRACKET;
    let f_lo = condition_at(cond, lo, h, rule)?.0 - 1.0;
    let f_hi = condition_at(cond, hi, h, rule)?.0 - 1.0;
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::Bracketing { lo, hi, f_lo, f_hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if condition_at(cond, mid, h, rule)?.0 - 1.0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    Ok((beta, condition_at(cond, beta, h, rule)?.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub h: f64,
    pub beta_at: f64,
    pub beta_tech: f64,
    pub q_at: f64,
    pub q_tech: f64,
}

impl PhasePoint {
    pub fn t_at(&self) -> f64 {
        1.0 / self.beta_at
    }

    pub fn t_tech(&self) -> f64 {
        1.0 / self.beta_tech
    }
}

/// Both boundaries for every `h` of a non-negative, sorted grid.
pub fn boundary_scan(h_grid: &[f64], tol: f64, rule: &QuadratureRule) -> Result<Vec<PhasePoint>> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid(format!("tol = {tol} must be positive")));
    }
    if h_grid.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(invalid("h grid must be finite and non-negative"));
    }
    if h_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("h grid must be sorted"));
    }
    h_grid
        .par_iter()
        .map(|&h| {
            let (beta_at, q_at) = boundary_beta(&AtCondition, h, tol, rule)?;
            let (beta_tech, q_tech) = boundary_beta(&TechCondition, h, tol, rule)?;
            Ok(PhasePoint {
                h,
                beta_at,
                beta_tech,
                q_at,
                q_tech,
            })
        })
        .collect()
}

/// Parses `a:b:step` into `a, a + step, …` up to `b` inclusive (within
/// a relative 1e-9 of a step).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(invalid(format!(
            "grid '{spec}' is not of the form a:b:step"
        )));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("'{s}' in grid '{spec}' is not a number")))
    };
    let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && b >= a) {
        return Err(invalid(format!("grid '{spec}' needs a <= b and step > 0")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| a + i as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `tech_value ≤ 1`
    TechRegion,
    /// `tech_value > 1` and `at_value < 1`
    AtOnlyRegion,
    BeyondAt,
}

pub fn region_classify(params: &ModelParams, rule: &QuadratureRule) -> Result<Region> {
    let q = solve_q(params, MIN_TOL, rule)?.q;
    if tech_value(params, q, rule)? <= 1.0 {
        Ok(Region::TechRegion)
    } else if at_value(params, q, rule)? < 1.0 {
        Ok(Region::AtOnlyRegion)
    } else {
        Ok(Region::BeyondAt)
    }
}
