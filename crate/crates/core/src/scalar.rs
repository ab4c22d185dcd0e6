//! Deterministic scalar theory: the overlap fixed point, the state-evolution
//! sequences, the two high-temperature conditions and the replica-symmetric
//! free energy.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{expect_affine, psi, QuadratureRule};
use crate::registry::{Named, Registry};
use crate::summation::log_cosh;

/// Inverse temperature and external field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(beta: f64, h: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(invalid(format!("beta = {beta} must be finite and >= 0")));
        }
        if !h.is_finite() || h < 0.0 {
            return Err(invalid(format!("h = {h} must be finite and >= 0")));
        }
        Ok(ModelParams { beta, h })
    }

    /// Standard deviation `β√q` of the cavity field around `h`.
    pub fn field_scale(&self, q: f64) -> f64 {
        self.beta * q.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    DampedIteration,
    Bisection,
    /// Closed form: `β = 0`, or `h = 0` with `β ≤ 1`.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapFixedPoint {
    pub q: f64,
    /// `|q − E tanh²(β√q Z + h)|`
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// `E tanh²(β√q Z + h)`, the right side of the fixed-point equation.
pub fn overlap_map(params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
    let s = params.field_scale(q);
    expect_affine(|x| x.tanh().powi(2), s, params.h, rule)
}

fn residual(params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
    Ok((overlap_map(params, q, rule)? - q).abs())
}

/// A strategy for the scalar fixed-point equation `q = E tanh²(β√q Z + h)`.
pub trait FixedPointSolver: Named + Send + Sync {
    fn solve(
        &self,
        params: &ModelParams,
        tol: f64,
        rule: &QuadratureRule,
    ) -> Result<OverlapFixedPoint>;
}

/// `q ← (1−λ) q + λ·RHS(q)` started from `q = 1`.
///
/// The right side is increasing in `q`, so the iterates decrease
/// monotonically onto the largest fixed point. A sign change of the
/// residual is treated as oscillation and reported as non-convergence.
#[derive(Debug, Clone, Copy)]
pub struct DampedIteration {
    pub damping: f64,
    pub max_iter: usize,
}

impl Default for DampedIteration {
    fn default() -> Self {
        DampedIteration {
            damping: 0.5,
            max_iter: 2000,
        }
    }
}

impl Named for DampedIteration {
    fn name(&self) -> &'static str {
        "damped"
    }
}

impl FixedPointSolver for DampedIteration {
    fn solve(
        &self,
        params: &ModelParams,
        tol: f64,
        rule: &QuadratureRule,
    ) -> Result<OverlapFixedPoint> {
        let mut q = 1.0;
        let mut last_sign = 0.0;
        for it in 1..=self.max_iter {
            let r = overlap_map(params, q, rule)? - q;
            if r.abs() <= tol {
                return Ok(OverlapFixedPoint {
                    q,
                    residual: r.abs(),
                    iterations: it,
                    method: SolveMethod::DampedIteration,
                });
            }
            if last_sign != 0.0 && r.signum() != last_sign {
                return Err(Error::Convergence {
                    iterations: it,
                    last: q,
                    residual: r.abs(),
                });
            }
            last_sign = r.signum();
            q = (q + self.damping * r).clamp(0.0, 1.0);
        }
        Err(Error::Convergence {
            iterations: self.max_iter,
            last: q,
            residual: residual(params, q, rule)?,
        })
    }
}

/// Bisection on `g(q) = RHS(q) − q` over `[1e-16, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Bisection {
    pub max_iter: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Bisection { max_iter: 200 }
    }
}

impl Named for Bisection {
    fn name(&self) -> &'static str {
        "bisection"
    }
}

impl FixedPointSolver for Bisection {
    fn solve(
        &self,
        params: &ModelParams,
        tol: f64,
        rule: &QuadratureRule,
    ) -> Result<OverlapFixedPoint> {
        let g = |q: f64| overlap_map(params, q, rule).map(|v| v - q);
        let (mut lo, mut hi) = (1e-16, 1.0);
        let (mut g_lo, mut g_hi) = (g(lo)?, g(hi)?);
        if g_lo == 0.0 || g_hi == 0.0 {
            let q = if g_hi == 0.0 { hi } else { lo };
            return Ok(OverlapFixedPoint {
                q,
                residual: 0.0,
                iterations: 0,
                method: SolveMethod::Bisection,
            });
        }
        if g_lo < 0.0 || g_hi > 0.0 {
            return Err(Error::Bracketing {
                lo,
                hi,
                f_lo: g_lo,
                f_hi: g_hi,
            });
        }
        for it in 1..=self.max_iter {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                let (q, r) = if g_lo.abs() <= g_hi.abs() {
                    (lo, g_lo.abs())
                } else {
                    (hi, g_hi.abs())
                };
                return finish_bisection(q, r, it, tol);
            }
            let g_mid = g(mid)?;
            if g_mid == 0.0 {
                return finish_bisection(mid, 0.0, it, tol);
            }
            if g_mid > 0.0 {
                lo = mid;
                g_lo = g_mid;
            } else {
                hi = mid;
                g_hi = g_mid;
            }
        }
        let q = 0.5 * (lo + hi);
        finish_bisection(q, g(q)?.abs(), self.max_iter, tol)
    }
}

fn finish_bisection(q: f64, r: f64, iterations: usize, tol: f64) -> Result<OverlapFixedPoint> {
    if r > tol {
        return Err(Error::Convergence {
            iterations,
            last: q,
            residual: r,
        });
    }
    Ok(OverlapFixedPoint {
        q,
        residual: r,
        iterations,
        method: SolveMethod::Bisection,
    })
}

/// Damped iteration, falling back to bisection when it oscillates or runs
/// out of iterations. Handles the closed-form cases directly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Auto {
    pub damped: DampedIteration,
    pub bisection: Bisection,
}

impl Named for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }
}

impl FixedPointSolver for Auto {
    fn solve(
        &self,
        params: &ModelParams,
        tol: f64,
        rule: &QuadratureRule,
    ) -> Result<OverlapFixedPoint> {
        if params.beta == 0.0 || (params.h == 0.0 && params.beta <= 1.0) {
            let q = if params.beta == 0.0 {
                params.h.tanh().powi(2)
            } else {
                0.0
            };
            return Ok(OverlapFixedPoint {
                q,
                residual: residual(params, q, rule)?,
                iterations: 0,
                method: SolveMethod::Analytic,
            });
        }
        match self.damped.solve(params, tol, rule) {
            Ok(fp) => Ok(fp),
            Err(Error::Convergence { iterations, .. }) => {
                let mut fp = self.bisection.solve(params, tol, rule)?;
                fp.iterations += iterations;
                Ok(fp)
            }
            Err(e) => Err(e),
        }
    }
}

/// All fixed-point strategies, keyed by name.
pub fn solver_registry() -> Registry<dyn FixedPointSolver> {
    let mut reg: Registry<dyn FixedPointSolver> = Registry::new();
    reg.register(Box::new(Auto::default()))
        .register(Box::new(DampedIteration::default()))
        .register(Box::new(Bisection::default()));
    reg
}

pub const MIN_TOL: f64 = 1e-14;

/// Largest solution in `[0, 1]` of `q = E tanh²(β√q Z + h)`.
///
/// Uses [`Auto`]; with `h = 0` and `β ≤ 1` returns `q = 0`.
pub fn solve_q(params: &ModelParams, tol: f64, rule: &QuadratureRule) -> Result<OverlapFixedPoint> {
    if tol.is_nan() || tol < MIN_TOL {
        return Err(invalid(format!("tol = {tol} below {MIN_TOL}")));
    }
    Auto::default().solve(params, tol, rule)
}

/// Why a state-evolution table stopped short of the requested depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Complete,
    /// `q − Γ²_{k−1}` dropped below [`SE_REMAINDER_FLOOR`].
    RemainderUnderflow,
    /// The next step's ordering chain was lost to rounding while the
    /// remainder was already below [`SE_ROUNDING_REGIME`].
    RoundingSaturation,
}

/// `q − Γ²_{k−1}` below which `γ_k` is not computed.
pub const SE_REMAINDER_FLOOR: f64 = 1e-13;
/// Remainder below which a broken ordering is attributed to rounding.
pub const SE_ROUNDING_REGIME: f64 = 1e-9;

/// `α_k`, `γ_k`, `Γ_k²` for `k = 1..=depth`, stored zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEvolutionTable {
    pub requested: usize,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma2cum: Vec<f64>,
    pub q: f64,
    pub termination: Termination,
}

impl StateEvolutionTable {
    /// Number of computed levels.
    pub fn depth(&self) -> usize {
        self.alpha.len()
    }

    /// `α_k` with one-based `k`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha[k - 1]
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.gamma[k - 1]
    }

    /// `Γ_k²`, with `Γ_0² = 0`.
    pub fn gamma2(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.gamma2cum[k - 1]
        }
    }

    /// Checks the ordering chain for every `k ≥ 2`; returns the first
    /// violated relation.
    pub fn check_chain(&self) -> std::result::Result<(), String> {
        for k in 2..=self.depth() {
            let g_prev = self.gamma2(k - 1);
            let a = self.alpha(k);
            let g = self.gamma(k);
            let bound = (self.q - g_prev).sqrt();
            if !(0.0 < g_prev && g_prev < a && a < self.q) {
                return Err(format!(
                    "k={k}: expected 0 < Γ²={g_prev} < α={a} < q={}",
                    self.q
                ));
            }
            if !(0.0 < g && g < bound) {
                return Err(format!("k={k}: expected 0 < γ={g} < {bound}"));
            }
            if self.alpha(k) < self.alpha(k - 1) {
                return Err(format!("k={k}: α decreased"));
            }
        }
        Ok(())
    }
}

/// Tolerance on `|q − RHS(q)|` for accepting a caller-supplied overlap.
pub const Q_CONSISTENCY_TOL: f64 = 1e-9;

/// Runs `α_k = ψ(α_{k−1})`, `γ_k = (α_k − Γ²_{k−1})/√(q − Γ²_{k−1})`,
/// `Γ_k² = Γ²_{k−1} + γ_k²` from `α₁ = √q γ₁`, `γ₁ = E tanh(β√q Z + h)`.
pub fn state_evolution(
    params: &ModelParams,
    q: f64,
    depth: usize,
    rule: &QuadratureRule,
) -> Result<StateEvolutionTable> {
    if depth == 0 {
        return Err(invalid("state evolution depth must be >= 1"));
    }
    let r = residual(params, q, rule)?;
    if !(0.0..=1.0).contains(&q) || r > Q_CONSISTENCY_TOL {
        return Err(invalid(format!(
            "q = {q} is not a fixed point for {params:?} (residual {r:e})"
        )));
    }
    let s = params.field_scale(q);
    let gamma1 = expect_affine(f64::tanh, s, params.h, rule)?;
    let mut table = StateEvolutionTable {
        requested: depth,
        alpha: vec![q.sqrt() * gamma1],
        gamma: vec![gamma1],
        gamma2cum: vec![gamma1 * gamma1],
        q,
        termination: Termination::Complete,
    };
    for k in 2..=depth {
        let g_prev = table.gamma2(k - 1);
        let rem = q - g_prev;
        if rem < SE_REMAINDER_FLOOR {
            table.termination = Termination::RemainderUnderflow;
            break;
        }
        let a_prev = table.alpha(k - 1);
        let a = psi(a_prev.clamp(0.0, q), q, params, rule)?;
        let g = (a - g_prev) / rem.sqrt();
        let ordered = 0.0 < g_prev && g_prev < a && a < q && 0.0 < g && g < rem.sqrt();
        if !ordered {
            if rem < SE_ROUNDING_REGIME {
                table.termination = Termination::RoundingSaturation;
                break;
            }
            return Err(Error::Consistency(format!(
                "state evolution ordering broken at k={k}: Γ²={g_prev}, α={a}, γ={g}, q={q}"
            )));
        }
        table.alpha.push(a);
        table.gamma.push(g);
        table.gamma2cum.push(g_prev + g * g);
    }
    Ok(table)
}

/// `β² E sech⁴(β√q Z + h)`; the AT region is `value < 1`.
pub fn at_value(params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
    let s = params.field_scale(q);
    let e = expect_affine(|x| (1.0 / x.cosh()).powi(4), s, params.h, rule)?;
    Ok(params.beta * params.beta * e)
}

/// `β² E sech²(β√q Z + h)`; the tech region is `value ≤ 1`.
pub fn tech_value(params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
    let s = params.field_scale(q);
    let e = expect_affine(|x| (1.0 / x.cosh()).powi(2), s, params.h, rule)?;
    Ok(params.beta * params.beta * e)
}

/// `E log cosh(β√q Z + h)`
pub fn mean_log_cosh(params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
    let s = params.field_scale(q);
    expect_affine(log_cosh, s, params.h, rule)
}

/// `log 2 + E log cosh(β√q Z + h) + (β²/4)(1 − q)²`
pub fn rs_free_energy(params: &ModelParams, q: f64, rule: &QuadratureRule) -> Result<f64> {
    let b2 = params.beta * params.beta;
    Ok(std::f64::consts::LN_2 + mean_log_cosh(params, q, rule)? + 0.25 * b2 * (1.0 - q).powi(2))
}
