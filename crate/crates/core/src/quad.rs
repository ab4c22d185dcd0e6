//! Gaussian expectations by Gauss–Hermite quadrature.
//!
//! Rules use the probabilists' normalization: nodes are abscissas for a
//! standard Gaussian `Z` and the weights sum to one, so every expectation
//! `E f(Z)` is literally a weighted average `Σ wᵢ f(xᵢ)`.

use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::scalar::ModelParams;

pub const MAX_ORDER: usize = 512;
pub const DEFAULT_ORDER: usize = 61;
/// Order-doubling agreement required before a value is reported as accurate.
pub const CONVERGENCE_TOL: f64 = 1e-11;

/// Gauss–Hermite rule for a standard Gaussian.
///
/// Nodes are strictly increasing and symmetric about zero. At orders above
/// roughly 370 the outermost weights fall below the smallest positive
/// double and are stored as zero; they carry no mass at that precision.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Unchecked `Σ wᵢ f(xᵢ)` for integrands known to be finite.
    #[inline]
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Values of the orthonormal probabilists' Hermite polynomials `p_{n-1}(x)`
/// and `p_n(x)`, as `(p_{n-1}, p_n, log_scale)` with the true values equal to
/// the returned ones times `exp(log_scale)`.
fn hermite_pair(n: usize, x: f64) -> (f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log_scale = 0.0;
    for j in 0..n {
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > BIG {
            cur /= BIG;
            prev /= BIG;
            log_scale += BIG.ln();
        }
    }
    (prev, cur, log_scale)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson-style shifts. `diag` is overwritten with the eigenvalues;
/// `off[i]` couples rows `i` and `i + 1` (the last entry is scratch).
fn tridiagonal_eigenvalues(diag: &mut [f64], off: &mut [f64]) {
    let n = diag.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "tridiagonal QL failed to converge");
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
}

/// `log w` for the node `x` of the order-`n` rule (Christoffel numbers of
/// the orthonormal family: `w = 1 / (n p_{n−1}(x)²)`).
fn log_weight(n: usize, x: f64) -> f64 {
    let (pm1, _, scale) = hermite_pair(n, x);
    -(n as f64).ln() - 2.0 * (pm1.abs().ln() + scale)
}

fn build_rule(n: usize) -> QuadratureRule {
    // Nodes are the eigenvalues of the Jacobi matrix (zero diagonal,
    // off-diagonal √j), polished by Newton steps on p_n.
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (1..=n).map(|j| (j as f64).sqrt()).collect();
    off[n - 1] = 0.0;
    tridiagonal_eigenvalues(&mut diag, &mut off);
    diag.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;

    let half = n / 2;
    let mut positive = Vec::with_capacity(half);
    for i in 0..half {
        // average the mirrored pair, then polish
        let mut x = 0.5 * (diag[n - 1 - i] - diag[i]);
        for _ in 0..8 {
            let (pm1, p, _) = hermite_pair(n, x);
            let dx = p / (nf.sqrt() * pm1);
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        positive.push(x);
    }

    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &x in &positive {
        nodes.push(-x);
        weights.push(log_weight(n, x).exp());
    }
    if n % 2 == 1 {
        nodes.push(0.0);
        weights.push(log_weight(n, 0.0).exp());
    }
    for &x in positive.iter().rev() {
        nodes.push(x);
        weights.push(log_weight(n, x).exp());
    }
    // smallest weights first
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
    let total: f64 = order.iter().map(|&i| weights[i]).sum();
    for w in &mut weights {
        *w /= total;
    }
    QuadratureRule { nodes, weights }
}

/// Gauss–Hermite rule of the given order for a standard Gaussian.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(invalid(format!(
            "quadrature order {order} outside 1..={MAX_ORDER}"
        )));
    }
    Ok(build_rule(order))
}

/// Shared order-61 rule.
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| build_rule(DEFAULT_ORDER))
}

/// `E f(Z) = Σ wᵢ f(xᵢ)`, failing on the first non-finite integrand value.
pub fn expect1(f: impl Fn(f64) -> f64, rule: &QuadratureRule) -> Result<f64> {
    let mut acc = 0.0;
    for (x, w) in rule.iter() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: x, value: v });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// A quadrature value together with its order-doubling check.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckedValue {
    pub value: f64,
    pub order: usize,
    /// `|value(2·order) − value(order)|`
    pub delta: f64,
    /// Set when `delta` exceeds [`CONVERGENCE_TOL`].
    pub accuracy_warning: bool,
}

/// Evaluates `f` with rules of order `order` and `2·order` (capped at
/// [`MAX_ORDER`]) and flags disagreement.
pub fn expect1_checked(f: impl Fn(f64) -> f64, order: usize) -> Result<CheckedValue> {
    let base = gauss_hermite_rule(order)?;
    let fine = gauss_hermite_rule((2 * order).min(MAX_ORDER))?;
    let value = expect1(&f, &base)?;
    let delta = (expect1(&f, &fine)? - value).abs();
    Ok(CheckedValue {
        value,
        order,
        delta,
        accuracy_warning: delta >= CONVERGENCE_TOL,
    })
}

/// Largest scale `s` at which `rule` integrates `f(sZ + h)` to about 1e-14
/// for `f` analytic in the strip `|Im x| < π/2` (tanh, sech, log cosh).
///
/// A pole at distance `d = π/(2s)` from the real axis limits Gauss–Hermite
/// of order `n` to an error of roughly `30·exp(−d√(2n))`.
pub fn resolved_scale(rule: &QuadratureRule) -> f64 {
    let target = (1e-14_f64 / 30.0).ln().abs();
    std::f64::consts::PI * (2.0 * rule.order() as f64).sqrt() / (2.0 * target)
}

const PANEL_WIDTH: f64 = 0.5;
const PANEL_NODES: usize = 10;
const TAIL_SIGMAS: f64 = 9.0;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_NODES))
}

/// `E f(sZ + h)` for `s ≥ 0`.
///
/// Uses `rule` when `s` is within [`resolved_scale`]; otherwise integrates
/// `f(x) φ((x − h)/s)/s` over `h ± 9s` with composite Gauss–Legendre panels
/// of width 1/2, fine enough to resolve the unit-scale structure of `f`.
pub fn expect_affine(
    f: impl Fn(f64) -> f64,
    scale: f64,
    shift: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if scale <= resolved_scale(rule) {
        return expect1(|z| f(scale * z + shift), rule);
    }
    let (gx, gw) = panel_rule();
    let lo = shift - TAIL_SIGMAS * scale;
    let span = 2.0 * TAIL_SIGMAS * scale;
    let panels = (span / PANEL_WIDTH).ceil() as usize;
    let half = 0.5 * span / panels as f64;
    let norm = 1.0 / (scale * (2.0 * std::f64::consts::PI).sqrt());
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = lo + (2 * p + 1) as f64 * half;
        let mut part = 0.0;
        for (t, w) in gx.iter().zip(gw) {
            let x = mid + half * t;
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    node: (x - shift) / scale,
                    value: v,
                });
            }
            let z = (x - shift) / scale;
            part += w * v * (-0.5 * z * z).exp();
        }
        acc += half * part;
    }
    Ok(acc * norm)
}

/// `ψ(t) = E tanh(β√t Z + β√(q−t) Z' + h) tanh(β√t Z + β√(q−t) Z'' + h)`.
///
/// Given `Z` the two factors are independent and identically distributed,
/// so `ψ(t) = E_Z[(E_{Z'} tanh(β√t Z + β√(q−t) Z' + h))²]`, two nested
/// one-dimensional rules.
pub fn psi(t: f64, q: f64, params: &ModelParams, rule: &QuadratureRule) -> Result<f64> {
    check_psi_args(t, q)?;
    let (a, b) = (params.beta * t.sqrt(), params.beta * (q - t).sqrt());
    let h = params.h;
    let inner = |y: f64| expect_affine(f64::tanh, b, y + h, rule).unwrap_or(f64::NAN);
    expect_affine(|y| inner(y).powi(2), a, 0.0, rule)
}

/// `ψ` evaluated as a plain three-dimensional tensor rule over
/// `(Z, Z', Z'')`. O(n³); kept as an independent reference for [`psi`].
pub fn psi_tensor(t: f64, q: f64, params: &ModelParams, rule: &QuadratureRule) -> Result<f64> {
    check_psi_args(t, q)?;
    let (a, b) = (params.beta * t.sqrt(), params.beta * (q - t).sqrt());
    let h = params.h;
    let mut acc = 0.0;
    for (z, wz) in rule.iter() {
        for (z1, w1) in rule.iter() {
            let f1 = (a * z + b * z1 + h).tanh();
            for (z2, w2) in rule.iter() {
                acc += wz * w1 * w2 * f1 * (a * z + b * z2 + h).tanh();
            }
        }
    }
    Ok(acc)
}

fn check_psi_args(t: f64, q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(invalid(format!("psi: q = {q} outside [0, 1]")));
    }
    if !(0.0..=q).contains(&t) || t.is_nan() {
        return Err(invalid(format!("psi: t = {t} outside [0, q = {q}]")));
    }
    Ok(())
}
