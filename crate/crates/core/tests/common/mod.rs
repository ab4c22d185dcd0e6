//! Independent oracles shared by the integration tests.
#![allow(dead_code, clippy::excessive_precision)]

/// Kronrod 15-point abscissae on [−1, 1] (non-negative half, descending).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Gauss 7-point weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let pair = f(c - r * XGK[j]) + f(c + r * XGK[j]);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * r, (k - g).abs() * r)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]`, pre-split at `breaks`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut pts = vec![a, b];
    pts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .map(|w| adapt(&f, w[0], w[1], 1e-17, 40))
        .sum()
}

/// `E f(sZ + h)` for standard Gaussian `Z` by adaptive Gauss–Kronrod on
/// `z ∈ [−14, 14]`, split at unit intervals and at the point `sz + h = 0`.
pub fn gaussian_expect(f: impl Fn(f64) -> f64, s: f64, h: f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut breaks: Vec<f64> = (-13..=13).map(f64::from).collect();
    if s > 0.0 {
        let z0 = -h / s;
        breaks.push(z0);
        for d in [-1.0, -0.1, 0.1, 1.0] {
            breaks.push(z0 + d / s);
        }
    }
    integrate(
        |z| f(s * z + h) * (-0.5 * z * z).exp() * norm,
        -14.0,
        14.0,
        &breaks,
    )
}

pub fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Largest root of `E tanh²(β√q Z + h) = q` by plain bisection on `[1e-16, 1]`.
pub fn q_oracle(beta: f64, h: f64) -> f64 {
    let g = |q: f64| gaussian_expect(|x| x.tanh().powi(2), beta * q.sqrt(), h) - q;
    let (mut lo, mut hi) = (1e-16, 1.0);
    if g(lo) <= 0.0 {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `β² E sech^p(β√q Z + h)` at the oracle overlap.
pub fn condition_oracle(beta: f64, h: f64, p: i32) -> f64 {
    let q = q_oracle(beta, h);
    beta * beta * gaussian_expect(|x| sech(x).powi(p), beta * q.sqrt(), h)
}

/// Smallest `β` on the grid `start, start + step, …` where
/// `condition_oracle(β) > 1`; the root lies in `(β − step, β]`.
pub fn first_crossing(h: f64, p: i32, start: f64, step: f64, stop: f64) -> f64 {
    let count = ((stop - start) / step).round() as usize;
    for i in 0..=count {
        let b = start + i as f64 * step;
        if condition_oracle(b, h, p) > 1.0 {
            return b;
        }
    }
    panic!("no crossing below {stop}");
}

/// Root of the condition by nested dense grids at `1e-2`, `1e-4` and
/// `1e-6`, each pass scanning the cell bracketed by the previous one.
pub fn dense_grid_root(h: f64, p: i32) -> f64 {
    let mut hi = first_crossing(h, p, 0.5, 1e-2, 10.0);
    for step in [1e-4, 1e-6] {
        hi = first_crossing(h, p, hi - 100.0 * step, step, hi);
    }
    hi - 0.5e-6
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
