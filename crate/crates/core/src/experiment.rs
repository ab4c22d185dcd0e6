//! Exact free energies by enumeration, disorder averages, the re-centred
//! Hamiltonian decomposition and the restricted lower bound on `f_N`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gray;
use crate::linalg::{Matrix, Vector};
use crate::quad::QuadratureRule;
use crate::reduced::{log_reduced_partition, reduced_set_mass, ReducedSetSpec};
use crate::rng::{Domain, SeedRecord};
use crate::scalar::{rs_free_energy, solve_q, ModelParams};
use crate::summation::{log_cosh, CompensatedSum, LogSumExp};
use crate::tap::{sample_disorder, tap_iterate, Disorder, TapState};

/// Largest `N` for [`exact_log_partition`].
pub const MAX_EXACT_SPINS: usize = 24;
/// Largest `N` for [`lower_bound_pipeline`].
pub const MAX_PIPELINE_SPINS: usize = 20;
/// Configurations checked against the raw double sum per enumeration.
pub const RAW_CHECKS: usize = 100;
const RESYNC_PERIOD: u64 = 1 << 10;
const KERNEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergySample {
    pub n: usize,
    pub seed: Option<SeedRecord>,
    /// `(1/N) log Z_N`
    pub f_n: f64,
    pub params: ModelParams,
}

/// `H_N(σ) = (β/√2) Σ_ij g_ij σᵢσⱼ + h Σ σᵢ` as a raw double sum.
pub fn hamiltonian_raw(g: &Matrix, params: &ModelParams, sigma: &[f64]) -> f64 {
    let n = g.dim();
    let mut acc = CompensatedSum::new();
    for i in 0..n {
        for j in 0..n {
            acc.add(g[(i, j)] * sigma[i] * sigma[j]);
        }
    }
    params.beta * std::f64::consts::FRAC_1_SQRT_2 * acc.value()
        + params.h * sigma.iter().sum::<f64>()
}

/// `N [(β/2)⟨σ, ḡσ⟩ + h⟨1, σ⟩]`
pub fn hamiltonian_symmetric(gbar: &Matrix, params: &ModelParams, sigma: &[f64]) -> f64 {
    let s = Vector::from_vec(sigma.to_vec());
    let n = sigma.len() as f64;
    n * (0.5 * params.beta * gbar.form(&s, &s) + params.h * s.iter().sum::<f64>() / n)
}

/// Exact `(1/N) log Z_N` by a Gray walk with incremental local fields.
///
/// Before the walk the symmetrized Hamiltonian is compared with the raw
/// double sum on [`RAW_CHECKS`] random configurations; during the walk the
/// running energy is recomputed from scratch every 2¹⁰ flips. Either check
/// failing by more than 1e-10 is a consistency error.
pub fn exact_log_partition(d: &Disorder, params: &ModelParams) -> Result<FreeEnergySample> {
    let n = d.n();
    if n > MAX_EXACT_SPINS {
        return Err(Error::Capability(format!(
            "exact enumeration over N = {n} spins exceeds {MAX_EXACT_SPINS}"
        )));
    }
    let g = d.couplings();
    let gbar = d.symmetrized();
    let stream = d.seed().map_or(0, |s| s.index());
    let mut rng = SeedRecord::new(d.seed().map_or(0, |s| s.seed), Domain::Spins, stream).rng();
    for _ in 0..RAW_CHECKS {
        let s: Vec<f64> = (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let raw = hamiltonian_raw(g, params, &s);
        let sym = hamiltonian_symmetric(&gbar, params, &s);
        if (raw - sym).abs() > KERNEL_TOL * (1.0 + raw.abs()) {
            return Err(Error::Consistency(format!(
                "symmetrized Hamiltonian {sym} differs from raw double sum {raw}"
            )));
        }
    }

    // H = ½ σᵀJσ + h Σσ with J = (β/√2)(g + gᵀ), zero diagonal
    let c = params.beta * std::f64::consts::FRAC_1_SQRT_2;
    let j: Vec<f64> = (0..n * n)
        .map(|t| c * (g.as_slice()[t] + g[(t % n, t / n)]))
        .collect();
    let h = params.h;
    let full = |mask: u32, local: &mut [f64]| -> f64 {
        let s = gray::spins(mask, n);
        let mut e = 0.0;
        for i in 0..n {
            local[i] = (0..n).map(|k| j[i * n + k] * s[k]).sum();
            e += 0.5 * s[i] * local[i] + h * s[i];
        }
        e
    };
    let mut local = vec![0.0; n];
    let mut energy = full(0, &mut local);
    let mut lse = LogSumExp::new();
    lse.add(energy);
    let mut steps: u64 = 0;
    let mut drift: Option<(f64, f64)> = None;
    gray::walk(
        n,
        || {},
        |f| {
            let i = f.site;
            energy -= 2.0 * f.old * (local[i] + h);
            for (k, l) in local.iter_mut().enumerate() {
                *l -= 2.0 * f.old * j[k * n + i];
            }
            steps += 1;
            if steps.is_multiple_of(RESYNC_PERIOD) {
                let exact = full(f.mask, &mut local);
                if drift.is_none() && (exact - energy).abs() > KERNEL_TOL * (1.0 + exact.abs()) {
                    drift = Some((energy, exact));
                }
                energy = exact;
            }
            lse.add(energy);
        },
    )?;
    if let Some((inc, exact)) = drift {
        return Err(Error::Consistency(format!(
            "incremental energy {inc} drifted from recomputed {exact}"
        )));
    }
    Ok(FreeEnergySample {
        n,
        seed: d.seed(),
        f_n: lse.value() / n as f64,
        params: *params,
    })
}

/// Sample mean with its plug-in standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs
        .iter()
        .map(|x| (x - mean).powi(2))
        .collect::<CompensatedSum>()
        .value()
        / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let (mean, _) = mean_stderr(xs);
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderAverage {
    pub params: ModelParams,
    pub n: usize,
    pub seed: u64,
    pub mean_f: f64,
    pub stderr: f64,
    /// Replica-symmetric prediction at the solved overlap.
    pub rs: f64,
    pub q: f64,
    pub samples: Vec<FreeEnergySample>,
}

/// `f_N` over disorders drawn from streams `0..samples` of `seed`.
pub fn disorder_average(
    params: &ModelParams,
    n: usize,
    samples: usize,
    seed: u64,
    rule: &QuadratureRule,
) -> Result<DisorderAverage> {
    if samples < 2 {
        return Err(invalid("disorder average needs at least 2 samples"));
    }
    if n > MAX_EXACT_SPINS {
        return Err(Error::Capability(format!(
            "exact enumeration over N = {n} spins exceeds {MAX_EXACT_SPINS}"
        )));
    }
    let q = solve_q(params, crate::scalar::MIN_TOL, rule)?.q;
    let rs = rs_free_energy(params, q, rule)?;
    let draws: Vec<FreeEnergySample> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let d = sample_disorder(n, SeedRecord::new(seed, Domain::Disorder, i as u64))?;
            exact_log_partition(&d, params)
        })
        .collect::<Result<_>>()?;
    let fs: Vec<f64> = draws.iter().map(|s| s.f_n).collect();
    let (mean_f, stderr) = mean_stderr(&fs);
    Ok(DisorderAverage {
        params: *params,
        n,
        seed,
        mean_f,
        stderr,
        rs,
        q,
        samples: draws,
    })
}

/// `(1/N) log E Z_N = log 2 + log cosh h + β²(N − 1)/(4N)`.
pub fn annealed_free_energy(params: &ModelParams, n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::LN_2 + log_cosh(params.h) + params.beta.powi(2) * (nf - 1.0) / (4.0 * nf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealedEstimate {
    /// `(1/N) log` of the sample mean of `Z_N`.
    pub log_mean_z_per_n: f64,
    /// Delta-method standard error of `log_mean_z_per_n`.
    pub stderr: f64,
    pub exact: f64,
    pub samples: usize,
}

impl AnnealedEstimate {
    pub fn agrees(&self, sigmas: f64) -> bool {
        (self.log_mean_z_per_n - self.exact).abs() <= sigmas * self.stderr
    }
}

/// Monte Carlo `(1/N) log E Z_N` over `samples` disorders.
pub fn annealed_estimate(
    params: &ModelParams,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<AnnealedEstimate> {
    if samples < 2 {
        return Err(invalid("annealed estimate needs at least 2 samples"));
    }
    let logs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let d = sample_disorder(n, SeedRecord::new(seed, Domain::Disorder, i as u64))?;
            Ok(exact_log_partition(&d, params)?.f_n * n as f64)
        })
        .collect::<Result<_>>()?;
    // ratios to the largest draw keep Z in range
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratios: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let (mean, se) = mean_stderr(&ratios);
    let nf = n as f64;
    Ok(AnnealedEstimate {
        log_mean_z_per_n: (top + mean.ln()) / nf,
        stderr: se / mean / nf,
        exact: annealed_free_energy(params, n),
        samples,
    })
}

/// Magnitudes of the five error contributions in the restricted lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    /// `β (ε/k) Σ_s ‖ζ⁽ˢ⁾‖ (2 + ε/k)`
    pub epsilon: f64,
    /// `β Σ_s ‖ζ⁽ˢ⁾‖ (2δ_s + δ_s²)`, `δ_s = |⟨φ⁽ˢ⁾, m⁽ᵏ⁺¹⁾⟩ − γ_s|`
    pub concentration: f64,
    /// `(β/2) Σ_s γ_s² |⟨φ⁽ˢ⁾, ζ⁽ˢ⁾⟩|`
    pub phi_zeta: f64,
    /// `β γ_k ‖ζ⁽ᵏ⁾‖`
    pub gamma_zeta: f64,
    /// `β √(q − Γ²_{k−1}) ‖ζ⁽ᵏ⁾‖`
    pub remainder_zeta: f64,
}

impl ErrorTerms {
    pub fn total(&self) -> f64 {
        self.epsilon + self.concentration + self.phi_zeta + self.gamma_zeta + self.remainder_zeta
    }
}

/// Error terms evaluated on a stored state.
pub fn error_terms(state: &TapState, epsilon: f64) -> ErrorTerms {
    let beta = state.params.beta;
    let k = state.depth();
    let r = epsilon / k as f64;
    let norms: Vec<f64> = state.zeta.iter().map(Vector::norm).collect();
    let m = state.last_m();
    let mut eps = 0.0;
    let mut conc = 0.0;
    let mut pz = 0.0;
    for s in 1..=k {
        let zn = norms[s - 1];
        let g = state.se.gamma(s);
        let delta = (state.phi[s - 1].dot(m) - g).abs();
        eps += beta * r * zn * (2.0 + r);
        conc += beta * zn * (2.0 * delta + delta * delta);
        pz += 0.5 * beta * g * g * state.phi[s - 1].dot(&state.zeta[s - 1]).abs();
    }
    let rem = (state.q - state.se.gamma2(k - 1)).max(0.0).sqrt();
    ErrorTerms {
        epsilon: eps,
        concentration: conc,
        phi_zeta: pz,
        gamma_zeta: beta * state.se.gamma(k) * norms[k - 1],
        remainder_zeta: beta * rem * norms[k - 1],
    }
}

/// Both sides of the re-centred decomposition of `H_N(σ)/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `(β/2)⟨σ, ḡ⁽ᵏ⁺¹⁾σ⟩`
    pub modified_energy: f64,
    /// `⟨h⁽ᵏ⁺¹⁾, σ⟩`
    pub field: f64,
    /// `(β/2) Σ_s ⟨σ̂⁽ˢ⁾, ρ̄⁽ˢ⁾σ̂⁽ˢ⁾⟩`
    pub centred_rank_two: f64,
    /// `−(β/2) Σ_s γ_s² ⟨φ⁽ˢ⁾, ζ⁽ˢ⁾⟩`
    pub phi_zeta: f64,
    /// `β (γ_k − √(q − Γ²_{k−1})) ⟨σ, ζ⁽ᵏ⁾⟩`
    pub last_step: f64,
}

/// `⟨x, ρ̄⁽ˢ⁾x⟩ = 2⟨ζ, x⟩⟨φ, x⟩ − ⟨ζ, φ⟩⟨φ, x⟩²`
fn rank_two_form(state: &TapState, s: usize, x: &Vector) -> f64 {
    let (phi, zeta) = (&state.phi[s - 1], &state.zeta[s - 1]);
    let px = phi.dot(x);
    2.0 * zeta.dot(x) * px - zeta.dot(phi) * px * px
}

/// Evaluates `H_N(σ)/N` directly and through the decomposition.
pub fn decomposition_check(state: &TapState, sigma: &[f64]) -> Result<DecompositionReport> {
    let n = state.n();
    if sigma.len() != n {
        return Err(invalid(format!("σ has length {} but N = {n}", sigma.len())));
    }
    if sigma.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(invalid("σ must have ±1 entries"));
    }
    let beta = state.params.beta;
    let k = state.depth();
    let s = Vector::from_vec(sigma.to_vec());
    let lhs = hamiltonian_raw(state.disorder.couplings(), &state.params, sigma) / n as f64;

    let modified_energy = 0.5 * beta * state.gmod.symmetrized().form(&s, &s);
    let field = state.hfield.dot(&s);
    let mut centred = CompensatedSum::new();
    let mut pz = CompensatedSum::new();
    for t in 1..=k {
        let g = state.se.gamma(t);
        let mut hat = s.clone();
        hat.axpy(-g, &state.phi[t - 1]);
        centred.add(0.5 * beta * rank_two_form(state, t, &hat));
        pz.add(-0.5 * beta * g * g * state.phi[t - 1].dot(&state.zeta[t - 1]));
    }
    let rem = (state.q - state.se.gamma2(k - 1)).max(0.0).sqrt();
    let last_step = beta * (state.se.gamma(k) - rem) * s.dot(&state.zeta[k - 1]);
    let rhs = modified_energy + field + centred.value() + pz.value() + last_step;
    Ok(DecompositionReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        modified_energy,
        field,
        centred_rank_two: centred.value(),
        phi_zeta: pz.value(),
        last_step,
    })
}

/// One disorder draw of the lower-bound pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub stream: u64,
    pub depth: usize,
    pub f_n: f64,
    /// `log 2 + mean log cosh h⁽ᵏ⁺¹⁾ + (1/N) log Z⁽ᵏ⁺¹⁾(S) − E`
    pub rhs: f64,
    /// `f_n − rhs`, non-negative
    pub gap: f64,
    /// `f_n − RS`
    pub rs_gap: f64,
    pub mean_log_cosh: f64,
    pub log_reduced_per_n: f64,
    pub pfree_mass: f64,
    pub terms: ErrorTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub params: ModelParams,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub samples: usize,
    pub q: f64,
    pub rs: f64,
    pub median_gap: f64,
    pub median_rs_gap: f64,
    pub max_rs_gap: f64,
    /// Draws with `f_n < rhs − 1e-9`.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub summary: PipelineSummary,
    pub records: Vec<PipelineRecord>,
}

/// Slack allowed in `f_N ≥ rhs`.
pub const RESTRICTION_SLACK: f64 = 1e-9;

/// Exact `f_N` against the restricted lower bound on `samples` disorders
/// (streams `0..samples` of `seed`).
pub fn lower_bound_pipeline(
    params: &ModelParams,
    n: usize,
    k: usize,
    epsilon: f64,
    seed: u64,
    samples: usize,
    rule: &QuadratureRule,
) -> Result<PipelineReport> {
    if n > MAX_PIPELINE_SPINS {
        return Err(Error::Capability(format!(
            "lower-bound pipeline over N = {n} spins exceeds {MAX_PIPELINE_SPINS}"
        )));
    }
    if samples == 0 {
        return Err(invalid("pipeline needs at least one sample"));
    }
    ReducedSetSpec::new(epsilon, k)?;
    let q = solve_q(params, crate::scalar::MIN_TOL, rule)?.q;
    let rs = rs_free_energy(params, q, rule)?;
    let records: Vec<PipelineRecord> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let d = sample_disorder(n, SeedRecord::new(seed, Domain::Disorder, i))?;
            let f_n = exact_log_partition(&d, params)?.f_n;
            let st = tap_iterate(d, params, q, k, rule)?;
            let spec = ReducedSetSpec::new(epsilon, st.depth())?;
            let nf = n as f64;
            let log_red = log_reduced_partition(&st, &spec, &st.gmod)? / nf;
            let mass = reduced_set_mass(&st, &spec, None)?.mass;
            let mlc = st.hfield.iter().map(|&x| log_cosh(x)).sum::<f64>() / nf;
            let terms = error_terms(&st, epsilon);
            let rhs = std::f64::consts::LN_2 + mlc + log_red - terms.total();
            Ok(PipelineRecord {
                stream: i,
                depth: st.depth(),
                f_n,
                rhs,
                gap: f_n - rhs,
                rs_gap: f_n - rs,
                mean_log_cosh: mlc,
                log_reduced_per_n: log_red,
                pfree_mass: mass,
                terms,
            })
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
    let rs_gaps: Vec<f64> = records.iter().map(|r| r.rs_gap.abs()).collect();
    Ok(PipelineReport {
        summary: PipelineSummary {
            params: *params,
            n,
            k,
            epsilon,
            seed,
            samples,
            q,
            rs,
            median_gap: median(&gaps),
            median_rs_gap: median(&rs_gaps),
            max_rs_gap: rs_gaps.iter().copied().fold(0.0, f64::max),
            violations: records
                .iter()
                .filter(|r| r.f_n < r.rhs - RESTRICTION_SLACK)
                .count(),
        },
        records,
    })
}
