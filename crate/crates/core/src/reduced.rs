//! Coin-tossing measure, the restricted set `S_{ε,k}` and the conditional
//! moments of the reduced partition function
//! `Z(S) = Σ_{σ∈S} p_free(σ) exp((β/√2) σᵀ g⁽ᵏ⁺¹⁾ σ)`.
//!
//! Exact values come from a Gray-code walk that keeps the `k` coordinates
//! `⟨σ, φ⁽ˢ⁾⟩` and `Σ hᵢσᵢ` current in O(k) per flip. Monte Carlo values
//! average `Z(S)` over draws of `Q G Q` from [`conditional_resample`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gray::{self, Flip};
use crate::linalg::{Matrix, Vector};
use crate::rng::{Domain, SeedRecord};
use crate::summation::{log_cosh, CompensatedSum, LogSumExp};
use crate::tap::{conditional_resample, TapState};

/// Largest `N` for single-configuration enumeration.
pub const MAX_ENUM_SPINS: usize = 24;
/// Largest `N` for pair enumeration.
pub const MAX_PAIR_SPINS: usize = 14;
/// Steps between full recomputations of the running coordinates.
const RESYNC_PERIOD: u64 = 1 << 10;

/// Product measure `Π ½ exp(hᵢσᵢ)/cosh hᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PFree {
    fields: Vector,
    log_norm: f64,
}

impl PFree {
    pub fn new(fields: Vector) -> Self {
        let log_norm = fields
            .iter()
            .map(|&h| std::f64::consts::LN_2 + log_cosh(h))
            .collect::<CompensatedSum>()
            .value();
        PFree { fields, log_norm }
    }

    /// The measure built on `h⁽ᵏ⁺¹⁾`.
    pub fn from_state(state: &TapState) -> Self {
        Self::new(state.hfield.clone())
    }

    pub fn n(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &Vector {
        &self.fields
    }

    /// `Σ log(2 cosh hᵢ)`
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_prob(&self, sigma: &[f64]) -> f64 {
        let e: f64 = self.fields.iter().zip(sigma).map(|(h, s)| h * s).sum();
        e - self.log_norm
    }

    pub fn log_prob_mask(&self, mask: u32) -> f64 {
        self.log_prob(&gray::spins(mask, self.n()))
    }

    pub fn prob(&self, sigma: &[f64]) -> f64 {
        self.log_prob(sigma).exp()
    }

    /// `tanh hᵢ`, the mean spin.
    pub fn mean(&self) -> Vector {
        self.fields.map(f64::tanh)
    }

    /// One configuration with independent spins, `P(σᵢ = 1) = (1 + tanh hᵢ)/2`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.fields
            .iter()
            .map(|&h| {
                let up = 0.5 * (1.0 + h.tanh());
                if rng.random::<f64>() < up {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }
}

/// `S_{ε,k} = {σ : |⟨σ − m⁽ᵏ⁺¹⁾, φ⁽ˢ⁾⟩| ≤ ε/k for all s ≤ k}`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedSetSpec {
    pub epsilon: f64,
    pub k: usize,
}

impl ReducedSetSpec {
    pub fn new(epsilon: f64, k: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!(
                "epsilon = {epsilon} must be finite and positive"
            )));
        }
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        Ok(ReducedSetSpec { epsilon, k })
    }

    pub fn radius(&self) -> f64 {
        self.epsilon / self.k as f64
    }

    /// `1 − 2k exp(−Nε²/(2k²))`
    pub fn mass_bound(&self, n: usize) -> f64 {
        let k = self.k as f64;
        1.0 - 2.0 * k * (-(n as f64) * self.epsilon.powi(2) / (2.0 * k * k)).exp()
    }

    fn check(&self, state: &TapState) -> Result<()> {
        if self.k != state.depth() {
            return Err(invalid(format!(
                "set depth k = {} differs from state depth {}",
                self.k,
                state.depth()
            )));
        }
        Ok(())
    }
}

/// Centre coordinates `⟨m⁽ᵏ⁺¹⁾, φ⁽ˢ⁾⟩`.
pub fn centre(state: &TapState) -> Vec<f64> {
    state.phi_coordinates(state.last_m())
}

/// True when the coordinates `a_s = ⟨σ, φ⁽ˢ⁾⟩` place `σ` in the set.
pub fn in_set(a: &[f64], centre: &[f64], radius: f64) -> bool {
    a.iter().zip(centre).all(|(x, c)| (x - c).abs() <= radius)
}

/// `1 − Σ a_s² = ‖Q⁽ᵏ⁾σ‖²` for a spin configuration.
pub fn q_norm2(a: &[f64]) -> f64 {
    1.0 - a.iter().map(|x| x * x).sum::<f64>()
}

/// One member of `S_{ε,k}` visited by the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub mask: u32,
    pub log_p: f64,
    pub coords: Vec<f64>,
}

/// Visits every `σ ∈ S_{ε,k}` in Gray order.
pub fn for_each_member(
    state: &TapState,
    spec: &ReducedSetSpec,
    mut visit: impl FnMut(u32, f64, &[f64]),
) -> Result<()> {
    spec.check(state)?;
    let n = state.n();
    if n > MAX_ENUM_SPINS {
        return Err(Error::Capability(format!(
            "enumeration over N = {n} spins exceeds {MAX_ENUM_SPINS}"
        )));
    }
    let pf = PFree::from_state(state);
    let c = centre(state);
    let r = spec.radius();
    let k = state.depth();
    let h = pf.fields().as_slice().to_vec();
    let phi: Vec<&[f64]> = state.phi.iter().map(|p| p.as_slice()).collect();
    let nf = n as f64;

    let full = |mask: u32, a: &mut [f64]| -> f64 {
        let s = gray::spins(mask, n);
        for (t, p) in phi.iter().enumerate() {
            a[t] = s.iter().zip(p.iter()).map(|(x, y)| x * y).sum::<f64>() / nf;
        }
        s.iter().zip(&h).map(|(x, y)| x * y).sum()
    };

    let mut a = vec![0.0; k];
    let mut field = full(0, &mut a);
    let log_norm = pf.log_normalizer();
    if in_set(&a, &c, r) {
        visit(0, field - log_norm, &a);
    }
    let mut steps: u64 = 0;
    gray::walk(
        n,
        || {},
        |f: Flip| {
            steps += 1;
            if steps.is_multiple_of(RESYNC_PERIOD) {
                field = full(f.mask, &mut a);
            } else {
                let d = -2.0 * f.old;
                field += d * h[f.site];
                for (t, p) in phi.iter().enumerate() {
                    a[t] += d * p[f.site] / nf;
                }
            }
            if in_set(&a, &c, r) {
                visit(f.mask, field - log_norm, &a);
            }
        },
    )
}

/// Every member of `S_{ε,k}`, in Gray order.
pub fn members(state: &TapState, spec: &ReducedSetSpec) -> Result<Vec<Member>> {
    let mut out = Vec::new();
    for_each_member(state, spec, |mask, log_p, a| {
        out.push(Member {
            mask,
            log_p,
            coords: a.to_vec(),
        })
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMass {
    /// `p_free(S_{ε,k})`, exact or estimated.
    pub mass: f64,
    /// Present for Monte Carlo estimates.
    pub stderr: Option<f64>,
    pub samples: Option<usize>,
    /// `1 − 2k exp(−Nε²/(2k²))`
    pub bound: f64,
}

impl SetMass {
    /// Lower tail bound holds (trivially when the bound is not positive).
    pub fn bound_holds(&self) -> bool {
        self.bound <= 0.0 || self.mass >= self.bound
    }
}

/// `p_free(S_{ε,k})`: exact for `N ≤ 24`, otherwise Monte Carlo with
/// `mc = Some((samples, seed))` drawing spins from the `Spins` domain.
pub fn reduced_set_mass(
    state: &TapState,
    spec: &ReducedSetSpec,
    mc: Option<(usize, u64)>,
) -> Result<SetMass> {
    spec.check(state)?;
    let bound = spec.mass_bound(state.n());
    if state.n() <= MAX_ENUM_SPINS {
        let mut lse = LogSumExp::new();
        for_each_member(state, spec, |_, lp, _| lse.add(lp))?;
        return Ok(SetMass {
            mass: lse.value().exp().min(1.0),
            stderr: None,
            samples: None,
            bound,
        });
    }
    let (samples, seed) = mc.ok_or_else(|| {
        Error::Capability(format!(
            "N = {} exceeds {MAX_ENUM_SPINS} and no Monte Carlo budget was given",
            state.n()
        ))
    })?;
    if samples < 2 {
        return Err(invalid("Monte Carlo mass needs at least 2 samples"));
    }
    let pf = PFree::from_state(state);
    let c = centre(state);
    let r = spec.radius();
    let mut rng = SeedRecord::new(seed, Domain::Spins, 0).rng();
    let mut hits = 0usize;
    for _ in 0..samples {
        let s = Vector::from_vec(pf.sample(&mut rng));
        if in_set(&state.phi_coordinates(&s), &c, r) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(SetMass {
        mass: p,
        stderr: Some((p * (1.0 - p) / (samples - 1) as f64).sqrt()),
        samples: Some(samples),
        bound,
    })
}

/// Monte Carlo mean of `Z / E_k Z` (or `Z² / E_k Z²`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// Sample mean of the ratio to the exact moment; one in expectation.
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    /// `|mean − 1| / stderr`
    pub fn z_score(&self) -> f64 {
        (self.mean - 1.0).abs() / self.stderr
    }

    pub fn agrees(&self, sigmas: f64) -> bool {
        (self.mean - 1.0).abs() <= sigmas * self.stderr
    }

    fn from_ratios(r: &[f64]) -> Self {
        let n = r.len() as f64;
        let mean = r.iter().copied().collect::<CompensatedSum>().value() / n;
        let var = r
            .iter()
            .map(|x| (x - mean).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / (n - 1.0);
        McEstimate {
            mean,
            stderr: (var / n).sqrt(),
            samples: r.len(),
        }
    }
}

/// First conditional moment `E_k Z(S_{ε,k})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstMoment {
    /// `(1/N) log E_k Z`, exact.
    pub log_per_n: f64,
    /// `(β²/4)(1 − Γ_k²)²`
    pub predicted: f64,
    /// `(β²/4)(1 − Σ⟨m⁽ᵏ⁺¹⁾, φ⁽ˢ⁾⟩²)²`
    pub centred: f64,
    /// `(1/N) log p_free(S)`
    pub log_mass_per_n: f64,
    /// `β²(ε + ε²/(2k))`, the half-width of the deterministic sandwich
    /// `|log_per_n − centred − log_mass_per_n| ≤ epsilon_term`.
    pub epsilon_term: f64,
}

impl FirstMoment {
    pub fn sandwich_holds(&self, slack: f64) -> bool {
        (self.log_per_n - self.centred - self.log_mass_per_n).abs() <= self.epsilon_term + slack
    }
}

/// Second conditional moment `E_k Z(S_{ε,k})²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    /// `(1/N) log E_k Z²`, exact.
    pub log_per_n: f64,
    /// `(β²/2)(1 − q)²`
    pub predicted: f64,
}

fn first_exponent(beta: f64, n: usize, a: &[f64]) -> f64 {
    0.25 * beta * beta * n as f64 * q_norm2(a).powi(2)
}

/// Exact first moment `Σ_S p_free(σ) exp[(β²N/4)(1 − Σ⟨σ,φ⁽ˢ⁾⟩²)²]`.
pub fn conditional_first_moment(state: &TapState, spec: &ReducedSetSpec) -> Result<FirstMoment> {
    let n = state.n();
    let beta = state.params.beta;
    let mut lse = LogSumExp::new();
    let mut mass = LogSumExp::new();
    for_each_member(state, spec, |_, lp, a| {
        lse.add(lp + first_exponent(beta, n, a));
        mass.add(lp);
    })?;
    let k = state.depth();
    let c = centre(state);
    let nf = n as f64;
    let eps = spec.epsilon;
    Ok(FirstMoment {
        log_per_n: lse.value() / nf,
        predicted: 0.25 * beta * beta * (1.0 - state.se.gamma2(k)).powi(2),
        centred: 0.25 * beta * beta * q_norm2(&c).powi(2),
        log_mass_per_n: mass.value() / nf,
        epsilon_term: beta * beta * (eps + eps * eps / (2.0 * k as f64)),
    })
}

/// `⟨σ, Q⁽ᵏ⁾τ⟩ = ⟨σ, τ⟩ − Σ a_s(σ) a_s(τ)`
pub fn q_overlap(a: &Member, b: &Member, n: usize) -> f64 {
    gray::overlap(a.mask, b.mask, n)
        - a.coords
            .iter()
            .zip(&b.coords)
            .map(|(x, y)| x * y)
            .sum::<f64>()
}

/// Exact second moment
/// `Σ_{S×S} p p exp[(β²N/4)(A_σ² + A_τ²) + (β²N/2)⟨σ, Qτ⟩²]`.
pub fn conditional_second_moment(state: &TapState, spec: &ReducedSetSpec) -> Result<SecondMoment> {
    let n = state.n();
    if n > MAX_PAIR_SPINS {
        return Err(Error::Capability(format!(
            "pair enumeration over N = {n} spins exceeds {MAX_PAIR_SPINS}"
        )));
    }
    let beta = state.params.beta;
    let ms = members(state, spec)?;
    let single: Vec<f64> = ms
        .iter()
        .map(|m| m.log_p + first_exponent(beta, n, &m.coords))
        .collect();
    let cross = 0.5 * beta * beta * n as f64;
    let mut lse = LogSumExp::new();
    for (i, a) in ms.iter().enumerate() {
        lse.add(2.0 * single[i] + cross * q_overlap(a, a, n).powi(2));
        for (j, b) in ms.iter().enumerate().skip(i + 1) {
            lse.add(
                std::f64::consts::LN_2 + single[i] + single[j] + cross * q_overlap(a, b, n).powi(2),
            );
        }
    }
    Ok(SecondMoment {
        log_per_n: lse.value() / n as f64,
        predicted: 0.5 * beta * beta * (1.0 - state.q).powi(2),
    })
}

/// `log Z(S)` for the coupling matrix `g`, i.e.
/// `log Σ_S p_free(σ) exp((β/√2) σᵀ g σ)`.
pub fn log_reduced_partition(state: &TapState, spec: &ReducedSetSpec, g: &Matrix) -> Result<f64> {
    spec.check(state)?;
    let n = state.n();
    if n > MAX_ENUM_SPINS {
        return Err(Error::Capability(format!(
            "enumeration over N = {n} spins exceeds {MAX_ENUM_SPINS}"
        )));
    }
    let mut inside = vec![false; 1 << n];
    let mut logp = vec![0.0; 1 << n];
    for_each_member(state, spec, |mask, lp, _| {
        inside[mask as usize] = true;
        logp[mask as usize] = lp;
    })?;
    Ok(log_partition_over(g, state.params.beta, &inside, &logp))
}

/// Gray walk with incremental quadratic form over the masks flagged in `inside`.
fn log_partition_over(g: &Matrix, beta: f64, inside: &[bool], logp: &[f64]) -> f64 {
    let n = g.dim();
    let sym = |i: usize, j: usize| 0.5 * (g[(i, j)] + g[(j, i)]);
    let coef = beta * std::f64::consts::FRAC_1_SQRT_2;
    // all-plus start: σᵀAσ = Σ A_ij, local fields f_i = Σ_{j≠i} A_ij
    let mut quad = g.as_slice().iter().sum::<f64>();
    let mut local: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| sym(i, j)).sum())
        .collect();
    let mut lse = LogSumExp::new();
    if inside[0] {
        lse.add(logp[0] + coef * quad);
    }
    gray::walk(
        n,
        || {},
        |f| {
            let i = f.site;
            quad -= 4.0 * f.old * local[i];
            for (j, l) in local.iter_mut().enumerate() {
                if j != i {
                    *l -= 2.0 * f.old * sym(j, i);
                }
            }
            if inside[f.mask as usize] {
                lse.add(logp[f.mask as usize] + coef * quad);
            }
        },
    )
    .expect("N below the walk ceiling");
    lse.value()
}

/// Monte Carlo estimates of `Z/E_k Z` and `Z²/E_k Z²` over `samples`
/// draws of `Q G Q`, streams `0..samples` of `seed` in the resample domain.
pub fn conditional_moments_mc(
    state: &TapState,
    spec: &ReducedSetSpec,
    first: &FirstMoment,
    second: Option<&SecondMoment>,
    samples: usize,
    seed: u64,
) -> Result<(McEstimate, Option<McEstimate>)> {
    spec.check(state)?;
    if samples < 2 {
        return Err(invalid("Monte Carlo needs at least 2 samples"));
    }
    let n = state.n();
    if n > MAX_ENUM_SPINS {
        return Err(Error::Capability(format!(
            "enumeration over N = {n} spins exceeds {MAX_ENUM_SPINS}"
        )));
    }
    let mut inside = vec![false; 1 << n];
    let mut logp = vec![0.0; 1 << n];
    for_each_member(state, spec, |mask, lp, _| {
        inside[mask as usize] = true;
        logp[mask as usize] = lp;
    })?;
    let nf = n as f64;
    let log_first = first.log_per_n * nf;
    let log_second = second.map(|s| s.log_per_n * nf);
    let logs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let g = conditional_resample(state, SeedRecord::new(seed, Domain::Resample, i as u64));
            log_partition_over(&g, state.params.beta, &inside, &logp)
        })
        .collect();
    let r1: Vec<f64> = logs.iter().map(|l| (l - log_first).exp()).collect();
    let r2 = log_second.map(|ls| {
        logs.iter()
            .map(|l| (2.0 * l - ls).exp())
            .collect::<Vec<_>>()
    });
    Ok((
        McEstimate::from_ratios(&r1),
        r2.as_deref().map(McEstimate::from_ratios),
    ))
}

/// Inputs identifying one moment computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<SeedRecord>,
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub h: f64,
    pub q: f64,
    pub quad_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub provenance: Provenance,
    pub log_first_moment_per_n: f64,
    pub predicted_first: f64,
    pub first_centred: f64,
    pub first_epsilon_term: f64,
    pub log_second_moment_per_n: Option<f64>,
    pub predicted_second: f64,
    pub pfree_mass: f64,
    pub mass_bound: f64,
    pub mc_first: Option<McEstimate>,
    pub mc_second: Option<McEstimate>,
}

impl MomentReport {
    /// `E_k Z² ≥ (E_k Z)²`, when the second moment was computed.
    pub fn jensen_holds(&self) -> Option<bool> {
        self.log_second_moment_per_n
            .map(|s| s >= 2.0 * self.log_first_moment_per_n)
    }
}

/// Exact first moment, exact second moment when `N ≤ 14`, optional
/// Monte Carlo cross-checks, collected into one report.
pub fn moment_report(
    state: &TapState,
    spec: &ReducedSetSpec,
    mc: Option<(usize, u64)>,
    quad_order: usize,
) -> Result<MomentReport> {
    let first = conditional_first_moment(state, spec)?;
    let second = if state.n() <= MAX_PAIR_SPINS {
        Some(conditional_second_moment(state, spec)?)
    } else {
        None
    };
    let mass = reduced_set_mass(state, spec, None)?;
    let (mc_first, mc_second) = match mc {
        Some((samples, seed)) => {
            let (a, b) =
                conditional_moments_mc(state, spec, &first, second.as_ref(), samples, seed)?;
            (Some(a), b)
        }
        None => (None, None),
    };
    Ok(MomentReport {
        provenance: Provenance {
            seed: state.disorder.seed(),
            n: state.n(),
            k: state.depth(),
            epsilon: spec.epsilon,
            beta: state.params.beta,
            h: state.params.h,
            q: state.q,
            quad_order,
        },
        log_first_moment_per_n: first.log_per_n,
        predicted_first: first.predicted,
        first_centred: first.centred,
        first_epsilon_term: first.epsilon_term,
        log_second_moment_per_n: second.map(|s| s.log_per_n),
        predicted_second: 0.5 * state.params.beta.powi(2) * (1.0 - state.q).powi(2),
        pfree_mass: mass.mass,
        mass_bound: mass.bound,
        mc_first,
        mc_second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::default_rule;
    use crate::scalar::{solve_q, ModelParams};
    use crate::tap::{sample_disorder, tap_iterate};

    fn state(n: usize, beta: f64, h: f64, k: usize, stream: u64) -> TapState {
        let params = ModelParams::new(beta, h).unwrap();
        let q = solve_q(&params, 1e-14, default_rule()).unwrap().q;
        let d = sample_disorder(n, SeedRecord::new(21, Domain::Disorder, stream)).unwrap();
        tap_iterate(d, &params, q, k, default_rule()).unwrap()
    }

    fn all_spins(n: usize) -> impl Iterator<Item = (u32, Vec<f64>)> {
        (0..1u32 << n).map(move |m| (m, gray::spins(m, n)))
    }

    #[test]
    fn pfree_normalizes_and_has_mean_m() {
        let st = state(10, 0.5, 0.4, 2, 0);
        let pf = PFree::from_state(&st);
        let total: f64 = all_spins(10).map(|(_, s)| pf.prob(&s)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean = pf.mean();
        for i in 0..10 {
            let m: f64 = all_spins(10).map(|(_, s)| pf.prob(&s) * s[i]).sum();
            assert!((m - mean[i]).abs() < 1e-12);
            assert_eq!(mean[i], st.last_m()[i]);
        }
    }

    #[test]
    fn zero_field_is_uniform() {
        let pf = PFree::new(Vector::zeros(6));
        assert!((pf.prob(&[1.0; 6]) - 2f64.powi(-6)).abs() < 1e-16);
    }

    #[test]
    fn sampler_matches_mean() {
        let pf = PFree::new(Vector::from_vec(vec![0.3, -1.2, 0.0, 2.0]));
        let mut rng = SeedRecord::new(4, Domain::Spins, 0).rng();
        let n = 200_000;
        let mut acc = [0.0; 4];
        for _ in 0..n {
            for (a, s) in acc.iter_mut().zip(pf.sample(&mut rng)) {
                *a += s;
            }
        }
        for (a, m) in acc.iter().zip(pf.mean().iter()) {
            assert!((a / n as f64 - m).abs() < 5.0 * (1.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn walk_matches_direct_membership() {
        let st = state(12, 0.5, 0.4, 2, 1);
        let spec = ReducedSetSpec::new(0.6, 2).unwrap();
        let ms = members(&st, &spec).unwrap();
        let pf = PFree::from_state(&st);
        let c = centre(&st);
        let direct: Vec<u32> = all_spins(12)
            .filter(|(_, s)| {
                in_set(
                    &st.phi_coordinates(&Vector::from_vec(s.clone())),
                    &c,
                    spec.radius(),
                )
            })
            .map(|(m, _)| m)
            .collect();
        let mut walked: Vec<u32> = ms.iter().map(|m| m.mask).collect();
        walked.sort_unstable();
        assert_eq!(walked, direct);
        for m in &ms {
            assert!((m.log_p - pf.log_prob_mask(m.mask)).abs() < 1e-12);
        }
    }

    #[test]
    fn large_epsilon_covers_everything() {
        let st = state(12, 0.5, 0.4, 2, 2);
        let spec = ReducedSetSpec::new(4.0, 2).unwrap();
        let m = reduced_set_mass(&st, &spec, None).unwrap();
        assert!((m.mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pivot_identity_on_spins() {
        let st = state(10, 0.5, 0.4, 3, 3);
        for (_, s) in all_spins(10).step_by(37) {
            let v = Vector::from_vec(s);
            let qs = st.apply_q(&v);
            let a = st.phi_coordinates(&v);
            assert!((qs.dot(&qs) - q_norm2(&a)).abs() < 1e-13);
        }
    }

    #[test]
    fn moments_without_coupling() {
        let st = state(10, 0.0, 0.7, 1, 4);
        let spec = ReducedSetSpec::new(0.3, 1).unwrap();
        let mass = reduced_set_mass(&st, &spec, None).unwrap().mass;
        let f = conditional_first_moment(&st, &spec).unwrap();
        let s = conditional_second_moment(&st, &spec).unwrap();
        assert!((f.log_per_n * 10.0 - mass.ln()).abs() < 1e-12);
        assert!((s.log_per_n * 10.0 - 2.0 * mass.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_space_matches_direct_space() {
        let st = state(10, 0.9, 0.3, 2, 5);
        let spec = ReducedSetSpec::new(0.8, 2).unwrap();
        let ms = members(&st, &spec).unwrap();
        let b2n = 0.81 * 10.0;
        let mut first = 0.0;
        let mut second = 0.0;
        for a in &ms {
            let wa = a.log_p.exp() * (0.25 * b2n * q_norm2(&a.coords).powi(2)).exp();
            first += wa;
            for b in &ms {
                let wb = b.log_p.exp() * (0.25 * b2n * q_norm2(&b.coords).powi(2)).exp();
                second += wa * wb * (0.5 * b2n * q_overlap(a, b, 10).powi(2)).exp();
            }
        }
        let f = conditional_first_moment(&st, &spec).unwrap();
        let s = conditional_second_moment(&st, &spec).unwrap();
        assert!((f.log_per_n * 10.0 - first.ln()).abs() < 1e-12);
        assert!((s.log_per_n * 10.0 - second.ln()).abs() < 1e-12);
        assert!(s.log_per_n >= 2.0 * f.log_per_n);
    }

    #[test]
    fn first_moment_sandwich() {
        for stream in 0..4 {
            let st = state(14, 0.5, 0.4, 2, 10 + stream);
            let spec = ReducedSetSpec::new(0.5, 2).unwrap();
            let f = conditional_first_moment(&st, &spec).unwrap();
            assert!(f.sandwich_holds(1e-12), "{f:?}");
        }
    }

    #[test]
    fn reduced_partition_walk_matches_brute_force() {
        let st = state(8, 0.7, 0.2, 2, 6);
        let spec = ReducedSetSpec::new(0.9, 2).unwrap();
        let g = conditional_resample(&st, SeedRecord::new(1, Domain::Resample, 3));
        let pf = PFree::from_state(&st);
        let c = centre(&st);
        let mut lse = LogSumExp::new();
        for (_, s) in all_spins(8) {
            let v = Vector::from_vec(s.clone());
            if in_set(&st.phi_coordinates(&v), &c, spec.radius()) {
                let quad: f64 = (0..8)
                    .flat_map(|i| (0..8).map(move |j| (i, j)))
                    .map(|(i, j)| s[i] * g[(i, j)] * s[j])
                    .sum();
                lse.add(pf.log_prob(&s) + 0.7 * std::f64::consts::FRAC_1_SQRT_2 * quad);
            }
        }
        let got = log_reduced_partition(&st, &spec, &g).unwrap();
        assert!((got - lse.value()).abs() < 1e-11);
    }

    #[test]
    fn depth_mismatch_and_capability_errors() {
        let st = state(12, 0.5, 0.4, 2, 7);
        assert!(conditional_first_moment(&st, &ReducedSetSpec::new(0.5, 3).unwrap()).is_err());
        let big = state(26, 0.5, 0.4, 2, 8);
        let spec = ReducedSetSpec::new(0.5, 2).unwrap();
        assert!(matches!(
            reduced_set_mass(&big, &spec, None),
            Err(Error::Capability(_))
        ));
        assert!(reduced_set_mass(&big, &spec, Some((500, 1))).is_ok());
        let mid = state(16, 0.5, 0.4, 2, 9);
        assert!(matches!(
            conditional_second_moment(&mid, &spec),
            Err(Error::Capability(_))
        ));
        assert!(ReducedSetSpec::new(0.0, 1).is_err());
        assert!(ReducedSetSpec::new(f64::NAN, 1).is_err());
    }
}
