//! The iterative TAP construction on a sampled disorder.
//!
//! Starting from `φ⁽¹⁾ = 1`, `m⁽¹⁾ = √q 1`, `g⁽¹⁾ = g`, each step computes
//! `ζ⁽ᵏ⁾ = ḡ⁽ᵏ⁾ φ⁽ᵏ⁾`, the cavity field
//! `h⁽ᵏ⁺¹⁾ = h 1 + β Σ_{s<k} γ_s ζ⁽ˢ⁾ + β √(q − Γ²_{k−1}) ζ⁽ᵏ⁾`,
//! `m⁽ᵏ⁺¹⁾ = tanh h⁽ᵏ⁺¹⁾`, the rank-two correction
//! `g⁽ᵏ⁺¹⁾ = g⁽ᵏ⁾ − ρ⁽ᵏ⁾` and the next direction `φ⁽ᵏ⁺¹⁾` by Gram–Schmidt.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::quad::{expect_affine, QuadratureRule};
use crate::rng::{standard_normal, Domain, SeedRecord};
use crate::scalar::{state_evolution, ModelParams, StateEvolutionTable, Termination};
use crate::summation::log_cosh;

pub const MIN_SPINS: usize = 2;
pub const MAX_SPINS: usize = 10_000;
/// Smallest admissible Gram–Schmidt residual norm.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Coupling matrix: i.i.d. `N(0, 1/N)` off the diagonal, zero on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Disorder {
    g: Matrix,
    seed: Option<SeedRecord>,
}

impl Disorder {
    /// Wraps an explicit coupling matrix; the diagonal must vanish.
    pub fn from_matrix(g: Matrix) -> Result<Self> {
        if g.dim() == 0 {
            return Err(invalid("empty coupling matrix"));
        }
        if (0..g.dim()).any(|i| g[(i, i)] != 0.0) {
            return Err(invalid("coupling matrix must have a zero diagonal"));
        }
        Ok(Disorder { g, seed: None })
    }

    pub fn n(&self) -> usize {
        self.g.dim()
    }

    pub fn couplings(&self) -> &Matrix {
        &self.g
    }

    pub fn seed(&self) -> Option<SeedRecord> {
        self.seed
    }

    /// `ḡ = (g + gᵀ)/√2`
    pub fn symmetrized(&self) -> Matrix {
        self.g.symmetrized()
    }
}

/// Draws a disorder of size `n` from the stream `seed`.
pub fn sample_disorder(n: usize, seed: SeedRecord) -> Result<Disorder> {
    if !(MIN_SPINS..=MAX_SPINS).contains(&n) {
        return Err(invalid(format!(
            "N = {n} outside {MIN_SPINS}..={MAX_SPINS}"
        )));
    }
    let mut rng = seed.rng();
    let sd = 1.0 / (n as f64).sqrt();
    let mut g = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                g[(i, j)] = sd * standard_normal(&mut rng);
            }
        }
    }
    Ok(Disorder {
        g,
        seed: Some(seed),
    })
}

/// One realization of the iteration, stopped at depth `k`.
///
/// Holds `φ⁽¹..ᵏ⁾`, `m⁽¹..ᵏ⁺¹⁾`, `ζ⁽¹..ᵏ⁾`, `h⁽ᵏ⁺¹⁾` and `g⁽ᵏ⁺¹⁾`, plus the
/// vectors `g⁽ˢ⁾φ⁽ˢ⁾` and `(g⁽ˢ⁾)ᵀφ⁽ˢ⁾` from which every `ρ⁽ˢ⁾` can be
/// rebuilt. Vectors are stored zero-based: `phi[s - 1]` is `φ⁽ˢ⁾`.
#[derive(Debug, Clone)]
pub struct TapState {
    pub params: ModelParams,
    pub q: f64,
    pub disorder: Disorder,
    pub phi: Vec<Vector>,
    pub m: Vec<Vector>,
    pub zeta: Vec<Vector>,
    pub g_phi: Vec<Vector>,
    pub gt_phi: Vec<Vector>,
    pub hfield: Vector,
    pub gmod: Matrix,
    pub se: StateEvolutionTable,
}

impl TapState {
    /// Depth `k` reached.
    pub fn depth(&self) -> usize {
        self.phi.len()
    }

    pub fn n(&self) -> usize {
        self.disorder.n()
    }

    /// `m⁽ᵏ⁺¹⁾`, the magnetization the reduced measure is centred on.
    pub fn last_m(&self) -> &Vector {
        self.m.last().expect("state has at least m(1)")
    }

    /// `ρ⁽ˢ⁾ = g⁽ˢ⁾φ⁽ˢ⁾ ⊗ φ⁽ˢ⁾ + φ⁽ˢ⁾ ⊗ (g⁽ˢ⁾)ᵀφ⁽ˢ⁾ − ⟨g⁽ˢ⁾φ⁽ˢ⁾, φ⁽ˢ⁾⟩ φ⁽ˢ⁾ ⊗ φ⁽ˢ⁾`
    pub fn rho(&self, s: usize) -> Matrix {
        let (u, v, phi) = (&self.g_phi[s - 1], &self.gt_phi[s - 1], &self.phi[s - 1]);
        let mut r = Matrix::zeros(self.n());
        r.add_tensor(1.0, u, phi);
        r.add_tensor(1.0, phi, v);
        r.add_tensor(-u.dot(phi), phi, phi);
        r
    }

    /// `ρ̄⁽ˢ⁾ = ζ⁽ˢ⁾ ⊗ φ⁽ˢ⁾ + φ⁽ˢ⁾ ⊗ ζ⁽ˢ⁾ − ⟨ζ⁽ˢ⁾, φ⁽ˢ⁾⟩ φ⁽ˢ⁾ ⊗ φ⁽ˢ⁾`
    pub fn rho_bar(&self, s: usize) -> Matrix {
        let (zeta, phi) = (&self.zeta[s - 1], &self.phi[s - 1]);
        let mut r = Matrix::zeros(self.n());
        r.add_tensor(1.0, zeta, phi);
        r.add_tensor(1.0, phi, zeta);
        r.add_tensor(-zeta.dot(phi), phi, phi);
        r
    }

    /// `g⁽ˢ⁾ = g − Σ_{r<s} ρ⁽ʳ⁾`, rebuilt from the stored rank-one data.
    pub fn modified_at(&self, s: usize) -> Matrix {
        let mut g = self.disorder.couplings().clone();
        for r in 1..s {
            g = g.sub(&self.rho(r));
        }
        g
    }

    /// `P⁽ᵏ⁾ = Σ_{s≤k} φ⁽ˢ⁾ ⊗ φ⁽ˢ⁾`
    pub fn projection_p(&self) -> Matrix {
        let mut p = Matrix::zeros(self.n());
        for phi in &self.phi {
            p.add_tensor(1.0, phi, phi);
        }
        p
    }

    /// `Q⁽ᵏ⁾ = 1 − P⁽ᵏ⁾`
    pub fn projection_q(&self) -> Matrix {
        Matrix::identity(self.n()).sub(&self.projection_p())
    }

    /// `⟨x, φ⁽ˢ⁾⟩` for every `s ≤ k`.
    pub fn phi_coordinates(&self, x: &Vector) -> Vec<f64> {
        self.phi.iter().map(|p| x.dot(p)).collect()
    }

    /// `Q⁽ᵏ⁾ x`
    pub fn apply_q(&self, x: &Vector) -> Vector {
        let mut y = x.clone();
        for p in &self.phi {
            y.axpy(-x.dot(p), p);
        }
        y
    }
}

fn gram_schmidt(m: &Vector, basis: &[Vector], step: usize) -> Result<Vector> {
    let mut v = m.clone();
    for p in basis {
        v.axpy(-m.dot(p), p);
    }
    let norm = v.norm();
    if norm.is_nan() || norm < DEGENERACY_TOL {
        return Err(Error::Degeneracy { step, norm });
    }
    // second pass
    let snapshot = v.clone();
    for p in basis {
        v.axpy(-snapshot.dot(p), p);
    }
    let norm = v.norm();
    v.scale(1.0 / norm);
    Ok(v)
}

/// Runs the iteration to depth `min(depth, state-evolution depth)`.
///
/// `q` must solve the fixed-point equation for `params`; the
/// state-evolution table is computed with `rule`.
pub fn tap_iterate(
    disorder: Disorder,
    params: &ModelParams,
    q: f64,
    depth: usize,
    rule: &QuadratureRule,
) -> Result<TapState> {
    let n = disorder.n();
    if depth == 0 || depth >= n {
        return Err(invalid(format!(
            "depth K = {depth} must satisfy 1 <= K < N = {n}"
        )));
    }
    let se = state_evolution(params, q, depth, rule)?;
    let depth = depth.min(se.depth());
    let beta = params.beta;

    let mut phi = vec![Vector::ones(n)];
    let mut m = vec![Vector::constant(n, q.sqrt())];
    let mut zeta: Vec<Vector> = Vec::with_capacity(depth);
    let mut g_phi = Vec::with_capacity(depth);
    let mut gt_phi = Vec::with_capacity(depth);
    let mut gcur = disorder.couplings().clone();
    let mut hfield = Vector::constant(n, params.h);

    for k in 1..=depth {
        let p = &phi[k - 1];
        let u = gcur.mul_vec(p);
        let v = gcur.tmul_vec(p);
        let c = u.dot(p);
        let mut z = u.clone();
        z.axpy(1.0, &v);
        z.scale(std::f64::consts::FRAC_1_SQRT_2);

        let mut field = Vector::constant(n, params.h);
        for (s, zs) in zeta.iter().enumerate() {
            field.axpy(beta * se.gamma(s + 1), zs);
        }
        let rem = (q - se.gamma2(k - 1)).max(0.0);
        field.axpy(beta * rem.sqrt(), &z);
        let mk = field.map(f64::tanh);

        gcur.add_tensor(-1.0, &u, p);
        gcur.add_tensor(-1.0, p, &v);
        gcur.add_tensor(c, p, p);

        zeta.push(z);
        g_phi.push(u);
        gt_phi.push(v);
        if k < depth {
            let next = gram_schmidt(&mk, &phi, k + 1)?;
            phi.push(next);
        }
        m.push(mk);
        hfield = field;
    }

    Ok(TapState {
        params: *params,
        q,
        disorder,
        phi,
        m,
        zeta,
        g_phi,
        gt_phi,
        hfield,
        gmod: gcur,
        se,
    })
}

/// Largest violations of the structural invariants of a [`TapState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// `max |⟨φ⁽ˢ⁾, φ⁽ᵗ⁾⟩ − δ_st|`
    pub orthonormality: f64,
    /// `max_s max(|g⁽ᵏ⁺¹⁾φ⁽ˢ⁾|∞, |(g⁽ᵏ⁺¹⁾)ᵀφ⁽ˢ⁾|∞)`
    pub annihilation: f64,
    /// `max |g − g⁽ᵏ⁺¹⁾ − Σ ρ⁽ˢ⁾|`
    pub reconstruction: f64,
    /// `max |m⁽ᵏ⁺¹⁾ − tanh h⁽ᵏ⁺¹⁾|`
    pub magnetization: f64,
    /// `max_s ‖m⁽ˢ⁾‖² ` (must not exceed one)
    pub max_m_norm2: f64,
}

impl StructureReport {
    pub fn worst(&self) -> f64 {
        self.orthonormality
            .max(self.annihilation)
            .max(self.reconstruction)
            .max(self.magnetization)
    }
}

pub fn check_structure(state: &TapState) -> StructureReport {
    let k = state.depth();
    let mut orth = 0.0_f64;
    for s in 0..k {
        for t in 0..k {
            let target = if s == t { 1.0 } else { 0.0 };
            orth = orth.max((state.phi[s].dot(&state.phi[t]) - target).abs());
        }
    }
    let mut ann = 0.0_f64;
    for p in &state.phi {
        ann = ann
            .max(state.gmod.mul_vec(p).max_abs())
            .max(state.gmod.tmul_vec(p).max_abs());
    }
    let mut rebuilt = state.gmod.clone();
    for s in 1..=k {
        rebuilt = rebuilt.add(&state.rho(s));
    }
    let recon = rebuilt.max_abs_diff(state.disorder.couplings());
    let tanh_h = state.hfield.map(f64::tanh);
    let mut mag = 0.0_f64;
    for i in 0..state.n() {
        mag = mag.max((tanh_h[i] - state.last_m()[i]).abs());
    }
    let max_m_norm2 = state.m.iter().map(|m| m.dot(m)).fold(0.0, f64::max);
    StructureReport {
        orthonormality: orth,
        annihilation: ann,
        reconstruction: recon,
        magnetization: mag,
        max_m_norm2,
    }
}

/// One overlap deviation from its state-evolution prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapDeviation {
    /// Magnetization index `j` (one-based).
    pub j: usize,
    /// Partner index `s < j`.
    pub s: usize,
    /// `|⟨m⁽ʲ⁾, φ⁽ˢ⁾⟩ − γ_s|`, absent when `φ⁽ˢ⁾` was not built.
    pub phi: Option<f64>,
    /// `|⟨m⁽ʲ⁾, m⁽ˢ⁾⟩ − α_s|`
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub deviations: Vec<OverlapDeviation>,
    /// `|⟨m⁽ʲ⁾, m⁽ʲ⁾⟩ − q|` for `j = 1..=k+1`
    pub self_overlap: Vec<f64>,
    pub max_phi: f64,
    pub max_m: f64,
    pub max_self: f64,
}

/// Compares the realized overlaps with `γ_s`, `α_s` and `q`.
pub fn verify_concentration(state: &TapState) -> ConcentrationReport {
    let mut deviations = Vec::new();
    let k = state.depth();
    for j in 2..=k + 1 {
        for s in 1..j {
            let mj = &state.m[j - 1];
            let phi = (s <= k).then(|| (mj.dot(&state.phi[s - 1]) - state.se.gamma(s)).abs());
            let m = (mj.dot(&state.m[s - 1]) - state.se.alpha(s)).abs();
            deviations.push(OverlapDeviation { j, s, phi, m });
        }
    }
    let self_overlap: Vec<f64> = state.m.iter().map(|m| (m.dot(m) - state.q).abs()).collect();
    let max_phi = deviations.iter().filter_map(|d| d.phi).fold(0.0, f64::max);
    let max_m = deviations.iter().map(|d| d.m).fold(0.0, f64::max);
    let max_self = self_overlap.iter().copied().fold(0.0, f64::max);
    ConcentrationReport {
        deviations,
        self_overlap,
        max_phi,
        max_m,
        max_self,
    }
}

/// A fresh draw from the conditional law of `g⁽ᵏ⁺¹⁾` given the construction:
/// `Q⁽ᵏ⁾ G Q⁽ᵏ⁾` with `G` i.i.d. `N(0, 1/N)` (diagonal included).
pub fn conditional_resample(state: &TapState, seed: SeedRecord) -> Matrix {
    let n = state.n();
    let mut rng = seed.rng();
    let sd = 1.0 / (n as f64).sqrt();
    let data: Vec<f64> = (0..n * n).map(|_| sd * standard_normal(&mut rng)).collect();
    let g = Matrix::from_row_major(n, data);
    project_both_sides(&g, &state.phi)
}

/// `Q G Q` for `Q` the projector onto the orthogonal complement of `basis`.
pub fn project_both_sides(g: &Matrix, basis: &[Vector]) -> Matrix {
    let gphi: Vec<Vector> = basis.iter().map(|p| g.mul_vec(p)).collect();
    let gtphi: Vec<Vector> = basis.iter().map(|p| g.tmul_vec(p)).collect();
    let mut out = g.clone();
    for (s, p) in basis.iter().enumerate() {
        out.add_tensor(-1.0, p, &gtphi[s]);
        out.add_tensor(-1.0, &gphi[s], p);
        for (t, pt) in basis.iter().enumerate() {
            out.add_tensor(p.dot(&gphi[t]), p, pt);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionDeviation {
    pub name: String,
    pub empirical: f64,
    pub expected: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityReport {
    /// `N⁻¹ Σ f(hᵢ⁽ᵏ⁺¹⁾)` against `E f(β√q Z + h)`
    pub test_functions: Vec<TestFunctionDeviation>,
    /// `⟨φ⁽ˢ⁾, ζ⁽ˢ⁾⟩` for `s = 1..=k`
    pub phi_zeta: Vec<f64>,
    /// `‖ζ⁽ˢ⁾‖` for `s = 1..=k`
    pub zeta_norms: Vec<f64>,
}

/// Empirical cavity-field statistics of one realization.
pub fn cavity_statistics(state: &TapState, rule: &QuadratureRule) -> Result<CavityReport> {
    let s = state.params.field_scale(state.q);
    let h = state.params.h;
    type TestFn = (&'static str, fn(f64) -> f64);
    let fns: [TestFn; 4] = [
        ("tanh", f64::tanh),
        ("tanh2", |x| x.tanh().powi(2)),
        ("log_cosh", log_cosh),
        ("sech2", |x| (1.0 / x.cosh()).powi(2)),
    ];
    let mut test_functions = Vec::new();
    for (name, f) in fns {
        let empirical = state.hfield.iter().map(|&x| f(x)).sum::<f64>() / state.n() as f64;
        let expected = expect_affine(f, s, h, rule)?;
        test_functions.push(TestFunctionDeviation {
            name: name.to_string(),
            empirical,
            expected,
            deviation: (empirical - expected).abs(),
        });
    }
    Ok(CavityReport {
        test_functions,
        phi_zeta: state
            .phi
            .iter()
            .zip(&state.zeta)
            .map(|(p, z)| p.dot(z))
            .collect(),
        zeta_norms: state.zeta.iter().map(Vector::norm).collect(),
    })
}

/// `⟨φ⁽ᵏ⁾, ζ⁽ᵏ⁾⟩` over `count` independent disorders (streams
/// `0..count` of `seed`), computed in parallel and returned in stream order.
pub fn phi_zeta_samples(
    n: usize,
    params: &ModelParams,
    q: f64,
    depth: usize,
    seed: u64,
    count: usize,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let d = sample_disorder(n, SeedRecord::new(seed, Domain::Disorder, i as u64))?;
            let st = tap_iterate(d, params, q, depth, rule)?;
            let k = st.depth();
            Ok(st.phi[k - 1].dot(&st.zeta[k - 1]))
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"SKTAPST1";

/// Writes the state as a little-endian binary dump: magic, header
/// (`N`, `k`, seed, stream, `β`, `h`, `q`), the state-evolution table, then
/// `g`, `g⁽ᵏ⁺¹⁾`, `φ`, `m`, `ζ`, `gφ`, `gᵀφ`, `h⁽ᵏ⁺¹⁾` as 64-bit floats.
pub fn write_state<W: Write>(state: &TapState, mut w: W) -> Result<()> {
    let n = state.n();
    let k = state.depth();
    let seed = state
        .disorder
        .seed()
        .unwrap_or(SeedRecord { seed: 0, stream: 0 });
    w.write_all(MAGIC)?;
    w.write_u64::<LittleEndian>(n as u64)?;
    w.write_u64::<LittleEndian>(k as u64)?;
    w.write_u64::<LittleEndian>(seed.seed)?;
    w.write_u64::<LittleEndian>(seed.stream)?;
    w.write_u8(state.disorder.seed().is_some() as u8)?;
    for x in [state.params.beta, state.params.h, state.q] {
        w.write_f64::<LittleEndian>(x)?;
    }
    let se = &state.se;
    w.write_u64::<LittleEndian>(se.requested as u64)?;
    w.write_u64::<LittleEndian>(se.depth() as u64)?;
    w.write_u8(match se.termination {
        Termination::Complete => 0,
        Termination::RemainderUnderflow => 1,
        Termination::RoundingSaturation => 2,
    })?;
    for list in [&se.alpha, &se.gamma, &se.gamma2cum] {
        write_floats(&mut w, list)?;
    }
    write_floats(&mut w, state.disorder.couplings().as_slice())?;
    write_floats(&mut w, state.gmod.as_slice())?;
    for group in [
        &state.phi,
        &state.m,
        &state.zeta,
        &state.g_phi,
        &state.gt_phi,
    ] {
        for v in group.iter() {
            write_floats(&mut w, v.as_slice())?;
        }
    }
    write_floats(&mut w, state.hfield.as_slice())?;
    Ok(())
}

fn write_floats<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_floats<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

fn read_vectors<R: Read>(r: &mut R, count: usize, n: usize) -> Result<Vec<Vector>> {
    (0..count)
        .map(|_| read_floats(r, n).map(Vector::from_vec))
        .collect()
}

/// Reads a dump produced by [`write_state`].
pub fn read_state<R: Read>(mut r: R) -> Result<TapState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a TAP state dump".into()));
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let k = r.read_u64::<LittleEndian>()? as usize;
    let seed = r.read_u64::<LittleEndian>()?;
    let stream = r.read_u64::<LittleEndian>()?;
    let has_seed = r.read_u8()? == 1;
    if n == 0 || n > MAX_SPINS || k == 0 || k >= n {
        return Err(Error::Format(format!("bad header N = {n}, k = {k}")));
    }
    let beta = r.read_f64::<LittleEndian>()?;
    let h = r.read_f64::<LittleEndian>()?;
    let q = r.read_f64::<LittleEndian>()?;
    let params = ModelParams::new(beta, h).map_err(|e| Error::Format(e.to_string()))?;
    let requested = r.read_u64::<LittleEndian>()? as usize;
    let se_depth = r.read_u64::<LittleEndian>()? as usize;
    let termination = match r.read_u8()? {
        0 => Termination::Complete,
        1 => Termination::RemainderUnderflow,
        2 => Termination::RoundingSaturation,
        t => return Err(Error::Format(format!("bad termination tag {t}"))),
    };
    if se_depth < k {
        return Err(Error::Format(
            "state-evolution table shorter than depth".into(),
        ));
    }
    let se = StateEvolutionTable {
        requested,
        alpha: read_floats(&mut r, se_depth)?,
        gamma: read_floats(&mut r, se_depth)?,
        gamma2cum: read_floats(&mut r, se_depth)?,
        q,
        termination,
    };
    let g = Matrix::from_row_major(n, read_floats(&mut r, n * n)?);
    let gmod = Matrix::from_row_major(n, read_floats(&mut r, n * n)?);
    let phi = read_vectors(&mut r, k, n)?;
    let m = read_vectors(&mut r, k + 1, n)?;
    let zeta = read_vectors(&mut r, k, n)?;
    let g_phi = read_vectors(&mut r, k, n)?;
    let gt_phi = read_vectors(&mut r, k, n)?;
    let hfield = Vector::from_vec(read_floats(&mut r, n)?);
    let mut disorder = Disorder::from_matrix(g).map_err(|e| Error::Format(e.to_string()))?;
    if has_seed {
        disorder.seed = Some(SeedRecord { seed, stream });
    }
    Ok(TapState {
        params,
        q,
        disorder,
        phi,
        m,
        zeta,
        g_phi,
        gt_phi,
        hfield,
        gmod,
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::default_rule;
    use crate::scalar::solve_q;

    fn state(n: usize, beta: f64, h: f64, k: usize, stream: u64) -> TapState {
        let params = ModelParams::new(beta, h).unwrap();
        let q = solve_q(&params, 1e-14, default_rule()).unwrap().q;
        let d = sample_disorder(n, SeedRecord::new(11, Domain::Disorder, stream)).unwrap();
        tap_iterate(d, &params, q, k, default_rule()).unwrap()
    }

    #[test]
    fn disorder_has_zero_diagonal_and_is_reproducible() {
        let s = SeedRecord::new(3, Domain::Disorder, 0);
        let a = sample_disorder(40, s).unwrap();
        let b = sample_disorder(40, s).unwrap();
        assert_eq!(a, b);
        assert!((0..40).all(|i| a.couplings()[(i, i)] == 0.0));
        assert!(sample_disorder(1, s).is_err());
        assert!(sample_disorder(10_001, s).is_err());
    }

    #[test]
    fn from_matrix_rejects_nonzero_diagonal() {
        assert!(Disorder::from_matrix(Matrix::identity(3)).is_err());
        assert!(Disorder::from_matrix(Matrix::zeros(1)).is_ok());
    }

    #[test]
    fn first_step_starts_from_constant_vectors() {
        let st = state(50, 0.5, 0.4, 1, 0);
        assert_eq!(st.phi[0], Vector::ones(50));
        assert_eq!(st.phi[0].norm(), 1.0);
        assert_eq!(st.m[0], Vector::constant(50, st.q.sqrt()));
    }

    #[test]
    fn structure_holds() {
        let st = state(120, 0.5, 0.4, 4, 1);
        assert_eq!(st.depth(), 4);
        let r = check_structure(&st);
        assert!(r.worst() < 1e-10, "{r:?}");
        assert!(r.max_m_norm2 <= 1.0);
        assert_eq!(r.magnetization, 0.0);
    }

    #[test]
    fn symmetrized_update_matches_rho() {
        let st = state(60, 0.6, 0.3, 3, 2);
        for s in 1..=3 {
            let rho = st.rho(s);
            let sym = rho.symmetrized();
            assert!(sym.max_abs_diff(&st.rho_bar(s)) < 1e-12);
        }
    }

    #[test]
    fn stored_zeta_matches_recomputed_products() {
        let st = state(60, 0.6, 0.3, 3, 3);
        for s in 1..=3 {
            let gs = st.modified_at(s).symmetrized();
            let z = gs.mul_vec(&st.phi[s - 1]);
            for i in 0..st.n() {
                assert!((z[i] - st.zeta[s - 1][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn earlier_modified_matrices_annihilate_earlier_directions() {
        let st = state(80, 0.5, 0.4, 4, 4);
        for k in 2..=4 {
            let gk = st.modified_at(k);
            for s in 1..k {
                assert!(gk.mul_vec(&st.phi[s - 1]).max_abs() < 1e-10);
                assert!(gk.tmul_vec(&st.phi[s - 1]).max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projections_are_complementary() {
        let st = state(40, 0.5, 0.4, 3, 5);
        let p = st.projection_p();
        let q = st.projection_q();
        let n = st.n();
        assert!(p.add(&q).max_abs_diff(&Matrix::identity(n)) < 1e-12);
        assert!(p.matmul(&p).max_abs_diff(&p) < 1e-10);
        assert!(q.matmul(&q).max_abs_diff(&q) < 1e-10);
        assert!(p.max_abs_diff(&p.transpose()) < 1e-15);
        let x = Vector::from_vec((0..n).map(|i| (i as f64).sin()).collect());
        let a = st.apply_q(&x);
        let b = q.mul_vec(&x);
        for i in 0..n {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_truncates_to_depth_one() {
        let st = state(30, 0.0, 0.5, 3, 6);
        assert_eq!(st.depth(), 1);
        assert!(st.hfield.iter().all(|&x| x == 0.5));
        let rep = verify_concentration(&st);
        assert!(rep.self_overlap[0] < 1e-15);
    }

    #[test]
    fn rejects_depth_not_below_n() {
        let params = ModelParams::new(0.5, 0.4).unwrap();
        let q = solve_q(&params, 1e-14, default_rule()).unwrap().q;
        let d = sample_disorder(4, SeedRecord::new(1, Domain::Disorder, 0)).unwrap();
        assert!(tap_iterate(d, &params, q, 4, default_rule()).is_err());
    }

    #[test]
    fn degenerate_gram_schmidt_is_reported() {
        let params = ModelParams::new(0.5, 0.4).unwrap();
        let q = solve_q(&params, 1e-14, default_rule()).unwrap().q;
        // zero couplings: every field is the constant h, m(2) ∥ φ(1)
        let d = Disorder::from_matrix(Matrix::zeros(10)).unwrap();
        match tap_iterate(d, &params, q, 3, default_rule()) {
            Err(Error::Degeneracy { step, .. }) => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resample_annihilates_directions() {
        let st = state(50, 0.5, 0.4, 3, 7);
        let g = conditional_resample(&st, SeedRecord::new(1, Domain::Resample, 0));
        for p in &st.phi {
            assert!(g.mul_vec(p).max_abs() < 1e-10);
            assert!(g.tmul_vec(p).max_abs() < 1e-10);
        }
        let g2 = conditional_resample(&st, SeedRecord::new(1, Domain::Resample, 0));
        assert_eq!(g, g2);
    }

    #[test]
    fn resample_matches_explicit_projector_product() {
        let st = state(30, 0.5, 0.4, 2, 8);
        let seed = SeedRecord::new(5, Domain::Resample, 9);
        let mut rng = seed.rng();
        let n = 30;
        let sd = 1.0 / (n as f64).sqrt();
        let raw = Matrix::from_row_major(
            n,
            (0..n * n).map(|_| sd * standard_normal(&mut rng)).collect(),
        );
        let q = st.projection_q();
        let expected = q.matmul(&raw).matmul(&q);
        assert!(conditional_resample(&st, seed).max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn cavity_statistics_without_coupling_are_exact() {
        let st = state(25, 0.0, 0.8, 1, 9);
        let rep = cavity_statistics(&st, default_rule()).unwrap();
        for t in &rep.test_functions {
            assert!(t.deviation < 1e-14, "{t:?}");
        }
    }

    #[test]
    fn dump_round_trip() {
        let st = state(20, 0.5, 0.4, 3, 10);
        let mut buf = Vec::new();
        write_state(&st, &mut buf).unwrap();
        let back = read_state(&buf[..]).unwrap();
        assert_eq!(back.disorder, st.disorder);
        assert_eq!(back.gmod, st.gmod);
        assert_eq!(back.phi, st.phi);
        assert_eq!(back.m, st.m);
        assert_eq!(back.zeta, st.zeta);
        assert_eq!(back.hfield, st.hfield);
        assert_eq!(back.se, st.se);
        assert!(read_state(&buf[..10]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_state(&bad[..]), Err(Error::Format(_))));
    }
}
