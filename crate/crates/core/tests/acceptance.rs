//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits nonzero only when a criterion fails that is not listed in
//! `KNOWN_RED`.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use sk_tap::experiment::{
    annealed_estimate, decomposition_check, disorder_average, exact_log_partition,
    lower_bound_pipeline, mean_stderr, median, sample_variance, DisorderAverage,
};
use sk_tap::phase::{boundary_scan, parse_grid};
use sk_tap::reduced::{
    conditional_first_moment, conditional_moments_mc, conditional_second_moment, reduced_set_mass,
    ReducedSetSpec,
};
use sk_tap::rng::{Domain, SeedRecord};
use sk_tap::scalar::{at_value, solve_q, state_evolution};
use sk_tap::tap::{
    check_structure, conditional_resample, phi_zeta_samples, sample_disorder, tap_iterate,
    verify_concentration, TapState,
};
use sk_tap::{default_rule, ModelParams};

/// Parts of criteria that cannot hold as stated; see the printed reason.
const KNOWN_RED: &[&str] = &["9:at-limit"];

struct Verdict {
    failures: Vec<(String, String)>,
    notes: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, tag: &str, ok: bool, detail: String) {
        if !ok {
            self.failures.push((tag.to_string(), detail));
        }
    }

    fn note(&mut self, s: String) {
        self.notes.push(s);
    }
}

fn params(beta: f64, h: f64) -> ModelParams {
    ModelParams::new(beta, h).unwrap()
}

fn state(n: usize, k: usize, p: &ModelParams, seed: u64) -> TapState {
    let q = solve_q(p, 1e-14, default_rule()).unwrap().q;
    let d = sample_disorder(n, SeedRecord::new(seed, Domain::Disorder, 0)).unwrap();
    tap_iterate(d, p, q, k, default_rule()).unwrap()
}

fn grid_pairs() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &beta in &[0.0, 0.3, 0.6, 0.9, 1.2] {
        for &h in &[0.05, 0.5, 1.0, 2.0] {
            out.push((beta, h));
        }
    }
    out
}

fn c1(v: &mut Verdict) {
    let pairs = grid_pairs();
    let oracle: Vec<f64> = pairs.iter().map(|&(b, h)| common::q_oracle(b, h)).collect();
    let t = Instant::now();
    let solved: Vec<f64> = pairs
        .iter()
        .map(|&(b, h)| solve_q(&params(b, h), 1e-14, default_rule()).unwrap().q)
        .collect();
    let elapsed = t.elapsed();
    let mut worst = 0.0_f64;
    let mut worst_zero = 0.0_f64;
    for (i, &(b, h)) in pairs.iter().enumerate() {
        worst = worst.max((solved[i] - oracle[i]).abs());
        if b == 0.0 {
            worst_zero = worst_zero.max((solved[i] - h.tanh().powi(2)).abs());
        }
    }
    v.check(
        "1",
        worst <= 1e-10,
        format!("max |q - oracle| = {worst:.2e}"),
    );
    v.check(
        "1",
        worst_zero <= 2.0 * f64::EPSILON,
        format!("beta=0 error {worst_zero:.2e}"),
    );
    v.check(
        "1",
        elapsed < Duration::from_secs(1),
        format!("solver time {elapsed:?}"),
    );
    v.note(format!(
        "max |q - oracle| = {worst:.1e}, beta=0 error {worst_zero:.1e}, solver {elapsed:.1?}"
    ));
}

fn c2(v: &mut Verdict) {
    let rule = default_rule();
    let mut checked = 0;
    for (b, h) in grid_pairs() {
        let p = params(b, h);
        let q = solve_q(&p, 1e-14, rule).unwrap().q;
        if at_value(&p, q, rule).unwrap() >= 1.0 {
            continue;
        }
        let se = state_evolution(&p, q, 50, rule).unwrap();
        checked += 1;
        if let Err(e) = se.check_chain() {
            v.check("2", false, format!("(beta, h) = ({b}, {h}): {e}"));
        }
    }
    let p = params(0.5, 0.4);
    let q = solve_q(&p, 1e-14, rule).unwrap().q;
    let se = state_evolution(&p, q, 50, rule).unwrap();
    let gap = (se.gamma2(se.depth()) - q).abs();
    v.check("2", gap < 1e-4, format!("|Gamma_50^2 - q| = {gap:.2e}"));
    v.note(format!(
        "{checked} pairs checked; |Gamma_50^2 - q| = {gap:.1e} (depth {})",
        se.depth()
    ));
}

/// Structure error and the pooled `|⟨m⁽ᵏ⁾, φ⁽ˢ⁾⟩ − γ_s|`, `s < k`, over seeds.
fn structure_and_deviations(n: usize, k: usize, seeds: u64) -> (f64, Vec<f64>) {
    let p = params(0.5, 0.4);
    let per_seed: Vec<(f64, Vec<f64>)> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let st = state(n, k, &p, seed);
            let worst = check_structure(&st).worst();
            let devs = verify_concentration(&st)
                .deviations
                .iter()
                .filter(|d| d.j == k)
                .filter_map(|d| d.phi)
                .collect();
            (worst, devs)
        })
        .collect();
    let worst = per_seed.iter().map(|x| x.0).fold(0.0, f64::max);
    (worst, per_seed.into_iter().flat_map(|x| x.1).collect())
}

fn c3(v: &mut Verdict) {
    let (worst, large) = structure_and_deviations(2000, 4, 20);
    let (_, small) = structure_and_deviations(200, 4, 20);
    let (ml, ms) = (median(&large), median(&small));
    v.check("3", worst <= 1e-9, format!("structure error {worst:.2e}"));
    v.check(
        "3",
        ml <= 0.05,
        format!("median deviation at N=2000 is {ml:.4}"),
    );
    v.check(
        "3",
        ml < ms,
        format!("median {ml:.4} at N=2000 not below {ms:.4} at N=200"),
    );
    v.note(format!(
        "structure {worst:.1e}; median deviation {ml:.4} (N=2000) vs {ms:.4} (N=200)"
    ));
}

fn c4(v: &mut Verdict) {
    let n = 200;
    let p = params(0.5, 0.4);
    let q = solve_q(&p, 1e-14, default_rule()).unwrap().q;
    let xs = phi_zeta_samples(n, &p, q, 1, 41, 10_000, default_rule()).unwrap();
    let ratio = sample_variance(&xs) / (2.0 / n as f64);
    v.check(
        "4",
        (0.9..=1.1).contains(&ratio),
        format!("variance ratio {ratio:.4}"),
    );

    let st = state(40, 3, &p, 7);
    let qm = st.projection_q();
    let m = st.n();
    let mut rng = SeedRecord::new(7, Domain::Coins, 0).rng();
    let quads: Vec<[usize; 4]> = (0..50)
        .map(|_| [0; 4].map(|_| rng.random_range(0..m)))
        .collect();
    let draws = 20_000;
    // only the entries named by the quadruples are kept from each draw
    let picked: Vec<Vec<(f64, f64)>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let g = conditional_resample(&st, SeedRecord::new(7, Domain::Resample, d as u64));
            quads
                .iter()
                .map(|&[i, j, s, t]| (g.row(i)[j], g.row(s)[t]))
                .collect()
        })
        .collect();
    let mut worst_z = 0.0_f64;
    for (c, &[i, j, s, t]) in quads.iter().enumerate() {
        let a: Vec<f64> = picked.iter().map(|r| r[c].0).collect();
        let b: Vec<f64> = picked.iter().map(|r| r[c].1).collect();
        let (ma, mb) = (
            a.iter().sum::<f64>() / draws as f64,
            b.iter().sum::<f64>() / draws as f64,
        );
        let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let (cov, se) = mean_stderr(&prods);
        let target = qm.row(i)[s] * qm.row(j)[t] / m as f64;
        worst_z = worst_z.max((cov - target).abs() / se);
    }
    v.check(
        "4",
        worst_z <= 5.0,
        format!("worst covariance z-score {worst_z:.2}"),
    );
    v.note(format!(
        "variance ratio {ratio:.4}; worst covariance z {worst_z:.2}"
    ));
}

fn c5(v: &mut Verdict) {
    let p = params(0.5, 0.4);
    let st = state(12, 2, &p, 1);
    let spec = ReducedSetSpec::new(0.6, 2).unwrap();
    let first = conditional_first_moment(&st, &spec).unwrap();
    let second = conditional_second_moment(&st, &spec).unwrap();
    let (a, b) = conditional_moments_mc(&st, &spec, &first, Some(&second), 20_000, 1).unwrap();
    let b = b.unwrap();
    v.check(
        "5",
        a.agrees(3.0),
        format!("first-moment ratio {:.4} ± {:.4}", a.mean, a.stderr),
    );
    v.check(
        "5",
        b.agrees(3.0),
        format!("second-moment ratio {:.4} ± {:.4}", b.mean, b.stderr),
    );
    v.check(
        "5",
        second.log_per_n >= 2.0 * first.log_per_n,
        "Jensen violated".into(),
    );
    let mass = reduced_set_mass(&st, &spec, None).unwrap();
    let tail = 1.0 - mass.mass;
    let bound = 1.0 - mass.bound;
    v.check(
        "5",
        tail <= bound,
        format!("complement mass {tail:.4} exceeds {bound:.4}"),
    );
    v.note(format!(
        "ratios {:.4}±{:.4}, {:.4}±{:.4}; complement mass {tail:.3} <= {bound:.3}",
        a.mean, a.stderr, b.mean, b.stderr
    ));
}

fn c6(v: &mut Verdict) {
    let p = params(0.5, 0.4);
    let st = state(200, 3, &p, 2);
    let mut rng = SeedRecord::new(2, Domain::Coins, 0).rng();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let sigma: Vec<f64> = (0..200)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        worst = worst.max(decomposition_check(&st, &sigma).unwrap().residual);
    }
    v.check(
        "6",
        worst <= 1e-9,
        format!("decomposition residual {worst:.2e}"),
    );
    let rep = lower_bound_pipeline(&p, 16, 3, 0.5, 3, 50, default_rule()).unwrap();
    let v_count = rep.summary.violations;
    v.check(
        "6",
        v_count == 0,
        format!("{v_count} draws with f_N below the restricted bound"),
    );
    v.note(format!(
        "residual {worst:.1e}; 0/{} restriction violations",
        rep.records.len()
    ));
}

fn c7(v: &mut Verdict) {
    let p = params(0.8, 0.3);
    let rule = default_rule();
    let f16: DisorderAverage = disorder_average(&p, 16, 200, 5, rule).unwrap();
    let f8 = disorder_average(&p, 8, 200, 6, rule).unwrap();
    let rs = f16.rs;
    v.check(
        "7",
        f16.mean_f <= rs + 3.0 * f16.stderr,
        format!("mean f_16 {:.5} above RS {rs:.5} + 3 se", f16.mean_f),
    );
    let combined = (f16.stderr.powi(2) + f8.stderr.powi(2)).sqrt();
    v.check(
        "7",
        f16.mean_f >= f8.mean_f - 3.0 * combined,
        format!(
            "mean f_16 {:.5} below f_8 {:.5} - 3 se",
            f16.mean_f, f8.mean_f
        ),
    );
    let gap = (f16.mean_f - rs).abs();
    v.check("7", gap <= 0.05, format!("|f_16 - RS| = {gap:.4}"));
    let zero = params(0.0, 0.3);
    let exact = std::f64::consts::LN_2 + 0.3f64.cosh().ln();
    let mut worst = 0.0_f64;
    for i in 0..5 {
        let d = sample_disorder(16, SeedRecord::new(8, Domain::Disorder, i)).unwrap();
        worst = worst.max((exact_log_partition(&d, &zero).unwrap().f_n - exact).abs());
    }
    v.check("7", worst <= 1e-12, format!("beta=0 error {worst:.2e}"));
    v.note(format!(
        "f_16 {:.5}±{:.5}, f_8 {:.5}±{:.5}, RS {rs:.5}; beta=0 error {worst:.1e}",
        f16.mean_f, f16.stderr, f8.mean_f, f8.stderr
    ));
}

fn c8(v: &mut Verdict) {
    let est = annealed_estimate(&params(0.6, 0.0), 10, 1000, 9).unwrap();
    v.check(
        "8",
        est.agrees(3.0),
        format!(
            "{:.5} ± {:.5} vs {:.5}",
            est.log_mean_z_per_n, est.stderr, est.exact
        ),
    );
    v.note(format!(
        "{:.5} ± {:.5} vs exact {:.5}",
        est.log_mean_z_per_n, est.stderr, est.exact
    ));
}

fn c9(v: &mut Verdict) {
    let mut grid = parse_grid("0.01:2:0.05").unwrap();
    if *grid.last().unwrap() < 2.0 {
        grid.push(2.0);
    }
    if !grid.contains(&0.5) {
        grid.push(0.5);
        grid.sort_by(f64::total_cmp);
    }
    let pts = boundary_scan(&grid, 1e-10, default_rule()).unwrap();
    let bad = pts.iter().filter(|p| p.beta_tech > p.beta_at).count();
    v.check(
        "9",
        bad == 0,
        format!("{bad} rows with beta_tech > beta_at"),
    );
    let first = pts[0];
    v.check(
        "9",
        (first.beta_tech - 1.0).abs() <= 2e-2,
        format!("beta_tech(0.01) = {:.5}", first.beta_tech),
    );
    v.check(
        "9:at-limit",
        (first.beta_at - 1.0).abs() <= 2e-2,
        format!(
            "beta_at(0.01) = {:.5}; the AT boundary leaves 1 like (3h^2/4)^(1/3) = {:.4}",
            first.beta_at,
            (0.75f64 * 0.01 * 0.01).cbrt()
        ),
    );
    let half = pts.iter().find(|p| p.h == 0.5).unwrap();
    let (at, tech) = (
        common::dense_grid_root(0.5, 4),
        common::dense_grid_root(0.5, 2),
    );
    let e = (half.beta_at - at).abs().max((half.beta_tech - tech).abs());
    v.check(
        "9",
        e <= 1e-6,
        format!("dense-grid disagreement {e:.2e} at h=0.5"),
    );
    v.note(format!(
        "{} rows; h=0.01: beta_tech {:.5}, beta_at {:.5}; oracle gap {e:.1e}",
        pts.len(),
        first.beta_tech,
        first.beta_at
    ));
}

type Criterion = (&'static str, fn(&mut Verdict), Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("fixed point", c1, Duration::from_secs(1)),
        ("state evolution", c2, Duration::from_secs(1)),
        ("TAP structure", c3, Duration::from_secs(120)),
        ("conditional law", c4, Duration::from_secs(120)),
        ("reduced moments", c5, Duration::from_secs(300)),
        ("decomposition", c6, Duration::from_secs(120)),
        ("free energy vs RS", c7, Duration::from_secs(600)),
        ("annealed anchor", c8, Duration::from_secs(60)),
        ("phase diagram", c9, Duration::from_secs(60)),
    ];
    let mut unexpected = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let mut v = Verdict::new();
        let t = Instant::now();
        run(&mut v);
        let elapsed = t.elapsed();
        v.check(
            &(i + 1).to_string(),
            elapsed <= *limit,
            format!("took {elapsed:.1?}, limit {limit:?}"),
        );
        let notes = v.notes.join("; ");
        let (known, other): (Vec<_>, Vec<_>) = v
            .failures
            .iter()
            .partition(|(tag, _)| KNOWN_RED.contains(&tag.as_str()));
        let label = format!("criterion {} ({name}, {elapsed:.2?})", i + 1);
        if !other.is_empty() {
            unexpected += 1;
            let why: Vec<&str> = other.iter().map(|(_, d)| d.as_str()).collect();
            println!("FAIL {label}: {}", why.join("; "));
        } else if !known.is_empty() {
            let why: Vec<&str> = known.iter().map(|(_, d)| d.as_str()).collect();
            println!("FAIL (known: {}) {label}: {notes}", why.join("; "));
        } else {
            println!("PASS {label}: {notes}");
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
