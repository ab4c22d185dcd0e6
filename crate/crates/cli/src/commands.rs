//! The eight subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use rand::Rng;
use serde_json::{json, Value};
use sk_tap::experiment::{decomposition_check, disorder_average, lower_bound_pipeline};
use sk_tap::phase::{boundary_scan, parse_grid, region_classify};
use sk_tap::quad::{gauss_hermite_rule, QuadratureRule};
use sk_tap::reduced::{moment_report, reduced_set_mass, ReducedSetSpec};
use sk_tap::registry::Named;
use sk_tap::report::{fmt_f64, CsvTable};
use sk_tap::rng::{Domain, SeedRecord};
use sk_tap::scalar::{
    at_value, rs_free_energy, solve_q, solver_registry, state_evolution, tech_value, ModelParams,
};
use sk_tap::tap::{
    cavity_statistics, check_structure, read_state, sample_disorder, tap_iterate,
    verify_concentration, write_state, TapState,
};

use crate::{CliError, Command, Output, RunConfig};

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn rule(cfg: &RunConfig) -> Result<QuadratureRule, CliError> {
    Ok(gauss_hermite_rule(cfg.quad_order())?)
}

fn params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    Ok(ModelParams::new(cfg.beta()?, cfg.h()?)?)
}

fn key_value_table(rows: &[(&str, String)]) -> CsvTable {
    let mut t = CsvTable::new(["quantity", "value"]);
    for (k, v) in rows {
        t.push_row([k.to_string(), v.clone()]);
    }
    t
}

/// Samples a disorder and runs the iteration, or loads a dumped state.
fn obtain_state(
    cfg: &RunConfig,
    n_default: usize,
    k_default: usize,
) -> Result<(TapState, Value), CliError> {
    let order = cfg.quad_order();
    if let Some(path) = &cfg.state {
        let s = &cfg.settings;
        if s.beta.is_some() || s.h.is_some() || s.n.is_some() || s.k.is_some() || s.seed.is_some() {
            return Err(CliError::Usage(
                "--state fixes beta, h, N, k and seed; do not pass them as well".into(),
            ));
        }
        let st = read_state(BufReader::new(File::open(path)?))?;
        let inputs = json!({
            "state": path.display().to_string(),
            "beta": st.params.beta,
            "h": st.params.h,
            "N": st.n(),
            "k": st.depth(),
            "seed": st.disorder.seed(),
            "quad_order": order,
        });
        return Ok((st, inputs));
    }
    let p = params(cfg)?;
    let rule = rule(cfg)?;
    let n = cfg.n_or(n_default);
    let k = cfg.k_or(k_default);
    let tol = cfg.tol_or(1e-13);
    let q = solve_q(&p, tol, &rule)?.q;
    let d = sample_disorder(n, SeedRecord::new(cfg.seed(), Domain::Disorder, 0))?;
    let st = tap_iterate(d, &p, q, k, &rule)?;
    let inputs = json!({
        "beta": p.beta, "h": p.h, "N": n, "k": k, "tol": tol,
        "seed": cfg.seed(), "quad_order": order,
    });
    Ok((st, inputs))
}

/// Master seed for draws made on top of a state: the one it was sampled with.
fn state_seed(cfg: &RunConfig, st: &TapState) -> u64 {
    st.disorder.seed().map_or(cfg.seed(), |s| s.seed)
}

pub struct SolveQ;

impl Named for SolveQ {
    fn name(&self) -> &'static str {
        "solve-q"
    }
}

impl Command for SolveQ {
    fn about(&self) -> &'static str {
        "overlap fixed point, condition values and replica-symmetric free energy"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let p = params(cfg)?;
        let rule = rule(cfg)?;
        let tol = cfg.tol_or(1e-13);
        let solver_name = cfg.settings.solver.as_deref().unwrap_or("auto");
        let solvers = solver_registry();
        let solver = solvers.get(solver_name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown solver '{solver_name}'; expected one of {}",
                solvers.names().join(", ")
            ))
        })?;
        if tol < sk_tap::scalar::MIN_TOL {
            return Err(CliError::Usage(format!(
                "--tol must be at least {}",
                sk_tap::scalar::MIN_TOL
            )));
        }
        let fp = solver.solve(&p, tol, &rule)?;
        let at = at_value(&p, fp.q, &rule)?;
        let tech = tech_value(&p, fp.q, &rule)?;
        let rs = rs_free_energy(&p, fp.q, &rule)?;
        let region = region_classify(&p, &rule)?;
        let result = json!({
            "fixed_point": to_value(&fp),
            "at_value": at,
            "tech_value": tech,
            "rs_free_energy": rs,
            "region": to_value(&region),
        });
        let mut table = CsvTable::new([
            "beta",
            "h",
            "q",
            "residual",
            "iterations",
            "method",
            "at_value",
            "tech_value",
            "rs",
            "region",
        ]);
        table.push_row([
            fmt_f64(p.beta),
            fmt_f64(p.h),
            fmt_f64(fp.q),
            fmt_f64(fp.residual),
            fp.iterations.to_string(),
            to_value(&fp.method)
                .as_str()
                .unwrap_or_default()
                .to_string(),
            fmt_f64(at),
            fmt_f64(tech),
            fmt_f64(rs),
            to_value(&region).as_str().unwrap_or_default().to_string(),
        ]);
        Ok(Output {
            inputs: json!({"beta": p.beta, "h": p.h, "tol": tol, "solver": solver_name, "quad_order": cfg.quad_order()}),
            result,
            table,
            summary: format!("q = {:.12}", fp.q),
        })
    }
}

pub struct SeTable;

impl Named for SeTable {
    fn name(&self) -> &'static str {
        "se-table"
    }
}

impl Command for SeTable {
    fn about(&self) -> &'static str {
        "state-evolution sequences alpha_k, gamma_k, Gamma_k^2"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let p = params(cfg)?;
        let rule = rule(cfg)?;
        let tol = cfg.tol_or(1e-13);
        let k = cfg.k_or(50);
        let q = solve_q(&p, tol, &rule)?.q;
        let se = state_evolution(&p, q, k, &rule)?;
        let mut table = CsvTable::new(["k", "alpha", "gamma", "gamma2cum"])
            .with_meta("q", fmt_f64(q))
            .with_meta("depth", se.depth().to_string());
        for j in 1..=se.depth() {
            table.push_row([
                j.to_string(),
                fmt_f64(se.alpha(j)),
                fmt_f64(se.gamma(j)),
                fmt_f64(se.gamma2(j)),
            ]);
        }
        let last = se.gamma2(se.depth());
        Ok(Output {
            inputs: json!({"beta": p.beta, "h": p.h, "k": k, "tol": tol, "quad_order": cfg.quad_order()}),
            result: to_value(&se),
            table,
            summary: format!("depth {}: q - Gamma^2 = {:.3e}", se.depth(), q - last),
        })
    }
}

pub struct PhaseScan;

impl Named for PhaseScan {
    fn name(&self) -> &'static str {
        "phase-scan"
    }
}

impl Command for PhaseScan {
    fn about(&self) -> &'static str {
        "AT line and the stronger condition over a grid of fields"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let grid_spec = cfg
            .settings
            .h_grid
            .clone()
            .unwrap_or_else(|| "0.01:2:0.05".into());
        let grid = parse_grid(&grid_spec)?;
        let tol = cfg.tol_or(1e-10);
        let rule = rule(cfg)?;
        let pts = boundary_scan(&grid, tol, &rule)?;
        let mut table = CsvTable::new(["h", "T_at", "T_tech", "q_at", "q_tech"]);
        for p in &pts {
            table.push_floats(&[p.h, p.t_at(), p.t_tech(), p.q_at, p.q_tech]);
        }
        let ordered = pts.iter().all(|p| p.beta_tech <= p.beta_at);
        Ok(Output {
            inputs: json!({"h_grid": grid_spec, "tol": tol, "quad_order": cfg.quad_order()}),
            result: json!({ "points": to_value(&pts), "tech_below_at": ordered }),
            table,
            summary: format!(
                "{} fields; beta_tech <= beta_at on every row: {ordered}",
                pts.len()
            ),
        })
    }
}

pub struct TapRun;

impl Named for TapRun {
    fn name(&self) -> &'static str {
        "tap-run"
    }
}

impl Command for TapRun {
    fn about(&self) -> &'static str {
        "run the iteration on one disorder and check its structure"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        if cfg.state.is_some() {
            return Err(CliError::Usage(
                "tap-run samples its own disorder; use --dump to save it".into(),
            ));
        }
        let (st, mut inputs) = obtain_state(cfg, 200, 3)?;
        let rule = rule(cfg)?;
        let structure = check_structure(&st);
        let conc = verify_concentration(&st);
        let cavity = cavity_statistics(&st, &rule)?;
        if let Some(path) = &cfg.dump {
            write_state(&st, BufWriter::new(File::create(path)?))?;
            inputs["dump"] = json!(path.display().to_string());
        }
        let table = key_value_table(&[
            ("depth", st.depth().to_string()),
            ("orthonormality", fmt_f64(structure.orthonormality)),
            ("annihilation", fmt_f64(structure.annihilation)),
            ("reconstruction", fmt_f64(structure.reconstruction)),
            ("max_phi_deviation", fmt_f64(conc.max_phi)),
            ("max_m_deviation", fmt_f64(conc.max_m)),
            ("max_self_overlap_deviation", fmt_f64(conc.max_self)),
        ]);
        Ok(Output {
            inputs,
            result: json!({
                "depth": st.depth(),
                "structure": to_value(&structure),
                "concentration": to_value(&conc),
                "cavity": to_value(&cavity),
            }),
            table,
            summary: format!(
                "depth {}; structure error {:.2e}; max |<m,phi> - gamma| = {:.3e}",
                st.depth(),
                structure.worst(),
                conc.max_phi
            ),
        })
    }
}

pub struct Moments;

impl Named for Moments {
    fn name(&self) -> &'static str {
        "moments"
    }
}

impl Command for Moments {
    fn about(&self) -> &'static str {
        "first and second conditional moments of the reduced partition function"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let (st, mut inputs) = obtain_state(cfg, 12, 2)?;
        let eps = cfg.epsilon_or(0.6);
        let samples = cfg.samples_or(20_000);
        let spec = ReducedSetSpec::new(eps, st.depth())?;
        let mc = (samples > 0).then_some((samples, state_seed(cfg, &st)));
        let rep = moment_report(&st, &spec, mc, cfg.quad_order())?;
        let mass = reduced_set_mass(&st, &spec, None)?;
        inputs["epsilon"] = json!(eps);
        inputs["samples"] = json!(samples);
        let mut rows = vec![
            (
                "log_first_moment_per_N",
                fmt_f64(rep.log_first_moment_per_n),
            ),
            ("predicted_first", fmt_f64(rep.predicted_first)),
            ("predicted_second", fmt_f64(rep.predicted_second)),
            ("pfree_mass", fmt_f64(rep.pfree_mass)),
            ("mass_bound", fmt_f64(rep.mass_bound)),
        ];
        if let Some(s) = rep.log_second_moment_per_n {
            rows.push(("log_second_moment_per_N", fmt_f64(s)));
        }
        if let Some(m) = rep.mc_first {
            rows.push(("mc_first_ratio", fmt_f64(m.mean)));
            rows.push(("mc_first_stderr", fmt_f64(m.stderr)));
        }
        if let Some(m) = rep.mc_second {
            rows.push(("mc_second_ratio", fmt_f64(m.mean)));
            rows.push(("mc_second_stderr", fmt_f64(m.stderr)));
        }
        let summary = format!(
            "(1/N) log E_k Z = {:.6}; mass {:.6} (bound {:.4}, holds: {}); Jensen: {}",
            rep.log_first_moment_per_n,
            rep.pfree_mass,
            rep.mass_bound,
            mass.bound_holds(),
            rep.jensen_holds()
                .map_or("n/a".to_string(), |b| b.to_string()),
        );
        Ok(Output {
            inputs,
            result: to_value(&rep),
            table: key_value_table(&rows),
            summary,
        })
    }
}

pub struct FreeEnergy;

impl Named for FreeEnergy {
    fn name(&self) -> &'static str {
        "free-energy"
    }
}

impl Command for FreeEnergy {
    fn about(&self) -> &'static str {
        "exact free energies over disorder draws against the replica-symmetric value"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let p = params(cfg)?;
        let rule = rule(cfg)?;
        let n = cfg.n_or(16);
        let samples = cfg.samples_or(200);
        let avg = disorder_average(&p, n, samples, cfg.seed(), &rule)?;
        let mut table = CsvTable::new(["stream", "f_N"])
            .with_meta("mean_f", fmt_f64(avg.mean_f))
            .with_meta("stderr", fmt_f64(avg.stderr))
            .with_meta("rs", fmt_f64(avg.rs));
        for (i, s) in avg.samples.iter().enumerate() {
            table.push_row([i.to_string(), fmt_f64(s.f_n)]);
        }
        Ok(Output {
            inputs: json!({"beta": p.beta, "h": p.h, "N": n, "samples": samples, "seed": cfg.seed(), "quad_order": cfg.quad_order()}),
            result: to_value(&avg),
            table,
            summary: format!(
                "mean f_N = {:.6} +- {:.6}; RS = {:.6}",
                avg.mean_f, avg.stderr, avg.rs
            ),
        })
    }
}

pub struct LowerBound;

impl Named for LowerBound {
    fn name(&self) -> &'static str {
        "lower-bound"
    }
}

impl Command for LowerBound {
    fn about(&self) -> &'static str {
        "exact f_N against the restricted lower bound, per disorder draw"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let p = params(cfg)?;
        let rule = rule(cfg)?;
        let n = cfg.n_or(16);
        let k = cfg.k_or(3);
        let eps = cfg.epsilon_or(0.5);
        let samples = cfg.samples_or(50);
        let rep = lower_bound_pipeline(&p, n, k, eps, cfg.seed(), samples, &rule)?;
        let mut table = CsvTable::new([
            "stream",
            "depth",
            "f_N",
            "rhs",
            "gap",
            "rs_gap",
            "pfree_mass",
            "err_epsilon",
            "err_concentration",
            "err_phi_zeta",
            "err_gamma_zeta",
            "err_remainder_zeta",
        ])
        .with_meta("rs", fmt_f64(rep.summary.rs))
        .with_meta("median_gap", fmt_f64(rep.summary.median_gap))
        .with_meta("violations", rep.summary.violations.to_string());
        for r in &rep.records {
            table.push_row([
                r.stream.to_string(),
                r.depth.to_string(),
                fmt_f64(r.f_n),
                fmt_f64(r.rhs),
                fmt_f64(r.gap),
                fmt_f64(r.rs_gap),
                fmt_f64(r.pfree_mass),
                fmt_f64(r.terms.epsilon),
                fmt_f64(r.terms.concentration),
                fmt_f64(r.terms.phi_zeta),
                fmt_f64(r.terms.gamma_zeta),
                fmt_f64(r.terms.remainder_zeta),
            ]);
        }
        Ok(Output {
            inputs: json!({"beta": p.beta, "h": p.h, "N": n, "k": k, "epsilon": eps, "samples": samples, "seed": cfg.seed(), "quad_order": cfg.quad_order()}),
            result: to_value(&rep),
            table,
            summary: format!(
                "{} draws; f_N >= bound violated {} times; median gap {:.4}; median |f_N - RS| {:.4}",
                samples, rep.summary.violations, rep.summary.median_gap, rep.summary.median_rs_gap
            ),
        })
    }
}

pub struct DecompCheck;

impl Named for DecompCheck {
    fn name(&self) -> &'static str {
        "decomp-check"
    }
}

impl Command for DecompCheck {
    fn about(&self) -> &'static str {
        "re-centred Hamiltonian decomposition on random and magnetization-sign configurations"
    }

    fn run(&self, cfg: &RunConfig) -> Result<Output, CliError> {
        let (st, mut inputs) = obtain_state(cfg, 200, 3)?;
        let samples = cfg.samples_or(100);
        inputs["samples"] = json!(samples);
        let n = st.n();
        let seed = state_seed(cfg, &st);
        let mut configs: Vec<(String, Vec<f64>)> = (0..samples)
            .map(|i| {
                let mut rng = SeedRecord::new(seed, Domain::Coins, i as u64).rng();
                let s = (0..n)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                (format!("random-{i}"), s)
            })
            .collect();
        let sign_m = st
            .last_m()
            .iter()
            .map(|&m| if m >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        configs.push(("sign-m".into(), sign_m));
        let mut table = CsvTable::new([
            "config",
            "lhs",
            "rhs",
            "residual",
            "modified_energy",
            "field",
            "centred_rank_two",
            "phi_zeta",
            "last_step",
        ]);
        let mut reports = Vec::with_capacity(configs.len());
        for (name, s) in &configs {
            let r = decomposition_check(&st, s)?;
            table.push_row([
                name.clone(),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.residual),
                fmt_f64(r.modified_energy),
                fmt_f64(r.field),
                fmt_f64(r.centred_rank_two),
                fmt_f64(r.phi_zeta),
                fmt_f64(r.last_step),
            ]);
            reports.push(json!({"config": name, "report": to_value(&r)}));
        }
        let worst = table
            .column_f64("residual")?
            .into_iter()
            .fold(0.0, f64::max);
        Ok(Output {
            inputs,
            result: json!({"max_residual": worst, "checks": reports}),
            table,
            summary: format!(
                "{} configurations; max residual {:.3e}",
                configs.len(),
                worst
            ),
        })
    }
}
