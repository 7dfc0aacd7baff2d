//! One function per experiment mode.

use std::path::Path;

use kppflow::acceptance::{Outcome, Status, SuiteOptions, CRITERIA};
use kppflow::cell::{corrector_limit_estimate, diffusivity_identity_check, diffusivity_sweep, solve_cell_problem, CellOptions};
use kppflow::eigen::{eigen_identities, principal_eigenpair, EigenOptions};
use kppflow::flow::FlowField;
use kppflow::limits::{limit_report, shear_profile_of};
use kppflow::oracle::{dense_cell_solution, dense_principal_eigenvalue};
use kppflow::sim::{measure_speed, simulate_front, ChannelDomain};
use kppflow::speed::{expects_monotone_ratio, speed_sweep, validate_reaction, SpeedOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, RunMode};
use crate::error::CliError;
use crate::output::OutputDir;

const DEFAULT_LAMBDAS: [f64; 12] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];
const RANDOM_CASES: usize = 3;
const DENSE_MAX: usize = 1024;

fn cell_opts(cfg: &ExperimentConfig) -> CellOptions {
    CellOptions {
        tol: cfg.tolerances.cell,
        ..CellOptions::default()
    }
}

fn speed_opts(cfg: &ExperimentConfig) -> SpeedOptions {
    SpeedOptions {
        eigen: EigenOptions {
            tol: cfg.tolerances.eigen,
            ..EigenOptions::default()
        },
        lambda_rel_tol: cfg.tolerances.lambda,
        ..SpeedOptions::default()
    }
}

/// Runs `cfg` and writes its artifacts. The manifest is written even when a
/// solver fails, next to a FAILED marker.
pub fn run_config(cfg: &ExperimentConfig, config_path: &Path) -> Result<(), CliError> {
    if cfg.mode == RunMode::ReproduceAll {
        let dir = cfg.output_dir(config_path);
        let forced = cfg.fast.then_some(16);
        return reproduce_all(&dir, forced);
    }
    let mut out = OutputDir::create(&cfg.output_dir(config_path))?;
    let echo = serde_json::to_value(cfg).expect("serialisable config");
    let result = match cfg.mode {
        RunMode::Diffusivity => diffusivity(cfg, &mut out),
        RunMode::Speed => speed(cfg, &mut out),
        RunMode::Limits => limits(cfg, &mut out),
        RunMode::Simulate => simulate(cfg, &mut out),
        RunMode::Validate => validate(cfg, &mut out),
        RunMode::ReproduceAll => unreachable!(),
    };
    match result {
        Ok(()) => out.finish(&echo, "ok"),
        Err(err @ CliError::Io { .. }) => Err(err),
        Err(err) => {
            out.mark_failed(&err)?;
            out.finish(&echo, "failed")?;
            Err(err)
        }
    }
}

fn diffusivity(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let flow = cfg.build_flow()?;
    let e = cfg.direction();
    let amps = cfg.amplitude_list()?;
    let sweep = out.time("diffusivity_sweep", || diffusivity_sweep(&flow, &e, &amps, &cell_opts(cfg)))?;
    let h1: Vec<f64> = if sweep.solutions.len() >= 3 {
        corrector_limit_estimate(&sweep)?.h1_distance.iter().map(|p| p.1).collect()
    } else {
        vec![f64::NAN; amps.len()]
    };
    let rows: Vec<Vec<f64>> = sweep
        .points
        .iter()
        .zip(&h1)
        .map(|(p, h)| vec![p.amplitude, p.d_e, p.d_e_over_a2, p.residual, p.first_integral_residual, *h])
        .collect();
    out.write_csv(
        "diffusivity.csv",
        &["A", "D_e", "D_e_over_A2", "residual", "first_integral_residual", "h1_dist_to_w0"],
        &rows,
    )?;
    let series = |f: fn(&kppflow::cell::SweepPoint) -> f64| -> Vec<(f64, f64)> {
        sweep.points.iter().map(|p| (p.amplitude, f(p))).collect()
    };
    out.write_series("d_e_over_a2", "Effective diffusivity over A squared", ("A", "D_e/A^2"), &series(|p| p.d_e_over_a2))?;
    out.write_series(
        "first_integral_residual",
        "First-integral residual of the rescaled corrector",
        ("A", "|u.grad psi|_2"),
        &series(|p| p.first_integral_residual),
    )?;
    out.write_json("diffusivity_summary.json", &json!({ "d_e_over_a2_decreasing": sweep.decreasing }))
}

fn speed(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let flow = cfg.build_flow()?;
    let e = cfg.direction();
    let amps = cfg.amplitude_list()?;
    let spec = cfg.reaction.build();
    let sweep = out.time("speed_sweep", || speed_sweep(&flow, &e, &amps, &spec, &speed_opts(cfg)))?;
    let rows: Vec<Vec<f64>> = sweep
        .points
        .iter()
        .map(|p| vec![p.amplitude, p.c_star, p.c_star_over_a, p.lambda_star, p.kappa_at_lambda_star, p.eigen_residual])
        .collect();
    out.write_csv(
        "speed.csv",
        &["A", "c_star", "c_star_over_A", "lambda_star", "kappa_at_lambda_star", "eigen_residual"],
        &rows,
    )?;
    let ratio: Vec<(f64, f64)> = sweep.points.iter().map(|p| (p.amplitude, p.c_star_over_a)).collect();
    out.write_series("c_star_over_a", "Minimal front speed over A", ("A", "c*/A"), &ratio)?;
    let monotone_required = expects_monotone_ratio(&flow);
    out.write_json(
        "speed_summary.json",
        &json!({
            "ratio_nonincreasing": sweep.ratio_nonincreasing,
            "monotonicity_required": monotone_required,
            "evaluations": sweep.results.iter().map(|r| r.evaluations).collect::<Vec<_>>(),
        }),
    )?;
    if monotone_required && !sweep.ratio_nonincreasing {
        return Err(CliError::Solver(kppflow::Error::InvalidArgument(
            "c*/A increases along the sweep of a shear flow".into(),
        )));
    }
    Ok(())
}

fn limits(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let flow = cfg.build_flow()?;
    let e = cfg.direction();
    let profile = shear_profile_of(&flow)?;
    let spec = cfg.reaction.build();
    let lambdas = cfg.lambdas.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let report = out.time("limit_report", || limit_report(profile, &e, spec.fprime0, &lambdas))?;
    out.write_json("limits.json", &report)?;
    out.write_series("gamma", "Transverse energy gamma against lambda", ("lambda", "gamma"), &report.gamma_curve)
}

fn simulate(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sim = cfg.simulation.as_ref().expect("checked with the config");
    let flow = cfg.build_flow()?;
    let amplitude = cfg.amplitudes.as_ref().and_then(|a| a.first()).copied().unwrap_or(0.0);
    let spec = cfg.reaction.build();
    let dom = ChannelDomain::new(sim.length_periods, sim.resolution.clone())?;
    let traj = out.time("simulate_front", || simulate_front(&flow, amplitude, &spec, &dom, sim.t_final, sim.dt))?;
    let rows: Vec<Vec<f64>> = (0..traj.times.len())
        .map(|i| vec![traj.times[i], traj.positions[i], traj.cross_section_max[i], traj.clip_counts[i] as f64])
        .collect();
    out.write_csv("trajectory.csv", &["t", "front_position", "cross_section_max", "clip_count"], &rows)?;
    let points: Vec<(f64, f64)> = traj.times.iter().copied().zip(traj.positions.iter().copied()).collect();
    out.write_series("front_position", "Front position against time", ("t", "x"), &points)?;
    let fit = measure_speed(&traj, sim.window_fraction)?;
    out.write_json(
        "simulation_summary.json",
        &json!({
            "amplitude": amplitude,
            "speed": fit.speed,
            "fit_residual": fit.fit_residual,
            "samples": fit.samples,
            "truncated": traj.truncated,
            "dt": traj.dt,
        }),
    )
}

#[derive(Serialize)]
struct RandomCase {
    amplitude: f64,
    lambda: f64,
    d_e: f64,
    cell_residual: f64,
    id22_residual: f64,
    id24_residual: f64,
    kappa: f64,
    eigen_residual: f64,
    id35_residual: f64,
    id36_residual: f64,
    dense_cell_error: Option<f64>,
    dense_kappa_error: Option<f64>,
    passed: bool,
}

fn random_case(flow: &FlowField, e: &[f64], cfg: &ExperimentConfig, amplitude: f64, lambda: f64) -> Result<RandomCase, CliError> {
    let cell_tol = cfg.tolerances.cell;
    let eigen_tol = cfg.tolerances.eigen;
    let sol = solve_cell_problem(flow, e, amplitude, &cell_opts(cfg))?;
    let ids = diffusivity_identity_check(&sol, flow)?;
    let eig = principal_eigenpair(flow, e, amplitude, lambda, &speed_opts(cfg).eigen)?;
    let eids = eigen_identities(&eig, flow, e)?;
    let scale = 1.0 + eig.kappa.abs();
    let (dense_cell_error, dense_kappa_error) = if flow.grid().len() <= DENSE_MAX && !sol.refined {
        let psi = dense_cell_solution(flow, e, amplitude)?;
        let cell_err = psi.sub(&sol.psi)?.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let kappa = dense_principal_eigenvalue(flow, e, amplitude, lambda)?;
        (Some(cell_err), Some((kappa - eig.kappa).abs()))
    } else {
        (None, None)
    };
    let dense_ok = dense_cell_error.map_or(true, |d| d <= 1e-8) && dense_kappa_error.map_or(true, |d| d <= 1e-8 * scale);
    let passed = sol.d_e >= 1.0 - 1e-12
        && sol.psi.mean().abs() <= 1e-12
        && ids.id22_residual <= 10.0 * cell_tol
        && ids.id24_residual <= 10.0 * cell_tol
        && eig.phi.min() > 0.0
        && eids.id35_residual <= 10.0 * eigen_tol * scale
        && eids.id36_residual <= 10.0 * eigen_tol * scale
        && dense_ok;
    Ok(RandomCase {
        amplitude,
        lambda,
        d_e: sol.d_e,
        cell_residual: sol.residual,
        id22_residual: ids.id22_residual,
        id24_residual: ids.id24_residual,
        kappa: eig.kappa,
        eigen_residual: eig.residual,
        id35_residual: eids.id35_residual,
        id36_residual: eids.id36_residual,
        dense_cell_error,
        dense_kappa_error,
        passed,
    })
}

/// Flow and reaction reports plus seeded random identity checks.
fn validate(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let flow = cfg.build_flow()?;
    let e = cfg.direction();
    let flow_report = flow.validate();
    let reaction_report = validate_reaction(&cfg.reaction.build(), 1000)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cases = out.time("random_cases", || {
        (0..RANDOM_CASES)
            .map(|_| {
                let amplitude = 2f64.powf(rng.gen_range(0.0..6.0));
                let lambda = rng.gen_range(0.1..4.0);
                random_case(&flow, &e, cfg, amplitude, lambda)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let passed = reaction_report.passed && cases.iter().all(|c| c.passed);
    out.write_json(
        "validation.json",
        &json!({
            "seed": cfg.seed,
            "flow": flow_report,
            "reaction": reaction_report,
            "random_cases": cases,
            "passed": passed,
        }),
    )?;
    if !passed {
        return Err(CliError::Solver(kppflow::Error::InvalidArgument(
            "validation checks failed; see validation.json".into(),
        )));
    }
    Ok(())
}

/// Runs every acceptance criterion, printing one line per criterion as it
/// finishes, and writes the summary table.
pub fn reproduce_all(dir: &Path, forced: Option<usize>) -> Result<(), CliError> {
    let mut out = OutputDir::create(dir)?;
    let opts = SuiteOptions { force_resolution: forced };
    let mut outcomes: Vec<Outcome> = Vec::new();
    for c in CRITERIA.iter() {
        let o = c.run(&opts);
        println!("{o}");
        outcomes.push(o);
    }
    let mut csv = String::from("id,name,status,measured,tolerance,runtime_s,budget_s\n");
    for o in &outcomes {
        csv.push_str(&format!(
            "{},{},{},\"{}\",\"{}\",{},{}\n",
            o.id,
            o.name,
            o.status,
            o.measured.replace('"', "'"),
            o.tolerance.replace('"', "'"),
            crate::output::num(o.runtime_s),
            crate::output::num(o.budget_s)
        ));
    }
    out.write("summary.csv", csv.as_bytes())?;
    out.write_json("summary.json", &outcomes)?;
    let failed = outcomes.iter().filter(|o| o.status == Status::Fail).count();
    let status = if failed == 0 { "ok" } else { "failed" };
    out.finish(&json!({ "mode": "reproduce-all", "force_resolution": forced }), status)?;
    if failed > 0 {
        return Err(CliError::Acceptance(failed));
    }
    Ok(())
}
