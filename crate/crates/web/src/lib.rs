//! Browser bindings: a few cheap solves on coarse grids, returned as JSON.

use kppflow::cell::{solve_cell_problem, CellOptions};
use kppflow::flow::{FlowField, Mode};
use kppflow::limits::{limit_report, shear_profile_of};
use kppflow::speed::{minimal_speed, ReactionSpec, SpeedOptions};
use kppflow::torus::make_grid;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const E1: [f64; 2] = [1.0, 0.0];
const GAMMA_LAMBDAS: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

#[derive(Serialize)]
struct Limits {
    speed_limit: f64,
    diffusivity_limit: f64,
    small_f_coefficient: f64,
    large_f_limit: f64,
    gamma_sup: f64,
    gamma_finite: String,
    gamma_curve: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct Diffusivity {
    d_e: f64,
    d_e_over_a2: f64,
    residual: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct Speed {
    c_star: f64,
    c_star_over_a: f64,
    lambda_star: f64,
    evaluations: usize,
}

fn check_resolution(n: usize) -> Result<(), String> {
    if !matches!(n, 16 | 32 | 64) {
        return Err(format!("resolution {n} not offered here; use 16, 32 or 64"));
    }
    Ok(())
}

/// `α(y) = Σ coeffs[k-1] sin(2πky)` along the first axis.
fn shear_flow(n: usize, sines: &[f64]) -> Result<FlowField, String> {
    let grid = make_grid(2, &[n, n]).map_err(|e| e.to_string())?;
    let modes: Vec<Mode> = sines
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(k, &a)| Mode::sine(vec![k as i64 + 1], a))
        .collect();
    if modes.is_empty() {
        return Err("shear profile needs a nonzero sine coefficient".into());
    }
    FlowField::shear(&grid, &modes, 0).map_err(|e| e.to_string())
}

fn flow(kind: &str, n: usize) -> Result<FlowField, String> {
    check_resolution(n)?;
    match kind {
        "shear" => shear_flow(n, &[1.0]),
        "cellular" => {
            let grid = make_grid(2, &[n, n]).map_err(|e| e.to_string())?;
            FlowField::cellular(&grid).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown flow '{other}'")),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain numeric record")
}

pub fn shear_limits_json(sines: &[f64], fprime0: f64) -> Result<String, String> {
    if !(fprime0 > 0.0 && fprime0.is_finite()) {
        return Err(format!("f'(0) must be positive, got {fprime0}"));
    }
    let u = shear_flow(64, sines)?;
    let profile = shear_profile_of(&u).map_err(|e| e.to_string())?;
    let r = limit_report(profile, &E1, fprime0, &GAMMA_LAMBDAS).map_err(|e| e.to_string())?;
    Ok(to_json(&Limits {
        speed_limit: r.speed_limit,
        diffusivity_limit: r.diffusivity_limit,
        small_f_coefficient: r.small_f_coefficient,
        large_f_limit: r.large_f_limit,
        gamma_sup: r.gamma.value,
        gamma_finite: format!("{:?}", r.gamma.finite).to_lowercase(),
        gamma_curve: r.gamma_curve,
    }))
}

pub fn cell_diffusivity_json(kind: &str, amplitude: f64, n: usize) -> Result<String, String> {
    let u = flow(kind, n)?;
    let s = solve_cell_problem(&u, &E1, amplitude, &CellOptions::default()).map_err(|e| e.to_string())?;
    Ok(to_json(&Diffusivity {
        d_e: s.d_e,
        d_e_over_a2: s.d_e / (amplitude * amplitude),
        residual: s.residual,
        iterations: s.iterations,
    }))
}

pub fn minimal_speed_json(kind: &str, amplitude: f64, fprime0: f64, n: usize) -> Result<String, String> {
    let u = flow(kind, n)?;
    let r = minimal_speed(&u, &E1, amplitude, &ReactionSpec::fisher(fprime0), &SpeedOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(to_json(&Speed {
        c_star: r.c_star,
        c_star_over_a: r.c_star / amplitude,
        lambda_star: r.lambda_star,
        evaluations: r.evaluations,
    }))
}

/// Large-amplitude limits for a shear profile given by its sine coefficients.
#[wasm_bindgen]
pub fn shear_limits(sines: &[f64], fprime0: f64) -> Result<String, JsValue> {
    shear_limits_json(sines, fprime0).map_err(|e| JsValue::from_str(&e))
}

/// Effective diffusivity along the first axis for `"shear"` or `"cellular"`.
#[wasm_bindgen]
pub fn cell_diffusivity(kind: &str, amplitude: f64, n: usize) -> Result<String, JsValue> {
    cell_diffusivity_json(kind, amplitude, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn front_speed(kind: &str, amplitude: f64, fprime0: f64, n: usize) -> Result<String, JsValue> {
    minimal_speed_json(kind, amplitude, fprime0, n).map_err(|e| JsValue::from_str(&e))
}
