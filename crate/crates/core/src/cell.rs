//! Corrector (cell) problem `-Δψ + A u·∇ψ = u·e` for the rescaled corrector
//! `ψ_A = χ_{e,A}/A`, and the effective diffusivity `D_e(A) = 1 + A²‖∇ψ_A‖₂²`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowField, TransportOperator};
use crate::krylov::{gmres, GmresOptions};
use crate::torus::{dot, make_grid, Grid, ScalarField};

#[derive(Clone, Debug)]
pub struct CellOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Retry once on a doubled grid when GMRES stagnates.
    pub refine_on_stall: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            tol: 1e-10,
            max_iter: 4000,
            restart: 200,
            refine_on_stall: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    /// Mean-zero rescaled corrector.
    pub psi: ScalarField,
    pub amplitude: f64,
    pub direction: Vec<f64>,
    /// Relative residual `‖u·e − Lψ‖₂ / ‖u·e‖₂`.
    pub residual: f64,
    pub d_e: f64,
    /// `‖u·∇ψ‖₂`.
    pub first_integral_residual: f64,
    pub iterations: usize,
    /// True when the solve was repeated on a doubled grid.
    pub refined: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffusivityIdentities {
    /// `|‖∇ψ‖² − ∫(u·e)ψ| / ‖∇ψ‖²`, absolute when `∇ψ = 0`.
    pub id22_residual: f64,
    /// `|D_e/A² − 1/A² − ∫(u·e)ψ|`.
    pub id24_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub amplitude: f64,
    pub d_e: f64,
    pub d_e_over_a2: f64,
    pub residual: f64,
    pub first_integral_residual: f64,
}

#[derive(Clone, Debug)]
pub struct DiffusivitySweep {
    pub points: Vec<SweepPoint>,
    pub solutions: Vec<CellSolution>,
    /// `D_e/A²` strictly decreasing along the sweep.
    pub decreasing: bool,
}

#[derive(Clone, Debug)]
pub struct CorrectorLimit {
    /// Corrector at the largest amplitude.
    pub w0_estimate: ScalarField,
    /// `(A, ‖ψ_A − w0‖_{H¹})`.
    pub h1_distance: Vec<(f64, f64)>,
    /// `(A, ‖u·∇ψ_A‖₂)`.
    pub first_integral_decay: Vec<(f64, f64)>,
}

pub(crate) fn check_direction(e: &[f64], dim: usize) -> Result<()> {
    let len = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if e.len() != dim || (len - 1.0).abs() > 1e-12 {
        return Err(Error::Direction(len));
    }
    Ok(())
}

/// The discrete cell operator `z ↦ -Δz + A P(u·∇z)` on grid samples.
pub struct CellOperator {
    transport: TransportOperator,
    amplitude: f64,
}

impl CellOperator {
    pub fn new(flow: &FlowField, amplitude: f64) -> CellOperator {
        let e = vec![0.0; flow.grid().dim()];
        CellOperator {
            transport: TransportOperator::new(flow, &e),
            amplitude,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.transport.grid()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let hat = grid.forward(z);
        let adv = self.transport.apply(&hat, self.amplitude, 0.0, None);
        let out = hat
            .iter()
            .zip(grid.ksq())
            .zip(adv)
            .map(|((c, k2), a)| c * *k2 + a)
            .collect();
        grid.inverse_real(out)
    }

    /// Mean-zero inverse Laplacian.
    pub fn precondition(&self, v: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let hat = grid
            .forward(v)
            .into_iter()
            .zip(grid.ksq())
            .map(|(c, &k2)| if k2 > 0.0 { c / k2 } else { Complex64::new(0.0, 0.0) })
            .collect();
        grid.inverse_real(hat)
    }
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

pub fn solve_cell_problem(
    flow: &FlowField,
    e: &[f64],
    amplitude: f64,
    opts: &CellOptions,
) -> Result<CellSolution> {
    check_direction(e, flow.grid().dim())?;
    if !(opts.tol > 0.0 && opts.tol <= 1e-4) {
        return Err(Error::InvalidArgument(format!("tolerance {} outside (0, 1e-4]", opts.tol)));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("amplitude {amplitude} must be non-negative")));
    }
    match solve_on_grid(flow, e, amplitude, opts) {
        Ok(sol) => Ok(sol),
        Err(Error::NotConverged { .. }) if opts.refine_on_stall => {
            let shape: Vec<usize> = flow.grid().shape().iter().map(|&n| (2 * n).min(4096)).collect();
            let fine = make_grid(flow.grid().dim(), &shape)?;
            let fine_flow = flow.resample(&fine)?;
            let mut sol = solve_on_grid(&fine_flow, e, amplitude, opts)?;
            sol.refined = true;
            Ok(sol)
        }
        Err(err) => Err(err),
    }
}

fn solve_on_grid(flow: &FlowField, e: &[f64], amplitude: f64, opts: &CellOptions) -> Result<CellSolution> {
    let grid = flow.grid();
    let rhs = flow.along(e);
    let op = CellOperator::new(flow, amplitude);
    let gopts = GmresOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        restart: opts.restart,
        ..GmresOptions::default()
    };
    let out = gmres(
        |z| {
            let mut r = op.apply(z);
            remove_mean(&mut r);
            r
        },
        |v| op.precondition(v),
        rhs.values(),
        None,
        &gopts,
    );
    let mut x = out.x;
    remove_mean(&mut x);
    if !out.converged {
        return Err(Error::NotConverged {
            solver: "cell problem GMRES",
            iterations: out.iterations,
            residual: out.residual,
            best: Some(x),
        });
    }
    let psi = ScalarField::from_raw(grid, x);
    let fi = flow.advect(&psi)?.l2_norm();
    let grad2 = psi.h1_seminorm().powi(2);
    Ok(CellSolution {
        d_e: 1.0 + amplitude * amplitude * grad2,
        psi,
        amplitude,
        direction: e.to_vec(),
        residual: out.residual,
        first_integral_residual: fi,
        iterations: out.iterations,
        refined: false,
    })
}

pub fn diffusivity_identity_check(sol: &CellSolution, flow: &FlowField) -> Result<DiffusivityIdentities> {
    let flow = if flow.grid() == sol.psi.grid() {
        flow.clone()
    } else {
        flow.resample(sol.psi.grid())?
    };
    let ue = flow.along(&sol.direction);
    let grad2 = sol.psi.h1_seminorm().powi(2);
    let work = dot(ue.values(), sol.psi.values());
    let id22 = if grad2 > 0.0 {
        (grad2 - work).abs() / grad2
    } else {
        (grad2 - work).abs()
    };
    let id24 = if sol.amplitude > 0.0 {
        let a2 = sol.amplitude * sol.amplitude;
        (sol.d_e / a2 - 1.0 / a2 - work).abs()
    } else {
        0.0
    };
    Ok(DiffusivityIdentities {
        id22_residual: id22,
        id24_residual: id24,
    })
}

pub(crate) fn check_amplitudes(amplitudes: &[f64]) -> Result<()> {
    if amplitudes.is_empty() {
        return Err(Error::InvalidArgument("empty amplitude list".into()));
    }
    if amplitudes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument("amplitudes must be positive".into()));
    }
    if amplitudes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("amplitudes must be increasing".into()));
    }
    Ok(())
}


/// Cell solutions for an increasing list of amplitudes, solved concurrently.
pub fn diffusivity_sweep(
    flow: &FlowField,
    e: &[f64],
    amplitudes: &[f64],
    opts: &CellOptions,
) -> Result<DiffusivitySweep> {
    check_amplitudes(amplitudes)?;
    let solutions = amplitudes
        .par_iter()
        .map(|&a| solve_cell_problem(flow, e, a, opts).map_err(|err| err.at_amplitude(a)))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<SweepPoint> = solutions
        .iter()
        .map(|s| SweepPoint {
            amplitude: s.amplitude,
            d_e: s.d_e,
            d_e_over_a2: s.d_e / (s.amplitude * s.amplitude),
            residual: s.residual,
            first_integral_residual: s.first_integral_residual,
        })
        .collect();
    let decreasing = points.windows(2).all(|w| w[1].d_e_over_a2 < w[0].d_e_over_a2);
    Ok(DiffusivitySweep {
        points,
        solutions,
        decreasing,
    })
}

/// Uses the largest-amplitude corrector as the estimate of the limit `w0`.
pub fn corrector_limit_estimate(sweep: &DiffusivitySweep) -> Result<CorrectorLimit> {
    if sweep.solutions.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} amplitudes in sweep, need at least 3",
            sweep.solutions.len()
        )));
    }
    let last = sweep.solutions.last().unwrap();
    let w0 = last.psi.clone();
    let mut h1_distance = Vec::new();
    let mut decay = Vec::new();
    for s in &sweep.solutions {
        let psi = s.psi.resample(w0.grid())?;
        h1_distance.push((s.amplitude, psi.sub(&w0)?.h1_norm()));
        decay.push((s.amplitude, s.first_integral_residual));
    }
    Ok(CorrectorLimit {
        w0_estimate: w0,
        h1_distance,
        first_integral_decay: decay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Mode;
    use crate::torus::POINCARE_CONSTANT;
    use std::f64::consts::PI;

    fn sin_shear(n: usize) -> FlowField {
        let g = make_grid(2, &[n, n]).unwrap();
        FlowField::shear(&g, &[Mode::sine(vec![1], 1.0)], 0).unwrap()
    }

    #[test]
    fn zero_flow_gives_unit_diffusivity() {
        let g = make_grid(2, &[16, 16]).unwrap();
        let u = FlowField::zero(&g);
        for a in [0.0, 3.0, 100.0] {
            let s = solve_cell_problem(&u, &[1.0, 0.0], a, &CellOptions::default()).unwrap();
            assert_eq!(s.psi.l2_norm(), 0.0);
            assert_eq!(s.d_e, 1.0);
            let id = diffusivity_identity_check(&s, &u).unwrap();
            assert_eq!(id.id22_residual, 0.0);
            assert_eq!(id.id24_residual, 0.0);
        }
    }

    #[test]
    fn shear_corrector_is_inverse_laplacian_of_profile() {
        let u = sin_shear(32);
        for a in [1.0, 10.0, 100.0] {
            let s = solve_cell_problem(&u, &[1.0, 0.0], a, &CellOptions::default()).unwrap();
            let g = u.grid();
            for i in 0..g.len() {
                let expect = (2.0 * PI * g.point(i)[1]).sin() / (4.0 * PI * PI);
                assert!((s.psi.values()[i] - expect).abs() < 1e-12);
            }
            let exact = 1.0 + a * a / (8.0 * PI * PI);
            assert!(((s.d_e - exact) / exact).abs() < 1e-10);
            let id = diffusivity_identity_check(&s, &u).unwrap();
            assert!(id.id22_residual <= 1e-9 && id.id24_residual <= 1e-9);
        }
    }

    #[test]
    fn transverse_direction_sees_no_enhancement() {
        let u = sin_shear(16);
        let s = solve_cell_problem(&u, &[0.0, 1.0], 50.0, &CellOptions::default()).unwrap();
        assert!((s.d_e - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let u = sin_shear(16);
        assert!(matches!(
            solve_cell_problem(&u, &[1.0, 1.0], 1.0, &CellOptions::default()),
            Err(Error::Direction(_))
        ));
        let opts = CellOptions { tol: 1e-3, ..Default::default() };
        assert!(solve_cell_problem(&u, &[1.0, 0.0], 1.0, &opts).is_err());
    }

    #[test]
    fn perturbed_corrector_breaks_energy_identity() {
        let u = sin_shear(32);
        let mut s = solve_cell_problem(&u, &[1.0, 0.0], 10.0, &CellOptions::default()).unwrap();
        let bump = ScalarField::from_fn(u.grid(), |x| 0.1 * (2.0 * PI * x[0]).sin());
        s.psi = s.psi.add(&bump).unwrap();
        let id = diffusivity_identity_check(&s, &u).unwrap();
        assert!(id.id22_residual > 1e-3);
    }

    #[test]
    fn cellular_solution_satisfies_identities_and_bounds() {
        let g = make_grid(2, &[64, 64]).unwrap();
        let u = FlowField::cellular(&g).unwrap();
        let e = [1.0, 0.0];
        let opts = CellOptions::default();
        let s = solve_cell_problem(&u, &e, 8.0, &opts).unwrap();
        assert!(s.residual <= opts.tol);
        assert!(s.psi.mean().abs() <= 1e-12);
        assert!(s.d_e >= 1.0);
        let id = diffusivity_identity_check(&s, &u).unwrap();
        assert!(id.id22_residual <= 10.0 * opts.tol, "{id:?}");
        assert!(id.id24_residual <= 10.0 * opts.tol, "{id:?}");
        // ‖ψ‖_{H¹} ≤ C‖u·e‖₂ with C = √(1 + C_P²)·C_P from the energy identity.
        let ue = u.along(&e).l2_norm();
        let bound = POINCARE_CONSTANT * (1.0 + POINCARE_CONSTANT.powi(2)).sqrt() * ue;
        assert!(s.psi.h1_norm() <= 1.05 * bound);
    }

    #[test]
    fn sweep_of_shear_flow_and_limit() {
        let u = sin_shear(32);
        let sweep = diffusivity_sweep(&u, &[1.0, 0.0], &[1.0, 10.0, 100.0], &CellOptions::default()).unwrap();
        let delta = 1.0 / (8.0 * PI * PI);
        for p in &sweep.points {
            let expect = 1.0 / (p.amplitude * p.amplitude) + delta;
            assert!(((p.d_e_over_a2 - expect) / expect).abs() < 1e-10);
        }
        assert!(sweep.decreasing);
        let lim = corrector_limit_estimate(&sweep).unwrap();
        assert!(lim.h1_distance.iter().all(|&(_, d)| d < 1e-11));
        assert!(diffusivity_sweep(&u, &[1.0, 10.0, 5.0], &[1.0, 0.0], &CellOptions::default()).is_err());
    }

    #[test]
    fn zero_flow_sweep() {
        let g = make_grid(2, &[16, 16]).unwrap();
        let u = FlowField::zero(&g);
        let sweep = diffusivity_sweep(&u, &[1.0, 0.0], &[1.0, 2.0, 4.0], &CellOptions::default()).unwrap();
        for p in &sweep.points {
            assert_eq!(p.d_e_over_a2, 1.0 / (p.amplitude * p.amplitude));
        }
        let lim = corrector_limit_estimate(&sweep).unwrap();
        assert_eq!(lim.w0_estimate.l2_norm(), 0.0);
        let short = DiffusivitySweep { points: vec![], solutions: sweep.solutions[..2].to_vec(), decreasing: true };
        assert!(matches!(corrector_limit_estimate(&short), Err(Error::InsufficientData(_))));
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::flow::random_unit_flow;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn identities_hold_for_random_flows(seed in any::<u64>(), amplitude in 0.5f64..20.0) {
            let g = make_grid(2, &[16, 16]).unwrap();
            let u = random_unit_flow(&g, seed);
            prop_assume!(u.is_some());
            let u = u.unwrap();
            let opts = CellOptions::default();
            let sol = solve_cell_problem(&u, &[1.0, 0.0], amplitude, &opts).unwrap();
            prop_assert!(sol.psi.mean().abs() <= 1e-12);
            prop_assert!(sol.residual <= opts.tol);
            prop_assert!(sol.d_e >= 1.0);
            let ids = diffusivity_identity_check(&sol, &u).unwrap();
            prop_assert!(ids.id22_residual <= 10.0 * opts.tol);
            prop_assert!(ids.id24_residual <= 10.0 * opts.tol);
        }
    }
}
