//! Principal eigenpair of the rescaled KPP operator
//!
//! `Lφ = Δφ − A u·∇φ − (2λ/A) e·∇φ + λ(u·e)φ = κ φ`,
//!
//! computed by shifted inverse iteration. The first shifts sit above the
//! potential bound `λ max(u·e)`, where the resolvent is positive, so the
//! iteration is steered into the principal pair before Rayleigh-quotient
//! shifts accelerate it.

use num_complex::Complex64;
use serde::Serialize;

use crate::cell::check_direction;
use crate::error::{Error, Result};
use crate::flow::{FlowField, TransportOperator};
use crate::krylov::{gmres, GmresOptions};
use crate::torus::{dot, Grid, ScalarField};

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Target for `‖Lφ − κφ‖₂ / (1 + |κ|)` with `‖φ‖₂ = 1`.
    pub tol: f64,
    /// Outer inverse-iteration steps.
    pub max_iter: usize,
    /// Loosest inner GMRES relative tolerance.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub restart: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-10,
            max_iter: 100,
            inner_tol: 1e-4,
            inner_max_iter: 600,
            restart: 150,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenResult {
    pub kappa: f64,
    /// Positive, `‖φ‖₂ = 1`.
    pub phi: ScalarField,
    pub lambda: f64,
    pub amplitude: f64,
    pub residual: f64,
    /// `(λ/A)² + κ`.
    pub mu: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenIdentities {
    /// `|‖∇ ln φ‖₂² − κ|`.
    pub id35_residual: f64,
    /// `|κ + ‖∇φ‖₂² − λ∫(u·e)φ²|`.
    pub id36_residual: f64,
}

#[derive(Clone, Debug)]
pub struct MuCurve {
    /// `(λ, μ(λ; A))`.
    pub points: Vec<(f64, f64)>,
    pub results: Vec<EigenResult>,
    pub convex: bool,
    pub increasing: bool,
}

/// The discrete operator `L` on grid samples.
pub struct EigenOperator {
    transport: TransportOperator,
    amplitude: f64,
    lambda: f64,
    /// `(2λ/A) 2π k·e` per spectral slot.
    drift: Vec<f64>,
}

impl EigenOperator {
    pub fn new(flow: &FlowField, e: &[f64], amplitude: f64, lambda: f64) -> EigenOperator {
        let grid = flow.grid();
        let c = 2.0 * lambda / amplitude;
        let drift = (0..grid.len())
            .map(|i| {
                c * e
                    .iter()
                    .enumerate()
                    .map(|(a, ea)| ea * grid.deriv(a)[i])
                    .sum::<f64>()
            })
            .collect();
        EigenOperator {
            transport: TransportOperator::new(flow, e),
            amplitude,
            lambda,
            drift,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.transport.grid()
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let hat = grid.forward(phi);
        let tr = self
            .transport
            .apply(&hat, -self.amplitude, self.lambda, None);
        let out = hat
            .iter()
            .zip(grid.ksq())
            .zip(&self.drift)
            .zip(tr)
            .map(|(((c, k2), d), t)| -c * *k2 - Complex64::new(0.0, *d) * c + t)
            .collect();
        grid.inverse_real(out)
    }

    /// Approximate inverse of `σ − L` that keeps the diffusion and drift.
    fn precondition(&self, sigma: f64, v: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let c0 = sigma.max(1.0);
        let hat = grid
            .forward(v)
            .into_iter()
            .zip(grid.ksq())
            .zip(&self.drift)
            .map(|((c, k2), d)| c / Complex64::new(c0 + k2, *d))
            .collect();
        grid.inverse_real(hat)
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    let s = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.iter_mut().for_each(|x| *x *= s / n);
    n
}

/// Rayleigh quotient and residual of a unit vector.
fn rayleigh(op: &EigenOperator, phi: &[f64]) -> (f64, f64) {
    let lphi = op.apply(phi);
    let kappa = dot(&lphi, phi);
    let r: f64 = lphi
        .iter()
        .zip(phi)
        .map(|(l, p)| (l - kappa * p).powi(2))
        .sum::<f64>()
        / phi.len() as f64;
    (kappa, r.sqrt())
}

fn validate_inputs(flow: &FlowField, e: &[f64], amplitude: f64, lambda: f64) -> Result<()> {
    check_direction(e, flow.grid().dim())?;
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("amplitude {amplitude} must be positive")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be non-negative")));
    }
    Ok(())
}

pub fn principal_eigenpair(
    flow: &FlowField,
    e: &[f64],
    amplitude: f64,
    lambda: f64,
    opts: &EigenOptions,
) -> Result<EigenResult> {
    principal_eigenpair_from(flow, e, amplitude, lambda, None, opts)
}

/// As [`principal_eigenpair`], starting from `guess` (e.g. the eigenfunction
/// at a nearby `λ`). A failed warm start is retried from the constant.
pub fn principal_eigenpair_from(
    flow: &FlowField,
    e: &[f64],
    amplitude: f64,
    lambda: f64,
    guess: Option<&ScalarField>,
    opts: &EigenOptions,
) -> Result<EigenResult> {
    validate_inputs(flow, e, amplitude, lambda)?;
    match inverse_iteration(flow, e, amplitude, lambda, guess, opts) {
        Err(Error::NotConverged { .. } | Error::NotPrincipal { .. }) if guess.is_some() => {
            inverse_iteration(flow, e, amplitude, lambda, None, opts)
        }
        r => r,
    }
}

fn inverse_iteration(
    flow: &FlowField,
    e: &[f64],
    amplitude: f64,
    lambda: f64,
    guess: Option<&ScalarField>,
    opts: &EigenOptions,
) -> Result<EigenResult> {
    let grid = flow.grid();
    let trivial = |kappa: f64| EigenResult {
        kappa,
        phi: ScalarField::constant(grid, 1.0),
        lambda,
        amplitude,
        residual: 0.0,
        mu: (lambda / amplitude).powi(2) + kappa,
        iterations: 0,
    };
    if lambda == 0.0 || flow.is_zero() {
        return Ok(trivial(0.0));
    }

    let op = EigenOperator::new(flow, e, amplitude, lambda);
    let upper = lambda * flow.max_along(e);
    let mut phi: Vec<f64> = match guess {
        Some(g) if g.grid() == grid && g.min() > 0.0 => g.values().to_vec(),
        _ => vec![1.0; grid.len()],
    };
    normalize(&mut phi);
    let (mut kappa, mut residual) = rayleigh(&op, &phi);
    let inner = GmresOptions {
        tol: opts.inner_tol,
        max_iter: opts.inner_max_iter,
        restart: opts.restart,
        ..GmresOptions::default()
    };
    // Safe shifts until the iterate is close enough for Rayleigh shifts. A
    // Rayleigh step whose inner solve fails or that raises the residual sends
    // the iteration back to safe shifts for good.
    let mut safe = true;
    let mut rayleigh_ok = true;
    let mut iterations = 0;
    let target = |k: f64| opts.tol * (1.0 + k.abs());
    let mut stagnant = 0;
    while residual > target(kappa) && iterations < opts.max_iter && stagnant < 3 {
        if safe && rayleigh_ok && residual < 1e-3 * (1.0 + kappa.abs()) {
            safe = false;
        }
        let sigma = if safe {
            upper + 1.0
        } else {
            kappa + residual.max(1e-3 * (1.0 + kappa.abs()))
        };
        // An inner error τ perturbs the eigen residual by about τ (σ − κ).
        let inner = GmresOptions {
            tol: (0.1 * target(kappa) / (sigma - kappa).abs().max(1e-300)).clamp(1e-13, opts.inner_tol),
            ..inner.clone()
        };
        let out = gmres(
            |x| {
                let lx = op.apply(x);
                x.iter().zip(lx).map(|(xi, li)| sigma * xi - li).collect()
            },
            |v| op.precondition(sigma, v),
            &phi,
            Some(phi.clone()),
            &inner,
        );
        iterations += 1;
        let mut next = out.x;
        if next.iter().any(|v| !v.is_finite()) || dot(&next, &next) == 0.0 {
            if safe {
                break;
            }
            safe = true;
            rayleigh_ok = false;
            continue;
        }
        normalize(&mut next);
        let (k, r) = rayleigh(&op, &next);
        if !safe && (r > 10.0 * residual || out.residual > 0.1) {
            safe = true;
            rayleigh_ok = false;
            stagnant = 0;
            continue;
        }
        let slow = if safe { 0.95 } else { 0.5 };
        stagnant = if r > slow * residual { stagnant + 1 } else { 0 };
        phi = next;
        kappa = k;
        residual = r;
    }

    if residual > target(kappa) {
        return Err(Error::NotConverged {
            solver: "principal eigenpair inverse iteration",
            iterations,
            residual,
            best: Some(phi),
        });
    }
    let phi = ScalarField::from_raw(grid, phi);
    let (lo, hi) = (phi.min(), phi.max());
    if lo <= 0.0 {
        return Err(Error::NotPrincipal { ratio: lo / hi });
    }
    Ok(EigenResult {
        kappa,
        phi,
        lambda,
        amplitude,
        residual,
        mu: (lambda / amplitude).powi(2) + kappa,
        iterations,
    })
}

pub fn eigen_identities(res: &EigenResult, flow: &FlowField, e: &[f64]) -> Result<EigenIdentities> {
    let phi = &res.phi;
    if phi.min() <= 0.0 {
        return Err(Error::InvalidArgument("eigenfunction is not strictly positive".into()));
    }
    let flow = if flow.grid() == phi.grid() {
        flow.clone()
    } else {
        flow.resample(phi.grid())?
    };
    let grad = phi.gradient();
    let mut log_energy = 0.0;
    for c in grad.components() {
        log_energy += c
            .values()
            .iter()
            .zip(phi.values())
            .map(|(g, p)| (g / p).powi(2))
            .sum::<f64>();
    }
    log_energy /= phi.grid().len() as f64;
    let potential = flow.along(e).dealiased_mul(phi)?.l2_inner(phi)?;
    let grad2 = phi.h1_seminorm().powi(2);
    Ok(EigenIdentities {
        id35_residual: (log_energy - res.kappa).abs(),
        id36_residual: (res.kappa + grad2 - res.lambda * potential).abs(),
    })
}

/// `μ(λ; A)` on an increasing λ list starting at 0, warm-starting each solve
/// from the previous eigenfunction.
pub fn mu_curve(
    flow: &FlowField,
    e: &[f64],
    amplitude: f64,
    lambdas: &[f64],
    opts: &EigenOptions,
) -> Result<MuCurve> {
    if lambdas.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("lambda list must start at 0".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("lambda list must be increasing".into()));
    }
    let mut results: Vec<EigenResult> = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let guess = results.last().map(|r| &r.phi);
        results.push(principal_eigenpair_from(flow, e, amplitude, l, guess, opts)?);
    }
    let points: Vec<(f64, f64)> = results.iter().map(|r| (r.lambda, r.mu)).collect();
    let increasing = points.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-8);
    let convex = points.windows(3).all(|w| {
        let (l0, m0) = w[0];
        let (l1, m1) = w[1];
        let (l2, m2) = w[2];
        (m2 - m1) / (l2 - l1) - (m1 - m0) / (l1 - l0) >= -1e-8
    });
    Ok(MuCurve {
        points,
        results,
        convex,
        increasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Mode;
    use crate::torus::make_grid;

    fn sin_shear(n: usize) -> FlowField {
        let g = make_grid(2, &[n, n]).unwrap();
        FlowField::shear(&g, &[Mode::sine(vec![1], 1.0)], 0).unwrap()
    }

    #[test]
    fn trivial_cases() {
        let u = sin_shear(16);
        let r = principal_eigenpair(&u, &[1.0, 0.0], 5.0, 0.0, &EigenOptions::default()).unwrap();
        assert_eq!(r.kappa, 0.0);
        assert!(r.phi.values().iter().all(|&v| v == 1.0));
        let id = eigen_identities(&r, &u, &[1.0, 0.0]).unwrap();
        assert_eq!(id.id35_residual, 0.0);
        assert_eq!(id.id36_residual, 0.0);

        let z = FlowField::zero(u.grid());
        let r = principal_eigenpair(&z, &[1.0, 0.0], 3.0, 2.0, &EigenOptions::default()).unwrap();
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.mu, 4.0 / 9.0);
    }

    #[test]
    fn zero_flow_mu_is_lambda_squared() {
        let z = FlowField::zero(&make_grid(2, &[16, 16]).unwrap());
        let c = mu_curve(&z, &[1.0, 0.0], 1.0, &[0.0, 0.5, 1.0, 3.0], &EigenOptions::default()).unwrap();
        for (l, m) in &c.points {
            assert_eq!(*m, l * l);
        }
        assert!(c.convex && c.increasing);
    }

    #[test]
    fn rejects_bad_inputs() {
        let u = sin_shear(16);
        let o = EigenOptions::default();
        assert!(principal_eigenpair(&u, &[1.0, 0.0], 0.0, 1.0, &o).is_err());
        assert!(principal_eigenpair(&u, &[1.0, 0.0], 1.0, -1.0, &o).is_err());
        assert!(principal_eigenpair(&u, &[0.6, 0.6], 1.0, 1.0, &o).is_err());
        assert!(mu_curve(&u, &[1.0, 0.0], 1.0, &[0.5, 1.0], &o).is_err());
    }

    #[test]
    fn shear_kappa_is_amplitude_independent() {
        let u = sin_shear(64);
        let o = EigenOptions::default();
        let a = principal_eigenpair(&u, &[1.0, 0.0], 10.0, 1.0, &o).unwrap();
        let b = principal_eigenpair(&u, &[1.0, 0.0], 100.0, 1.0, &o).unwrap();
        assert!((a.kappa - b.kappa).abs() <= 1e-8);
        assert!(a.kappa > 0.0 && a.kappa <= 1.0 + 1e-8);
        // Second-order perturbation theory: κ ≈ λ²/(8π²).
        let pert = 1.0 / (8.0 * std::f64::consts::PI.powi(2));
        assert!((a.kappa - pert).abs() < 0.1 * pert);
    }

    #[test]
    fn identities_hold_and_detect_perturbations() {
        let u = sin_shear(32);
        let e = [1.0, 0.0];
        let o = EigenOptions::default();
        let mut r = principal_eigenpair(&u, &e, 10.0, 1.0, &o).unwrap();
        let id = eigen_identities(&r, &u, &e).unwrap();
        assert!(id.id35_residual <= 10.0 * o.tol, "{id:?}");
        assert!(id.id36_residual <= 10.0 * o.tol, "{id:?}");

        let bump = ScalarField::from_fn(u.grid(), |x| 0.05 * (2.0 * std::f64::consts::PI * x[1]).cos());
        r.phi = r.phi.add(&bump).unwrap();
        let id = eigen_identities(&r, &u, &e).unwrap();
        assert!(id.id36_residual >= 1e-3);
    }

    #[test]
    fn cellular_eigenpair_is_principal() {
        let g = make_grid(2, &[32, 32]).unwrap();
        let u = FlowField::cellular(&g).unwrap();
        let e = [1.0, 0.0];
        let o = EigenOptions::default();
        let r = principal_eigenpair(&u, &e, 8.0, 2.0, &o).unwrap();
        assert!(r.phi.min() > 0.0);
        assert!((r.phi.l2_norm() - 1.0).abs() <= 1e-10);
        assert!(r.kappa >= -1e-9 && r.kappa <= 2.0 * u.max_along(&e) + 1e-8);
        let id = eigen_identities(&r, &u, &e).unwrap();
        assert!(id.id35_residual <= 10.0 * o.tol && id.id36_residual <= 10.0 * o.tol, "{id:?}");
    }

    #[test]
    fn shear_mu_curve_is_convex() {
        let u = sin_shear(32);
        let c = mu_curve(&u, &[1.0, 0.0], 10.0, &[0.0, 0.5, 1.0, 2.0, 4.0], &EigenOptions::default()).unwrap();
        assert!(c.convex && c.increasing);
        assert_eq!(c.points[0], (0.0, 0.0));
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::torus::make_grid;
    use crate::flow::random_unit_flow;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn principal_pair_is_positive_and_consistent(
            seed in any::<u64>(),
            amplitude in 0.5f64..8.0,
            lambda in 0.1f64..3.0,
        ) {
            let g = make_grid(2, &[32, 32]).unwrap();
            let u = random_unit_flow(&g, seed);
            prop_assume!(u.is_some());
            let u = u.unwrap();
            let opts = EigenOptions::default();
            let r = principal_eigenpair(&u, &[1.0, 0.0], amplitude, lambda, &opts).unwrap();
            prop_assert!(r.phi.min() > 0.0);
            prop_assert!(r.kappa >= -1e-10);
            let scale = 1.0 + r.kappa.abs();
            let ids = eigen_identities(&r, &u, &[1.0, 0.0]).unwrap();
            prop_assert!(ids.id35_residual <= 10.0 * opts.tol * scale);
            prop_assert!(ids.id36_residual <= 10.0 * opts.tol * scale);
        }
    }
}
