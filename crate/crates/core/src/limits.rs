//! Large-amplitude limits for shear flows `u = α(x′) e_axis`, where the
//! asymptotic variational problems reduce to the transverse torus, and
//! extrapolation diagnostics for general flows.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::DiffusivitySweep;
use crate::error::{Error, Result};
use crate::flow::{FlowField, ShearProfile};
use crate::krylov::{gmres, GmresOptions};
use crate::minimize::minimize_positive;
use crate::speed::SpeedSweep;
use crate::torus::{dot, Grid, ScalarField};

/// Transverse grids up to this many points are solved densely.
pub const DENSE_LIMIT: usize = 1024;

/// Principal pair of `Δ′ + λα` on the transverse torus.
#[derive(Clone, Debug)]
pub struct TransverseEigen {
    pub kappa: f64,
    /// Positive, `‖w‖₂ = 1`.
    pub w0: ScalarField,
    /// `κ₁ − κ₂` when the full spectrum was computed.
    pub gap: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaFinite {
    Finite,
    Infinite,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaEstimate {
    /// Largest sampled `γ`, a lower bound for `Γ`.
    pub value: f64,
    pub finite: GammaFinite,
    /// Largest `λ` sampled.
    pub lambda_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GammaRoot {
    Found { lambda: f64, gamma: f64 },
    /// `f′(0)` exceeds every sampled `γ`.
    NotAttained { gamma_estimate: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedLimitBranch {
    /// Infimum attained at a finite `λ`.
    Attained,
    /// Objective decreasing out to the search cap; value is `max e₁α`.
    LambdaToInfinity,
    /// `u·e ≡ 0`.
    Degenerate,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeedLimit {
    pub value: f64,
    pub lambda: Option<f64>,
    pub branch: SpeedLimitBranch,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    pub speed_limit: f64,
    pub speed_limit_branch: SpeedLimitBranch,
    pub diffusivity_limit: f64,
    pub small_f_coefficient: f64,
    pub large_f_limit: f64,
    pub max_ue: f64,
    #[serde(rename = "Gamma")]
    pub gamma: GammaEstimate,
    pub gamma_curve: Vec<(f64, f64)>,
    #[serde(skip)]
    pub w0: Option<ScalarField>,
}

/// Fourier second-derivative collocation matrix for `n` equispaced points on
/// a unit period (closed form, `n` even).
pub fn second_derivative_matrix(n: usize) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let scale = 4.0 * PI * PI;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            scale * (-PI * PI / (3.0 * h * h) - 1.0 / 6.0)
        } else {
            let d = i as i64 - j as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let s = (d as f64 * h / 2.0).sin();
            -scale * sign / (2.0 * s * s)
        }
    })
}

fn transverse_laplacian(shape: &[usize]) -> DMatrix<f64> {
    match shape {
        [n] => second_derivative_matrix(*n),
        [n0, n1] => {
            let d0 = second_derivative_matrix(*n0);
            let d1 = second_derivative_matrix(*n1);
            d0.kronecker(&DMatrix::identity(*n1, *n1)) + DMatrix::identity(*n0, *n0).kronecker(&d1)
        }
        _ => unreachable!("transverse grids have one or two axes"),
    }
}

fn check_profile(alpha: &ScalarField) -> Result<()> {
    let dim = alpha.grid().dim();
    if !(1..=2).contains(&dim) {
        return Err(Error::Dimension(dim));
    }
    let scale = alpha.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if alpha.mean().abs() > 1e-10 * scale.max(1.0) {
        return Err(Error::NonZeroMean {
            mean: alpha.mean(),
            tol: 1e-10 * scale.max(1.0),
        });
    }
    Ok(())
}

fn positive_unit(grid: &Grid, mut v: Vec<f64>) -> ScalarField {
    let n = dot(&v, &v).sqrt();
    let s = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    v.iter_mut().for_each(|x| *x *= s / n);
    ScalarField::from_raw(grid, v)
}

/// Principal eigenpair of `Δ′ + λα`. Dense symmetric solve up to
/// [`DENSE_LIMIT`] points, shifted inverse iteration above.
pub fn kappa_e_shear(alpha: &ScalarField, lambda: f64) -> Result<TransverseEigen> {
    check_profile(alpha)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be non-negative")));
    }
    let grid = alpha.grid();
    if lambda == 0.0 || alpha.values().iter().all(|&v| v == 0.0) {
        return Ok(TransverseEigen {
            kappa: 0.0,
            w0: ScalarField::constant(grid, 1.0),
            gap: None,
        });
    }
    if grid.len() <= DENSE_LIMIT {
        dense_transverse(alpha, lambda)
    } else {
        iterative_transverse(alpha, lambda)
    }
}

fn dense_transverse(alpha: &ScalarField, lambda: f64) -> Result<TransverseEigen> {
    let grid = alpha.grid();
    let mut m = transverse_laplacian(grid.shape());
    for (i, a) in alpha.values().iter().enumerate() {
        m[(i, i)] += lambda * a;
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let v: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    Ok(TransverseEigen {
        kappa: eig.eigenvalues[top],
        w0: positive_unit(grid, v),
        gap: order.get(1).map(|&s| eig.eigenvalues[top] - eig.eigenvalues[s]),
    })
}

fn iterative_transverse(alpha: &ScalarField, lambda: f64) -> Result<TransverseEigen> {
    let grid = alpha.grid();
    let apply = |w: &[f64]| -> Vec<f64> {
        let lap = ScalarField::from_raw(grid, w.to_vec()).laplacian();
        lap.values()
            .iter()
            .zip(w)
            .zip(alpha.values())
            .map(|((l, wi), a)| l + lambda * a * wi)
            .collect()
    };
    let rayleigh = |w: &[f64]| {
        let lw = apply(w);
        let k = dot(&lw, w);
        let r = lw.iter().zip(w).map(|(l, wi)| (l - k * wi).powi(2)).sum::<f64>() / w.len() as f64;
        (k, r.sqrt())
    };
    let upper = lambda * alpha.max();
    let mut w = positive_unit(grid, vec![1.0; grid.len()]).into_values();
    let (mut kappa, mut residual) = rayleigh(&w);
    let opts = GmresOptions { tol: 1e-8, ..GmresOptions::default() };
    let tol = 1e-11 * (1.0 + kappa.abs());
    let mut safe = true;
    let mut it = 0;
    while residual > tol && it < 200 {
        if safe && residual < 1e-3 * (1.0 + kappa.abs()) {
            safe = false;
        }
        let sigma = if safe { upper + 1.0 } else { kappa + residual.max(1e-3 * (1.0 + kappa.abs())) };
        let out = gmres(
            |x| apply(x).iter().zip(x).map(|(l, xi)| sigma * xi - l).collect(),
            |v| {
                let hat = grid
                    .forward(v)
                    .into_iter()
                    .zip(grid.ksq())
                    .map(|(c, k2)| c / (sigma.max(1.0) + k2))
                    .collect();
                grid.inverse_real(hat)
            },
            &w,
            Some(w.clone()),
            &opts,
        );
        it += 1;
        let next = positive_unit(grid, out.x).into_values();
        let (k, r) = rayleigh(&next);
        if !safe && r > 10.0 * residual {
            break;
        }
        w = next;
        kappa = k;
        residual = r;
    }
    if residual > 1e-8 * (1.0 + kappa.abs()) {
        return Err(Error::NotConverged {
            solver: "transverse inverse iteration",
            iterations: it,
            residual,
            best: Some(w),
        });
    }
    Ok(TransverseEigen {
        kappa,
        w0: ScalarField::from_raw(grid, w),
        gap: None,
    })
}

/// `u·e` restricted to the transverse torus, `e_axis α`.
pub fn effective_profile(profile: &ShearProfile, e: &[f64]) -> Result<ScalarField> {
    let ea = *e
        .get(profile.axis)
        .ok_or_else(|| Error::InvalidArgument("direction shorter than shear axis".into()))?;
    Ok(profile.alpha.scale(ea))
}

pub fn shear_profile_of(flow: &FlowField) -> Result<&ShearProfile> {
    flow.shear_profile()
        .ok_or_else(|| Error::Flow("limits require a shear flow".into()))
}

/// `inf_λ (f′(0) + κ_e(λ)) / λ` for the profile `e_axis α`.
pub fn speed_limit_shear(profile: &ShearProfile, e: &[f64], fprime0: f64) -> Result<SpeedLimit> {
    if !(fprime0 > 0.0 && fprime0.is_finite()) {
        return Err(Error::InvalidArgument(format!("f'(0) = {fprime0} must be positive")));
    }
    let beta = effective_profile(profile, e)?;
    if beta.values().iter().all(|&v| v == 0.0) {
        return Ok(SpeedLimit {
            value: 0.0,
            lambda: None,
            branch: SpeedLimitBranch::Degenerate,
        });
    }
    check_profile(&beta)?;
    let root = fprime0.sqrt();
    let found = minimize_positive(
        |l| Ok((fprime0 + kappa_e_shear(&beta, l)?.kappa) / l),
        1e-3 * root,
        10.0 * root,
        1e6 * root.max(1.0),
        1e-7,
    );
    match found {
        Ok(m) => Ok(SpeedLimit {
            value: m.value,
            lambda: Some(m.x),
            branch: SpeedLimitBranch::Attained,
        }),
        Err(Error::Bracket { .. }) => Ok(SpeedLimit {
            value: large_f_limit(profile, e)?,
            lambda: None,
            branch: SpeedLimitBranch::LambdaToInfinity,
        }),
        Err(err) => Err(err),
    }
}

/// `e_axis² ‖∇′(−Δ′)⁻¹α‖₂²` with maximiser `w0 = e_axis (−Δ′)⁻¹α`.
pub fn diffusivity_limit_shear(profile: &ShearProfile, e: &[f64]) -> Result<(f64, ScalarField)> {
    let beta = effective_profile(profile, e)?;
    check_profile(&beta)?;
    let w0 = beta.solve_poisson()?;
    Ok((w0.h1_seminorm().powi(2), w0))
}

/// `sup_w ∫(u·e)w / ‖∇w‖₂`, evaluated at the maximiser `(−Δ′)⁻¹(e_axis α)`.
pub fn small_f_limit(profile: &ShearProfile, e: &[f64]) -> Result<f64> {
    let beta = effective_profile(profile, e)?;
    let (_, w0) = diffusivity_limit_shear(profile, e)?;
    let g = w0.h1_seminorm();
    if g == 0.0 {
        return Ok(0.0);
    }
    Ok(beta.l2_inner(&w0)? / g)
}

/// `max e_axis α` over the grid samples. Spectral refinement would report
/// Gibbs overshoot for profiles with corners, such as flat plateaus.
pub fn large_f_limit(profile: &ShearProfile, e: &[f64]) -> Result<f64> {
    Ok(effective_profile(profile, e)?.max())
}

/// `γ(λ) = ‖∇w0(λ)‖₂²` for each `λ` of an increasing grid starting at 0.
pub fn gamma_curve(profile: &ShearProfile, e: &[f64], lambdas: &[f64]) -> Result<Vec<(f64, f64)>> {
    if lambdas.first() != Some(&0.0) || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must increase from 0".into()));
    }
    let beta = effective_profile(profile, e)?;
    lambdas
        .par_iter()
        .map(|&l| Ok((l, gamma_at(&beta, l)?)))
        .collect()
}

fn gamma_at(beta: &ScalarField, lambda: f64) -> Result<f64> {
    Ok(kappa_e_shear(beta, lambda)?.w0.h1_seminorm().powi(2))
}

/// Samples `γ` at `λ = 2^k` until the increments drop below `1e-6` or
/// `λ > 10⁴`. Growth is classified by ratios of consecutive increments:
/// power growth `λ^q` gives `2^q`, convergence like `λ^{−q}` gives `2^{−q}`,
/// so steadily shrinking increments flag `Γ` as finite.
/// The reported value is the largest sample, a lower bound for `Γ`.
pub fn gamma_estimate(profile: &ShearProfile, e: &[f64]) -> Result<GammaEstimate> {
    let beta = effective_profile(profile, e)?;
    if beta.values().iter().all(|&v| v == 0.0) {
        return Ok(GammaEstimate { value: 0.0, finite: GammaFinite::Finite, lambda_max: 0.0 });
    }
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut lambda = 1.0;
    loop {
        let g = gamma_at(&beta, lambda)?;
        let settled = samples.last().is_some_and(|&(_, prev)| (g - prev).abs() < 1e-6);
        samples.push((lambda, g));
        if settled {
            return Ok(GammaEstimate { value: g, finite: GammaFinite::Finite, lambda_max: lambda });
        }
        if lambda > 1e4 {
            break;
        }
        lambda *= 2.0;
    }
    let n = samples.len();
    let ratios: Vec<f64> = samples[n - 5..]
        .windows(3)
        .map(|w| (w[2].1 - w[1].1) / (w[1].1 - w[0].1))
        .collect();
    let finite = if ratios.iter().all(|r| r.abs() < 1.0) && ratios[2].abs() < 0.95 {
        GammaFinite::Finite
    } else if ratios[2] > 1.05 {
        GammaFinite::Infinite
    } else {
        GammaFinite::Unknown
    };
    let value = samples.iter().fold(0.0f64, |m, s| m.max(s.1));
    Ok(GammaEstimate { value, finite, lambda_max: samples[n - 1].0 })
}

/// Root of `γ(λ) = f′(0)` by bisection, using continuity of `γ`.
pub fn find_lambda_for_f(profile: &ShearProfile, e: &[f64], fprime0: f64) -> Result<GammaRoot> {
    if !(fprime0 > 0.0 && fprime0.is_finite()) {
        return Err(Error::InvalidArgument(format!("f'(0) = {fprime0} must be positive")));
    }
    let beta = effective_profile(profile, e)?;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut g_hi = gamma_at(&beta, hi)?;
    let mut best = g_hi;
    while g_hi < fprime0 {
        if hi > 1e4 {
            return Ok(GammaRoot::NotAttained { gamma_estimate: best });
        }
        lo = hi;
        hi *= 2.0;
        g_hi = gamma_at(&beta, hi)?;
        best = best.max(g_hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = gamma_at(&beta, mid)?;
        if (g - fprime0).abs() <= 1e-8 {
            return Ok(GammaRoot::Found { lambda: mid, gamma: g });
        }
        if g < fprime0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Err(Error::NotConverged {
        solver: "gamma bisection",
        iterations: 200,
        residual: (gamma_at(&beta, 0.5 * (lo + hi))? - fprime0).abs(),
        best: None,
    })
}

/// Everything above for one shear flow, direction and reaction rate.
pub fn limit_report(profile: &ShearProfile, e: &[f64], fprime0: f64, lambdas: &[f64]) -> Result<LimitReport> {
    let speed = speed_limit_shear(profile, e, fprime0)?;
    let (diffusivity, w0) = diffusivity_limit_shear(profile, e)?;
    let large = large_f_limit(profile, e)?;
    Ok(LimitReport {
        speed_limit: speed.value,
        speed_limit_branch: speed.branch,
        diffusivity_limit: diffusivity,
        small_f_coefficient: small_f_limit(profile, e)?,
        large_f_limit: large,
        max_ue: large,
        gamma: gamma_estimate(profile, e)?,
        gamma_curve: gamma_curve(profile, e, lambdas)?,
        w0: Some(w0),
    })
}

/// Two-term Richardson extrapolation of `q(A) ≈ q∞ + c A^{−p}` from the last
/// three samples, with `p` fitted from them.
#[derive(Clone, Debug, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    pub order: f64,
    /// Strictly decreasing samples.
    pub decreasing: bool,
}

pub fn richardson(points: &[(f64, f64)]) -> Result<Extrapolation> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("{} samples, need 3", points.len())));
    }
    let decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    let n = points.len();
    let [(a1, q1), (a2, q2), (a3, q3)] = [points[n - 3], points[n - 2], points[n - 1]];
    let (h1, h2, h3) = (1.0 / a1, 1.0 / a2, 1.0 / a3);
    let (d12, d23) = (q1 - q2, q2 - q3);
    if d23 == 0.0 || d12 == 0.0 || d12.signum() != d23.signum() {
        return Ok(Extrapolation { limit: q3, order: f64::NAN, decreasing });
    }
    let target = d12 / d23;
    let ratio = |p: f64| (h1.powf(p) - h2.powf(p)) / (h2.powf(p) - h3.powf(p));
    let (mut lo, mut hi) = (0.01, 10.0);
    if (ratio(lo) - target) * (ratio(hi) - target) > 0.0 {
        return Ok(Extrapolation { limit: q3, order: f64::NAN, decreasing });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (ratio(lo) - target) * (ratio(mid) - target) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let c = d23 / (h2.powf(p) - h3.powf(p));
    Ok(Extrapolation {
        limit: q3 - c * h3.powf(p),
        order: p,
        decreasing,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Crosscheck {
    /// Always true: general-flow numbers here are extrapolations, not oracles.
    pub non_oracle: bool,
    pub diffusivity: Extrapolation,
    pub speed: Extrapolation,
    /// `(A, ‖u·∇ψ_A‖₂)`.
    pub first_integral_decay: Vec<(f64, f64)>,
    pub first_integral_decreasing: bool,
    /// Closed-form diffusivity limit when the flow is a shear.
    pub shear_oracle: Option<f64>,
}

pub fn general_flow_limit_crosscheck(
    flow: &FlowField,
    e: &[f64],
    cells: &DiffusivitySweep,
    speeds: &SpeedSweep,
) -> Result<Crosscheck> {
    let dpts: Vec<(f64, f64)> = cells.points.iter().map(|p| (p.amplitude, p.d_e_over_a2)).collect();
    let spts: Vec<(f64, f64)> = speeds.points.iter().map(|p| (p.amplitude, p.c_star_over_a)).collect();
    let decay: Vec<(f64, f64)> = cells
        .points
        .iter()
        .map(|p| (p.amplitude, p.first_integral_residual))
        .collect();
    let first_integral_decreasing = decay.windows(2).all(|w| w[1].1 <= w[0].1);
    let shear_oracle = match flow.shear_profile() {
        Some(p) => Some(diffusivity_limit_shear(p, e)?.0),
        None => None,
    };
    Ok(Crosscheck {
        non_oracle: true,
        diffusivity: richardson(&dpts)?,
        speed: richardson(&spts)?,
        first_integral_decay: decay,
        first_integral_decreasing,
        shear_oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Mode;
    use crate::torus::make_grid;

    fn profile(n: usize, modes: &[Mode]) -> ShearProfile {
        let g = make_grid(2, &[16, n]).unwrap();
        FlowField::shear(&g, modes, 0).unwrap().shear_profile().unwrap().clone()
    }

    fn sin_profile(n: usize) -> ShearProfile {
        profile(n, &[Mode::sine(vec![1], 1.0)])
    }

    /// `min(2 sin 2πy, 1)` shifted to mean zero: flat maximum on `[1/12, 5/12]`.
    fn plateau_profile(n: usize) -> ShearProfile {
        let g = Grid::transverse(&[n]).unwrap();
        let raw = ScalarField::from_fn(&g, |y| (2.0 * (2.0 * PI * y[0]).sin()).min(1.0));
        ShearProfile { axis: 0, alpha: raw.without_mean() }
    }

    #[test]
    fn second_derivative_matrix_differentiates_modes() {
        let n = 32;
        let d2 = second_derivative_matrix(n);
        for k in [1.0, 3.0, 15.0] {
            let f = nalgebra::DVector::from_fn(n, |i, _| (2.0 * PI * k * i as f64 / n as f64).sin());
            let expect = -4.0 * PI * PI * k * k;
            let g = &d2 * &f;
            for i in 0..n {
                assert!((g[i] - expect * f[i]).abs() < 1e-9 * expect.abs());
            }
        }
    }

    #[test]
    fn kappa_e_small_and_large_lambda() {
        let p = sin_profile(256);
        let e = [1.0, 0.0];
        let beta = effective_profile(&p, &e).unwrap();
        let k0 = kappa_e_shear(&beta, 0.0).unwrap();
        assert_eq!(k0.kappa, 0.0);
        assert!(k0.w0.values().iter().all(|&v| v == 1.0));

        // κ_e is even in λ for this profile, so κ_e(h)/h² is the central
        // second difference estimate of the quadratic coefficient 1/(8π²).
        let h = 2e-2;
        let coeff = kappa_e_shear(&beta, h).unwrap().kappa / (h * h);
        assert!((coeff * 8.0 * PI * PI - 1.0).abs() < 1e-3, "{coeff}");

        // Near the maximum of β the problem is a harmonic oscillator:
        // κ_e ≈ λ − π√(2λ).
        let big = kappa_e_shear(&beta, 1e3).unwrap();
        let approx = 1e3 - PI * (2e3f64).sqrt();
        assert!((big.kappa - approx).abs() < 1e-2 * 1e3, "{}", big.kappa);
        assert!(big.w0.min() > 0.0);
        assert!(big.gap.unwrap() > 0.0);
    }

    #[test]
    fn kappa_e_scaling_and_bounds() {
        let p = profile(64, &[Mode::sine(vec![1], 1.0), Mode::new(vec![3], 0.3, 0.2)]);
        let alpha = &p.alpha;
        for l in [0.3, 2.0, 7.0] {
            let k = kappa_e_shear(alpha, l).unwrap().kappa;
            assert!(k >= -1e-10 && k <= l * alpha.max() + 1e-9);
            let scaled = kappa_e_shear(&alpha.scale(2.5), l).unwrap().kappa;
            let stretched = kappa_e_shear(alpha, 2.5 * l).unwrap().kappa;
            assert!((scaled - stretched).abs() <= 1e-9 * (1.0 + stretched.abs()));
        }
        assert!(kappa_e_shear(&ScalarField::constant(alpha.grid(), 1.0), 1.0).is_err());
    }

    #[test]
    fn iterative_path_matches_dense() {
        let p = profile(2048, &[Mode::sine(vec![1], 1.0), Mode::new(vec![2], 0.4, 1.0)]);
        let it = kappa_e_shear(&p.alpha, 3.0).unwrap();
        assert!(it.gap.is_none());
        let coarse = p.alpha.resample(&Grid::transverse(&[256]).unwrap()).unwrap();
        let dense = kappa_e_shear(&coarse, 3.0).unwrap();
        assert!((it.kappa - dense.kappa).abs() < 1e-9, "{} {}", it.kappa, dense.kappa);
    }

    #[test]
    fn diffusivity_and_small_f_limits() {
        let e = [1.0, 0.0];
        let p = sin_profile(64);
        let (d, _) = diffusivity_limit_shear(&p, &e).unwrap();
        assert!((d - 1.0 / (8.0 * PI * PI)).abs() < 1e-14);
        let s = small_f_limit(&p, &e).unwrap();
        assert!((s - 1.0 / (2.0 * 2f64.sqrt() * PI)).abs() < 1e-14);
        assert!((large_f_limit(&p, &e).unwrap() - 1.0).abs() < 1e-12);

        let p2 = profile(64, &[Mode::sine(vec![1], 1.0), Mode::sine(vec![2], 1.0)]);
        let (d2, _) = diffusivity_limit_shear(&p2, &e).unwrap();
        let expect = 1.0 / (8.0 * PI * PI) + 1.0 / (32.0 * PI * PI);
        assert!((d2 - expect).abs() < 1e-14);
        let s2 = small_f_limit(&p2, &e).unwrap();
        assert!((s2 * s2 - d2).abs() <= 1e-9 * d2);

        let orth = [0.0, 1.0];
        assert_eq!(diffusivity_limit_shear(&p, &orth).unwrap().0, 0.0);
        assert_eq!(small_f_limit(&p, &orth).unwrap(), 0.0);
        assert_eq!(large_f_limit(&p, &orth).unwrap(), 0.0);
        let sl = speed_limit_shear(&p, &orth, 1.0).unwrap();
        assert_eq!(sl.value, 0.0);
        assert_eq!(sl.branch, SpeedLimitBranch::Degenerate);
    }

    #[test]
    fn speed_limit_orderings() {
        let p = sin_profile(128);
        let e = [1.0, 0.0];
        let large = large_f_limit(&p, &e).unwrap();
        let mut prev = 0.0;
        for fp in [1.0, 10.0, 100.0] {
            let s = speed_limit_shear(&p, &e, fp).unwrap().value;
            assert!(s >= prev && s <= large + 1e-9);
            prev = s;
        }
        let small = small_f_limit(&p, &e).unwrap();
        let low = speed_limit_shear(&p, &e, 0.01).unwrap().value;
        assert!((low / (2.0 * 0.1) / small - 1.0).abs() < 0.05);
    }

    #[test]
    fn gamma_curve_and_root() {
        let p = sin_profile(256);
        let e = [1.0, 0.0];
        let curve = gamma_curve(&p, &e, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(curve[0], (0.0, 0.0));
        assert!(curve.windows(2).all(|w| w[1].1 > w[0].1));
        match find_lambda_for_f(&p, &e, 0.05).unwrap() {
            GammaRoot::Found { lambda, gamma } => {
                assert!(lambda > 0.0);
                assert!((gamma - 0.05).abs() <= 1e-8);
            }
            other => panic!("{other:?}"),
        }
        assert!(gamma_curve(&p, &e, &[0.5, 1.0]).is_err());
        assert_eq!(gamma_estimate(&p, &e).unwrap().finite, GammaFinite::Infinite);
    }

    #[test]
    fn plateau_profile_has_bounded_gamma() {
        let p = plateau_profile(256);
        let e = [1.0];
        let est = gamma_estimate(&p, &e).unwrap();
        assert_eq!(est.finite, GammaFinite::Finite, "{est:?}");
        // Confinement to the plateau of width 1/3 bounds γ by 9π².
        assert!(est.value < 9.0 * PI * PI);
        let plateau = p.alpha.max();
        assert!((large_f_limit(&p, &e).unwrap() - plateau).abs() < 1e-12);
        match find_lambda_for_f(&p, &e, 200.0).unwrap() {
            GammaRoot::NotAttained { gamma_estimate } => assert!(gamma_estimate < 200.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn richardson_recovers_power_laws() {
        let pts: Vec<(f64, f64)> = [1.0, 10.0, 100.0].iter().map(|&a| (a, 0.5 + 3.0 / (a * a))).collect();
        let r = richardson(&pts).unwrap();
        assert!((r.limit - 0.5).abs() < 1e-12 && (r.order - 2.0).abs() < 1e-9 && r.decreasing);
        let pts: Vec<(f64, f64)> = [8.0, 32.0, 128.0].iter().map(|&a| (a, 2.0 * f64::powf(a, -1.5))).collect();
        let r = richardson(&pts).unwrap();
        assert!(r.limit.abs() < 1e-12 && (r.order - 1.5).abs() < 1e-9);
        assert!(richardson(&pts[..2]).is_err());
    }
}
