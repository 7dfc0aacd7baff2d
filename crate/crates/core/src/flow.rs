//! Periodic incompressible mean-zero flows and the transport operators built
//! from them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{trig_sum, Grid, ScalarField, VectorField};

/// One term `amplitude · cos(2πk·x + phase)` of a trigonometric series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub wavevector: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Mode {
    pub fn new(wavevector: Vec<i64>, amplitude: f64, phase: f64) -> Mode {
        Mode {
            wavevector,
            amplitude,
            phase,
        }
    }

    /// `amplitude · sin(2πk·x)`.
    pub fn sine(wavevector: Vec<i64>, amplitude: f64) -> Mode {
        Mode::new(wavevector, amplitude, -std::f64::consts::FRAC_PI_2)
    }
}

/// A velocity mode `P_k(direction) · amplitude · cos(2πk·x + phase)` where
/// `P_k` projects onto the plane orthogonal to `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorMode {
    pub wavevector: Vec<i64>,
    pub direction: Vec<f64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Shear,
    Cellular,
    FourierGeneral,
}

/// Transverse profile `α(x′)` of a shear flow `u = α(x′) e_axis`.
#[derive(Clone, Debug)]
pub struct ShearProfile {
    pub axis: usize,
    pub alpha: ScalarField,
}

#[derive(Clone, Debug)]
pub struct FlowField {
    velocity: VectorField,
    kind: FlowKind,
    shear: Option<ShearProfile>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowReport {
    /// `‖∇·u‖₂ / ‖u‖₂` (absolute when `u ≡ 0`).
    pub div_residual: f64,
    pub mean_residuals: Vec<f64>,
    /// `max_x |u_i(x)|` per coordinate direction.
    pub max_speed: Vec<f64>,
}

const DIV_TOL: f64 = 1e-10;
const MEAN_TOL: f64 = 1e-12;

fn check_resolved(grid_shape: &[usize], k: &[i64]) -> Result<()> {
    if k.len() != grid_shape.len() {
        return Err(Error::Flow(format!(
            "wavevector {k:?} has {} entries, expected {}",
            k.len(),
            grid_shape.len()
        )));
    }
    for (&ki, &n) in k.iter().zip(grid_shape) {
        if ki.unsigned_abs() as usize >= n / 2 {
            return Err(Error::Flow(format!("wavevector {k:?} is not resolved by the grid")));
        }
    }
    Ok(())
}

impl FlowField {
    pub fn zero(grid: &Grid) -> FlowField {
        FlowField {
            velocity: VectorField::zeros(grid),
            kind: FlowKind::FourierGeneral,
            shear: None,
        }
    }

    /// Shear flow with `α(x′) = Σ modes` on the torus transverse to `axis`.
    pub fn shear(grid: &Grid, alpha: &[Mode], axis: usize) -> Result<FlowField> {
        if axis >= grid.dim() {
            return Err(Error::Flow(format!("axis {axis} out of range")));
        }
        let tshape: Vec<usize> = grid
            .shape()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, &n)| n)
            .collect();
        for m in alpha {
            check_resolved(&tshape, &m.wavevector)?;
            if m.wavevector.iter().all(|&k| k == 0) && m.amplitude != 0.0 {
                return Err(Error::Flow("shear profile has a zero-wavevector term".into()));
            }
        }
        let tgrid = Grid::unchecked(&tshape);
        let modes: Vec<_> = alpha
            .iter()
            .map(|m| (m.wavevector.clone(), m.amplitude, m.phase))
            .collect();
        let profile = trig_sum(&tgrid, &modes);
        FlowField::from_shear_profile(grid, profile, axis)
    }

    /// Shear flow from a sampled transverse profile. The profile grid must
    /// match the transverse axes of `grid`.
    pub fn from_shear_profile(grid: &Grid, alpha: ScalarField, axis: usize) -> Result<FlowField> {
        if axis >= grid.dim() {
            return Err(Error::Flow(format!("axis {axis} out of range")));
        }
        let tshape: Vec<usize> = grid
            .shape()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, &n)| n)
            .collect();
        if alpha.grid().shape() != tshape.as_slice() {
            return Err(Error::GridMismatch);
        }
        let mut comps: Vec<ScalarField> = (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect();
        let values: Vec<f64> = (0..grid.len())
            .map(|flat| alpha.values()[transverse_index(grid.shape(), axis, flat)])
            .collect();
        comps[axis] = ScalarField::new(grid, values)?;
        let flow = FlowField {
            velocity: VectorField::new(comps)?,
            kind: FlowKind::Shear,
            shear: Some(ShearProfile { axis, alpha }),
        };
        flow.check_invariants()?;
        Ok(flow)
    }

    /// Two-dimensional flow `u = (-∂ψ/∂y, ∂ψ/∂x)`.
    pub fn from_streamfunction(grid: &Grid, psi: &ScalarField) -> Result<FlowField> {
        if grid.dim() != 2 {
            return Err(Error::Flow("stream functions need a two-dimensional grid".into()));
        }
        if psi.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let ux = psi.partial(1).scale(-1.0);
        let uy = psi.partial(0);
        let flow = FlowField {
            velocity: VectorField::new(vec![ux, uy])?,
            kind: FlowKind::Cellular,
            shear: None,
        };
        flow.check_invariants()?;
        Ok(flow)
    }

    /// `u = (-sin 2πx cos 2πy, cos 2πx sin 2πy)`, from `ψ = sin(2πx) sin(2πy) / 2π`.
    pub fn cellular(grid: &Grid) -> Result<FlowField> {
        use std::f64::consts::PI;
        let psi = ScalarField::from_fn(grid, |x| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin() / (2.0 * PI)
        });
        FlowField::from_streamfunction(grid, &psi)
    }

    /// Sum of divergence-free Fourier modes; each direction is projected onto
    /// the plane orthogonal to its wavevector.
    pub fn fourier(grid: &Grid, modes: &[VectorMode]) -> Result<FlowField> {
        use std::f64::consts::PI;
        let dim = grid.dim();
        let mut comps = vec![vec![0.0; grid.len()]; dim];
        for m in modes {
            check_resolved(grid.shape(), &m.wavevector)?;
            if m.direction.len() != dim {
                return Err(Error::Flow("mode direction has the wrong length".into()));
            }
            let k: Vec<f64> = m.wavevector.iter().map(|&k| k as f64).collect();
            let kk: f64 = k.iter().map(|v| v * v).sum();
            if kk == 0.0 {
                if m.amplitude != 0.0 {
                    return Err(Error::Flow("flow mode with zero wavevector is not mean-zero".into()));
                }
                continue;
            }
            let dk: f64 = m.direction.iter().zip(&k).map(|(d, k)| d * k).sum();
            let dir: Vec<f64> = m.direction.iter().zip(&k).map(|(d, ki)| d - dk * ki / kk).collect();
            for flat in 0..grid.len() {
                let x = grid.point(flat);
                let arg: f64 = k.iter().zip(&x).map(|(a, b)| a * b).sum();
                let c = m.amplitude * (2.0 * PI * arg + m.phase).cos();
                for (axis, comp) in comps.iter_mut().enumerate() {
                    comp[flat] += c * dir[axis];
                }
            }
        }
        let comps = comps
            .into_iter()
            .map(|v| ScalarField::new(grid, v))
            .collect::<Result<Vec<_>>>()?;
        let flow = FlowField {
            velocity: VectorField::new(comps)?,
            kind: FlowKind::FourierGeneral,
            shear: None,
        };
        flow.check_invariants()?;
        Ok(flow)
    }

    pub fn grid(&self) -> &Grid {
        self.velocity.grid()
    }

    pub fn velocity(&self) -> &VectorField {
        &self.velocity
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn shear_profile(&self) -> Option<&ShearProfile> {
        self.shear.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.velocity
            .components()
            .iter()
            .all(|c| c.values().iter().all(|&v| v == 0.0))
    }

    /// Pointwise `u · e`.
    pub fn along(&self, e: &[f64]) -> ScalarField {
        self.velocity.dot_direction(e)
    }

    /// `max_x u(x) · e`.
    pub fn max_along(&self, e: &[f64]) -> f64 {
        self.along(e).max()
    }

    pub fn validate(&self) -> FlowReport {
        let norm = self.velocity.l2_norm();
        let div = self.velocity.divergence().l2_norm();
        FlowReport {
            div_residual: if norm > 0.0 { div / norm } else { div },
            mean_residuals: self.velocity.components().iter().map(|c| c.mean().abs()).collect(),
            max_speed: self
                .velocity
                .components()
                .iter()
                .map(|c| c.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .collect(),
        }
    }

    fn check_invariants(&self) -> Result<()> {
        let r = self.validate();
        if r.div_residual > DIV_TOL {
            return Err(Error::Flow(format!("divergence residual {:e}", r.div_residual)));
        }
        if let Some(m) = r.mean_residuals.iter().find(|&&m| m > MEAN_TOL) {
            return Err(Error::Flow(format!("mean residual {m:e}")));
        }
        Ok(())
    }

    /// Dealiased `u · ∇w`.
    pub fn advect(&self, w: &ScalarField) -> Result<ScalarField> {
        if w.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let op = TransportOperator::new(self, &vec![0.0; self.grid().dim()]);
        let hat = op.apply(w.spectrum(), 1.0, 0.0, None);
        Ok(ScalarField::from_spectrum(self.grid(), hat))
    }

    /// Spectral interpolation of the velocity onto another grid.
    pub fn resample(&self, grid: &Grid) -> Result<FlowField> {
        let comps = self
            .velocity
            .components()
            .iter()
            .map(|c| c.resample(grid))
            .collect::<Result<Vec<_>>>()?;
        let shear = match &self.shear {
            Some(p) => {
                let tshape: Vec<usize> = grid
                    .shape()
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != p.axis)
                    .map(|(_, &n)| n)
                    .collect();
                Some(ShearProfile {
                    axis: p.axis,
                    alpha: p.alpha.resample(&Grid::unchecked(&tshape))?,
                })
            }
            None => None,
        };
        Ok(FlowField {
            velocity: VectorField::new(comps)?,
            kind: self.kind,
            shear,
        })
    }
}

/// Flat index on the transverse grid of the point `flat` of `shape`.
pub(crate) fn transverse_index(shape: &[usize], axis: usize, flat: usize) -> usize {
    let mut rem = flat;
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = rem % shape[a];
        rem /= shape[a];
    }
    let mut t = 0;
    for (a, &i) in idx.iter().enumerate() {
        if a != axis {
            t = t * shape[a] + i;
        }
    }
    t
}

/// Dealiased evaluation of `c_adv · u·∇w + c_pot · (u·e) w` with the flow
/// held on the 3/2-padded grid.
pub(crate) struct TransportOperator {
    grid: Grid,
    u_padded: Vec<Vec<f64>>,
    ue_padded: Vec<f64>,
    /// Axes along which the flow has a nonzero component.
    active: Vec<usize>,
}

impl TransportOperator {
    pub(crate) fn new(flow: &FlowField, e: &[f64]) -> TransportOperator {
        let grid = flow.grid().clone();
        let pad = grid.padding();
        let mut active = Vec::new();
        let u_padded = flow
            .velocity()
            .components()
            .iter()
            .enumerate()
            .map(|(axis, c)| {
                let v = pad.to_padded_physical(c.spectrum());
                if v.iter().any(|&x| x != 0.0) {
                    active.push(axis);
                }
                v
            })
            .collect();
        let ue_padded = pad.to_padded_physical(flow.along(e).spectrum());
        TransportOperator {
            grid,
            u_padded,
            ue_padded,
            active,
        }
    }

    pub(crate) fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Spectrum of `c_adv u·∇w + c_pot (u·e) w` given the spectrum of `w`.
    /// `w_padded` may carry the physical samples of `w` on the padded grid.
    pub(crate) fn apply(
        &self,
        what: &[Complex64],
        c_adv: f64,
        c_pot: f64,
        w_padded: Option<&[f64]>,
    ) -> Vec<Complex64> {
        let pad = self.grid.padding();
        let n = pad.grid.len();
        let mut prod = vec![0.0; n];
        let mut touched = false;
        if c_adv != 0.0 {
            for &axis in &self.active {
                let d = self.grid.deriv(axis);
                let g: Vec<Complex64> = what
                    .iter()
                    .zip(d)
                    .map(|(c, k)| Complex64::new(0.0, *k) * c)
                    .collect();
                let gp = pad.to_padded_physical(&g);
                for ((p, u), gv) in prod.iter_mut().zip(&self.u_padded[axis]).zip(&gp) {
                    *p += c_adv * u * gv;
                }
                touched = true;
            }
        }
        if c_pot != 0.0 {
            let owned;
            let wp = match w_padded {
                Some(w) => w,
                None => {
                    owned = pad.to_padded_physical(what);
                    &owned
                }
            };
            for ((p, ue), wv) in prod.iter_mut().zip(&self.ue_padded).zip(wp) {
                *p += c_pot * ue * wv;
            }
            touched = true;
        }
        if !touched {
            return vec![Complex64::new(0.0, 0.0); self.grid.len()];
        }
        pad.truncate(&pad.grid.forward(&prod))
    }
}

/// Random stream-function flow scaled to unit maximum speed, or `None` when
/// the draw is nearly zero.
#[cfg(test)]
pub(crate) fn random_unit_flow(grid: &Grid, seed: u64) -> Option<FlowField> {
    let psi = crate::torus::testing::random_mean_zero(grid, 2, 4, seed);
    let raw = FlowField::from_streamfunction(grid, &psi).ok()?;
    let top = raw.validate().max_speed.into_iter().fold(0.0, f64::max);
    if top < 1e-3 {
        return None;
    }
    FlowField::from_streamfunction(grid, &psi.scale(1.0 / top)).ok()
}
