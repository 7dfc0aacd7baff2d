//! Direct simulation of `T_t + A u·∇T = ΔT + f(T)` on a periodic channel
//! `[0, L] × 𝕋^{n−1}` and spreading-speed measurement.
//!
//! Strang splitting: exact spectral half-steps of diffusion around an RK4
//! step of advection and reaction.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::speed::{validate_reaction, ReactionSpec};
use crate::torus::{make_grid, wavenumber, Grid};

/// Channel of `length_periods` unit cells along the first axis, periodic in
/// every coordinate.
#[derive(Clone, Debug, Serialize)]
pub struct ChannelDomain {
    pub length_periods: usize,
    /// Grid points per unit cell on each axis.
    pub resolution: Vec<usize>,
}

impl ChannelDomain {
    pub fn new(length_periods: usize, resolution: Vec<usize>) -> Result<ChannelDomain> {
        if length_periods < 16 {
            return Err(Error::InvalidArgument(format!(
                "channel length {length_periods} below 16 periods"
            )));
        }
        make_grid(resolution.len(), &resolution)?;
        Ok(ChannelDomain { length_periods, resolution })
    }

    /// Where the front launched to the right meets the one that leaves to
    /// the left and re-enters through `x = L`.
    pub fn meeting_point(&self) -> f64 {
        (self.length_periods as f64 + STRIP) / 2.0
    }
}

const STRIP: f64 = 2.0;
const LEVEL: f64 = 0.5;
const OVERSHOOT: f64 = 1e-9;
const BLOWUP: f64 = 1.1;
/// Values below this are set to zero after every step. Transform round-off
/// ahead of the front would otherwise grow like `e^{f′(0) t}` and ignite the
/// channel; the cutoff lowers the speed by roughly `π²/(ln 10¹⁰)²`, under 1%.
const FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct FrontTrajectory {
    pub times: Vec<f64>,
    /// First crossing of the level by the cross-sectional maximum, scanning
    /// right from the initial strip.
    pub positions: Vec<f64>,
    /// `max T` over the channel at each sample.
    pub cross_section_max: Vec<f64>,
    /// Cumulative count of samples clipped back into `[0, 1]` by more than
    /// the overshoot tolerance.
    pub clip_counts: Vec<u64>,
    /// `∫T` over the channel at each sample.
    pub mass: Vec<f64>,
    pub level: f64,
    /// The front came within 4 periods of the meeting point before `t_final`.
    pub truncated: bool,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeedFit {
    pub speed: f64,
    /// Largest absolute deviation from the fitted line.
    pub fit_residual: f64,
    pub samples: usize,
}

/// Largest stable step for the explicit part: RK4 keeps `|z| ≤ 2.8` on the
/// imaginary axis, and the reaction is kept well inside its real interval.
pub fn max_stable_dt(flow: &FlowField, amplitude: f64, spec: &ReactionSpec, resolution: &[usize]) -> f64 {
    let speed: f64 = flow
        .validate()
        .max_speed
        .iter()
        .zip(resolution)
        .map(|(u, &n)| u * std::f64::consts::PI * n as f64)
        .sum();
    let adv = amplitude * speed;
    0.5 * (2.8 / adv.max(1e-300)).min(2.0 / spec.fprime0.max(1e-300)).min(0.1)
}

struct Stepper {
    grid: Grid,
    /// Derivative symbols with the first axis scaled to the channel length.
    deriv: Vec<Vec<f64>>,
    half_diffusion: Vec<f64>,
    /// Active velocity components sampled on the channel, with their axes.
    velocity: Vec<(usize, Vec<f64>)>,
    amplitude: f64,
}

impl Stepper {
    fn rhs(&self, t: &[f64], spec: &ReactionSpec) -> Vec<f64> {
        let mut out: Vec<f64> = t.iter().map(|&v| spec.eval(v)).collect();
        if self.amplitude != 0.0 && !self.velocity.is_empty() {
            let hat = self.grid.forward(t);
            for (axis, u) in &self.velocity {
                let d = &self.deriv[*axis];
                let g = self
                    .grid
                    .inverse_real(hat.iter().zip(d).map(|(c, k)| c * Complex64::new(0.0, *k)).collect());
                for ((o, ui), gi) in out.iter_mut().zip(u).zip(g) {
                    *o -= self.amplitude * ui * gi;
                }
            }
        }
        out
    }

    fn diffuse(&self, t: &[f64]) -> Vec<f64> {
        let hat = self
            .grid
            .forward(t)
            .into_iter()
            .zip(&self.half_diffusion)
            .map(|(c, f)| c * f)
            .collect();
        self.grid.inverse_real(hat)
    }

    fn step(&self, t: &[f64], dt: f64, spec: &ReactionSpec) -> Vec<f64> {
        let a = self.diffuse(t);
        let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + h * k).collect() };
        let k1 = self.rhs(&a, spec);
        let k2 = self.rhs(&axpy(&a, &k1, 0.5 * dt), spec);
        let k3 = self.rhs(&axpy(&a, &k2, 0.5 * dt), spec);
        let k4 = self.rhs(&axpy(&a, &k3, dt), spec);
        let b: Vec<f64> = (0..a.len())
            .map(|i| a[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        self.diffuse(&b)
    }
}

fn channel_setup(flow: &FlowField, amplitude: f64, dom: &ChannelDomain, dt: f64) -> Result<(Stepper, Vec<f64>)> {
    let dim = flow.grid().dim();
    if dom.resolution.len() != dim {
        return Err(Error::AxisCount { expected: dim, got: dom.resolution.len() });
    }
    let cell = make_grid(dim, &dom.resolution)?;
    let flow = if flow.grid() == &cell { flow.clone() } else { flow.resample(&cell)? };
    let mut shape = dom.resolution.clone();
    shape[0] *= dom.length_periods;
    // The grid spans [0, 1) on every axis; the first axis is stretched to L.
    let grid = Grid::unchecked(&shape);
    let length = dom.length_periods as f64;
    let n0 = dom.resolution[0];
    let rest: usize = dom.resolution[1..].iter().product();
    let deriv: Vec<Vec<f64>> = (0..dim)
        .map(|axis| {
            let d = grid.deriv(axis);
            if axis == 0 { d.iter().map(|k| k / length).collect() } else { d.to_vec() }
        })
        .collect();
    let half_diffusion = grid
        .ksq()
        .iter()
        .enumerate()
        .map(|(flat, k2)| {
            let k0 = 2.0 * std::f64::consts::PI * wavenumber(flat / rest, shape[0]) as f64;
            let k2 = k2 - k0 * k0 + (k0 / length).powi(2);
            (-0.5 * dt * k2).exp()
        })
        .collect();

    // Tile the unit-cell samples along the channel.
    let tile = |src: &[f64]| -> Vec<f64> {
        (0..grid.len())
            .map(|flat| {
                let i0 = flat / rest;
                let r = flat % rest;
                src[(i0 % n0) * rest + r]
            })
            .collect()
    };
    let velocity = flow
        .velocity()
        .components()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.values().iter().any(|&v| v != 0.0))
        .map(|(axis, c)| (axis, tile(c.values())))
        .collect();

    // Smoothed indicator of the strip [0, 2], with transition width one cell.
    let w = 0.25;
    let initial = (0..grid.len())
        .map(|flat| {
            let x = (flat / rest) as f64 / n0 as f64;
            let xs = if x < length / 2.0 { x } else { x - length };
            0.25 * (1.0 + (xs / w).tanh()) * (1.0 - ((xs - STRIP) / w).tanh())
        })
        .collect();
    Ok((
        Stepper {
            grid,
            deriv,
            half_diffusion,
            velocity,
            amplitude,
        },
        initial,
    ))
}

fn front_position(t: &[f64], n0: usize, rest: usize, start: usize, stop: usize) -> (f64, usize) {
    let row_max = |i: usize| t[i * rest..(i + 1) * rest].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let h = 1.0 / n0 as f64;
    let mut prev = row_max(start);
    for i in start + 1..stop {
        let m = row_max(i);
        if m < LEVEL && prev >= LEVEL {
            let frac = (prev - LEVEL) / (prev - m);
            return ((i - 1) as f64 * h + frac * h, i);
        }
        prev = m;
    }
    let i = if prev >= LEVEL { stop } else { start };
    (i as f64 * h, i)
}

/// Simulates from the smoothed strip `{0 ≤ x₁ ≤ 2}` and records the front
/// every unit of time. `dt = None` picks a stable step.
pub fn simulate_front(
    flow: &FlowField,
    amplitude: f64,
    spec: &ReactionSpec,
    dom: &ChannelDomain,
    t_final: f64,
    dt: Option<f64>,
) -> Result<FrontTrajectory> {
    let report = validate_reaction(spec, 1000)?;
    if !report.passed {
        return Err(Error::InvalidArgument(format!(
            "reaction '{}' fails KPP checks: {}",
            spec.name,
            report.failures().join(", ")
        )));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidArgument("amplitude and t_final must be non-negative".into()));
    }
    let limit = max_stable_dt(flow, amplitude, spec, &dom.resolution);
    let dt_req = dt.unwrap_or(limit);
    if !(dt_req > 0.0 && dt_req <= limit) {
        return Err(Error::InvalidArgument(format!(
            "time step {dt_req} exceeds the stability bound {limit}"
        )));
    }
    let per_unit = (1.0 / dt_req).ceil() as usize;
    let dt = 1.0 / per_unit as f64;
    let (stepper, mut t) = channel_setup(flow, amplitude, dom, dt)?;

    let n0 = dom.resolution[0];
    let rest: usize = dom.resolution[1..].iter().product();
    let start = n0; // x = 1, inside the strip
    let meet = dom.meeting_point();
    let stop = ((meet * n0 as f64) as usize).min(dom.length_periods * n0 - 1);
    let volume = 1.0 / (n0 * rest) as f64;

    let mut traj = FrontTrajectory {
        times: Vec::new(),
        positions: Vec::new(),
        cross_section_max: Vec::new(),
        clip_counts: Vec::new(),
        mass: Vec::new(),
        level: LEVEL,
        truncated: false,
        dt,
    };
    let mut clips = 0u64;
    let units = t_final.floor() as usize;
    let mut step = 0usize;
    for unit in 0..=units {
        let (pos, _) = front_position(&t, n0, rest, start, stop);
        traj.times.push(unit as f64);
        traj.positions.push(pos);
        traj.cross_section_max.push(t.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)));
        traj.clip_counts.push(clips);
        traj.mass.push(t.iter().sum::<f64>() * volume);
        if pos >= meet - 4.0 {
            traj.truncated = unit < units;
            break;
        }
        if unit == units {
            break;
        }
        for _ in 0..per_unit {
            t = stepper.step(&t, dt, spec);
            step += 1;
            let worst = t.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            if !worst.is_finite() || worst > BLOWUP {
                return Err(Error::Unstable { step, max: worst });
            }
            for v in t.iter_mut() {
                let c = v.clamp(0.0, 1.0);
                if (c - *v).abs() > OVERSHOOT {
                    clips += 1;
                }
                *v = if c < FLOOR { 0.0 } else { c };
            }
        }
    }
    Ok(traj)
}

/// Least-squares slope of position against time over the final
/// `window_fraction` of the samples.
pub fn measure_speed(traj: &FrontTrajectory, window_fraction: f64) -> Result<SpeedFit> {
    let n = traj.times.len();
    if n < 20 {
        return Err(Error::InsufficientData(format!("{n} trajectory samples, need 20")));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("window fraction {window_fraction} outside (0, 1]")));
    }
    let k = ((n as f64 * window_fraction).round() as usize).clamp(2, n);
    let ts = &traj.times[n - k..];
    let xs = &traj.positions[n - k..];
    let mt = ts.iter().sum::<f64>() / k as f64;
    let mx = xs.iter().sum::<f64>() / k as f64;
    let sxy: f64 = ts.iter().zip(xs).map(|(t, x)| (t - mt) * (x - mx)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let speed = sxy / sxx;
    let fit_residual = ts
        .iter()
        .zip(xs)
        .map(|(t, x)| (x - (mx + speed * (t - mt))).abs())
        .fold(0.0, f64::max);
    Ok(SpeedFit { speed, fit_residual, samples: k })
}
