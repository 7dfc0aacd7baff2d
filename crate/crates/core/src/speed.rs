//! Minimal pulsating front speeds from the variational principle
//!
//! `c*(A)/A = inf_{λ>0} (f′(0) + (λ/A)² + κ(λ/A; A)) / λ`,
//!
//! and the KPP reaction terms that feed it.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{check_amplitudes, check_direction};
use crate::eigen::{principal_eigenpair_from, EigenOptions, EigenResult};
use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowKind};
use crate::minimize::minimize_positive;
use crate::torus::ScalarField;

type Nonlinearity = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A reaction term `f` with its declared slope `f′(0)`.
#[derive(Clone)]
pub struct ReactionSpec {
    pub name: String,
    pub fprime0: f64,
    /// Width of the interval below 1 on which `f` must be non-increasing.
    pub epsilon: f64,
    f: Nonlinearity,
}

impl fmt::Debug for ReactionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionSpec")
            .field("name", &self.name)
            .field("fprime0", &self.fprime0)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

impl ReactionSpec {
    pub fn new(
        name: impl Into<String>,
        fprime0: f64,
        epsilon: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> ReactionSpec {
        ReactionSpec {
            name: name.into(),
            fprime0,
            epsilon,
            f: Arc::new(f),
        }
    }

    /// `f(s) = r s(1 − s)`.
    pub fn fisher(rate: f64) -> ReactionSpec {
        ReactionSpec::new("fisher", rate, 0.25, move |s| rate * s * (1.0 - s))
    }

    /// `f(s) = Σ cᵢ sⁱ` with `f′(0) = c₁`.
    pub fn polynomial(coeffs: &[f64]) -> ReactionSpec {
        let c = coeffs.to_vec();
        let fp = c.get(1).copied().unwrap_or(0.0);
        ReactionSpec::new("polynomial", fp, 0.1, move |s| {
            c.iter().rev().fold(0.0, |acc, ci| acc * s + ci)
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReactionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Sample with the worst violation margin.
    pub worst_s: f64,
    pub worst_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReactionReport {
    pub passed: bool,
    pub checks: Vec<ReactionCheck>,
}

impl ReactionReport {
    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

/// Sampled check of the KPP conditions `f(0) = f(1) = 0`,
/// `0 < f(s) ≤ f′(0) s` on `(0, 1)` and monotone decay near 1.
pub fn validate_reaction(spec: &ReactionSpec, samples: usize) -> Result<ReactionReport> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!("{samples} samples, need at least 100")));
    }
    let interior: Vec<f64> = (1..samples).map(|i| i as f64 / samples as f64).collect();
    let f = |s: f64| spec.eval(s);

    let (f0, f1) = (f(0.0), f(1.0));
    let endpoints = if f0.abs() >= f1.abs() {
        ReactionCheck { name: "endpoints", passed: false, worst_s: 0.0, worst_value: f0 }
    } else {
        ReactionCheck { name: "endpoints", passed: false, worst_s: 1.0, worst_value: f1 }
    };
    let endpoints = ReactionCheck {
        passed: f0.abs() <= 1e-12 && f1.abs() <= 1e-12,
        ..endpoints
    };

    let slope = ReactionCheck {
        name: "fprime0_positive",
        passed: spec.fprime0 > 0.0 && spec.fprime0.is_finite(),
        worst_s: 0.0,
        worst_value: spec.fprime0,
    };

    let worst_by = |margin: &dyn Fn(f64) -> f64| {
        interior
            .iter()
            .map(|&s| (s, margin(s)))
            .fold((f64::NAN, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best })
    };
    let (s, m) = worst_by(&|s| f(s));
    let positivity = ReactionCheck { name: "positivity", passed: m > 0.0, worst_s: s, worst_value: f(s) };
    let (s, m) = worst_by(&|s| spec.fprime0 * s - f(s));
    let bound = ReactionCheck {
        name: "kpp_bound",
        passed: m >= -1e-12,
        worst_s: s,
        worst_value: f(s) - spec.fprime0 * s,
    };

    let near_one: Vec<f64> = interior.iter().copied().filter(|&s| s > 1.0 - spec.epsilon).collect();
    let mut mono = ReactionCheck {
        name: "monotone_near_one",
        passed: spec.epsilon > 0.0,
        worst_s: 1.0 - spec.epsilon,
        worst_value: 0.0,
    };
    let mut worst_rise = 0.0;
    for w in near_one.windows(2).chain(std::iter::once(&[*near_one.last().unwrap_or(&1.0), 1.0][..])) {
        let rise = f(w[1]) - f(w[0]);
        if rise > worst_rise {
            worst_rise = rise;
            mono.worst_s = w[0];
            mono.worst_value = rise;
        }
    }
    if worst_rise > 1e-12 {
        mono.passed = false;
    }

    let checks = vec![endpoints, slope, positivity, bound, mono];
    Ok(ReactionReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[derive(Clone, Debug)]
pub struct SpeedOptions {
    pub eigen: EigenOptions,
    /// Relative tolerance on the minimising `λ`.
    pub lambda_rel_tol: f64,
    /// Upper limit for bracket expansion, in multiples of `√f′(0) max(A, 10)`.
    pub cap_factor: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            eigen: EigenOptions::default(),
            lambda_rel_tol: 1e-6,
            cap_factor: 1e4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpeedResult {
    pub c_star: f64,
    /// Minimising exponent of the unscaled principle, `λ_rescaled / A`.
    pub lambda_star: f64,
    /// Minimiser of the rescaled objective.
    pub lambda_rescaled: f64,
    pub amplitude: f64,
    /// Bracket on the rescaled `λ`.
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub kappa_at_lambda_star: f64,
    pub eigen_residual: f64,
    /// Every eigen solve performed, in order.
    pub evals: Vec<EigenResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpeedPoint {
    pub amplitude: f64,
    pub c_star: f64,
    pub c_star_over_a: f64,
    pub lambda_star: f64,
    pub kappa_at_lambda_star: f64,
    pub eigen_residual: f64,
}

#[derive(Clone, Debug)]
pub struct SpeedSweep {
    pub points: Vec<SpeedPoint>,
    pub results: Vec<SpeedResult>,
    /// `c*/A` non-increasing along the sweep, with slack `1e-7`.
    pub ratio_nonincreasing: bool,
}

impl From<&SpeedResult> for SpeedPoint {
    fn from(r: &SpeedResult) -> SpeedPoint {
        SpeedPoint {
            amplitude: r.amplitude,
            c_star: r.c_star,
            c_star_over_a: r.c_star / r.amplitude,
            lambda_star: r.lambda_star,
            kappa_at_lambda_star: r.kappa_at_lambda_star,
            eigen_residual: r.eigen_residual,
        }
    }
}

fn nearest_phi(evals: &[EigenResult], lambda: f64) -> Option<&ScalarField> {
    evals
        .iter()
        .filter(|r| r.lambda > 0.0)
        .min_by(|a, b| {
            (a.lambda.ln() - lambda.ln())
                .abs()
                .total_cmp(&(b.lambda.ln() - lambda.ln()).abs())
        })
        .map(|r| &r.phi)
}

pub fn minimal_speed(
    flow: &FlowField,
    e: &[f64],
    amplitude: f64,
    spec: &ReactionSpec,
    opts: &SpeedOptions,
) -> Result<SpeedResult> {
    check_direction(e, flow.grid().dim())?;
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("amplitude {amplitude} must be positive")));
    }
    let report = validate_reaction(spec, 1000)?;
    if !report.passed {
        return Err(Error::InvalidArgument(format!(
            "reaction '{}' fails KPP checks: {}",
            spec.name,
            report.failures().join(", ")
        )));
    }
    let fp = spec.fprime0;
    let root = fp.sqrt();
    let lo = 1e-3 * root;
    let hi = root * amplitude.max(10.0);
    let cap = hi * opts.cap_factor;

    let mut evals: Vec<EigenResult> = Vec::new();
    let mut cache: HashMap<u64, usize> = HashMap::new();
    let min = minimize_positive(
        |lambda| {
            let idx = match cache.get(&lambda.to_bits()) {
                Some(&i) => i,
                None => {
                    let guess = nearest_phi(&evals, lambda).cloned();
                    let r = principal_eigenpair_from(flow, e, amplitude, lambda, guess.as_ref(), &opts.eigen)?;
                    evals.push(r);
                    cache.insert(lambda.to_bits(), evals.len() - 1);
                    evals.len() - 1
                }
            };
            Ok((fp + evals[idx].mu) / lambda)
        },
        lo,
        hi,
        cap,
        opts.lambda_rel_tol,
    )?;
    let at_min = &evals[cache[&min.x.to_bits()]];
    Ok(SpeedResult {
        c_star: amplitude * min.value,
        lambda_star: min.x / amplitude,
        lambda_rescaled: min.x,
        amplitude,
        bracket: min.bracket,
        evaluations: evals.len(),
        kappa_at_lambda_star: at_min.kappa,
        eigen_residual: at_min.residual,
        evals,
    })
}

/// Minimal speeds for an increasing amplitude list, solved concurrently.
pub fn speed_sweep(
    flow: &FlowField,
    e: &[f64],
    amplitudes: &[f64],
    spec: &ReactionSpec,
    opts: &SpeedOptions,
) -> Result<SpeedSweep> {
    check_amplitudes(amplitudes)?;
    let results = amplitudes
        .par_iter()
        .map(|&a| minimal_speed(flow, e, a, spec, opts).map_err(|err| err.at_amplitude(a)))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<SpeedPoint> = results.iter().map(SpeedPoint::from).collect();
    let ratio_nonincreasing = points
        .windows(2)
        .all(|w| w[0].c_star_over_a - w[1].c_star_over_a >= -1e-7);
    Ok(SpeedSweep {
        points,
        results,
        ratio_nonincreasing,
    })
}

/// Whether `c*/A` must be non-increasing along a sweep of this flow.
pub fn expects_monotone_ratio(flow: &FlowField) -> bool {
    flow.kind() == FlowKind::Shear || flow.is_zero()
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::torus::make_grid;
    use crate::flow::random_unit_flow;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn flow_never_slows_the_front(seed in any::<u64>(), amplitude in 0.5f64..8.0, fprime0 in 0.25f64..4.0) {
            let g = make_grid(2, &[16, 16]).unwrap();
            let u = random_unit_flow(&g, seed);
            prop_assume!(u.is_some());
            let u = u.unwrap();
            let r = minimal_speed(&u, &[1.0, 0.0], amplitude, &ReactionSpec::fisher(fprime0), &SpeedOptions::default()).unwrap();
            prop_assert!(r.c_star >= 2.0 * fprime0.sqrt() - 1e-8);
            prop_assert!(r.c_star <= 2.0 * fprime0.sqrt() + amplitude * u.max_along(&[1.0, 0.0]) + 1e-8);
        }
    }
}
