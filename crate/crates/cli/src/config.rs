//! Experiment configuration: a single JSON document, checked field by field.

use std::path::{Path, PathBuf};

use kppflow::flow::{FlowField, Mode, VectorMode};
use kppflow::speed::{validate_reaction, ReactionSpec};
use kppflow::torus::{make_grid, trig_sum, Grid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Diffusivity,
    Speed,
    Limits,
    Simulate,
    Validate,
    ReproduceAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKindSpec {
    Zero,
    Shear,
    Cellular,
    Streamfunction,
    Fourier,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub kind: FlowKindSpec,
    /// Shear axis.
    #[serde(default)]
    pub axis: usize,
    /// Terms of `α` (shear, transverse wavevectors) or of the stream function.
    #[serde(default)]
    pub modes: Vec<Mode>,
    /// Velocity modes for `fourier` flows.
    #[serde(default)]
    pub vector_modes: Vec<VectorMode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Geometric,
    Linear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Geometric
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionConfig {
    Fisher { rate: f64 },
    Polynomial { coeffs: Vec<f64> },
}

impl Default for ReactionConfig {
    fn default() -> Self {
        ReactionConfig::Fisher { rate: 1.0 }
    }
}

impl ReactionConfig {
    pub fn build(&self) -> ReactionSpec {
        match self {
            ReactionConfig::Fisher { rate } => ReactionSpec::fisher(*rate),
            ReactionConfig::Polynomial { coeffs } => ReactionSpec::polynomial(coeffs),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_cell_tol")]
    pub cell: f64,
    #[serde(default = "default_eigen_tol")]
    pub eigen: f64,
    #[serde(default = "default_lambda_tol")]
    pub lambda: f64,
}

fn default_cell_tol() -> f64 {
    1e-10
}
fn default_eigen_tol() -> f64 {
    1e-10
}
fn default_lambda_tol() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cell: default_cell_tol(),
            eigen: default_eigen_tol(),
            lambda: default_lambda_tol(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub length_periods: usize,
    /// Points per unit cell on each axis.
    pub resolution: Vec<usize>,
    pub t_final: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
}

fn default_window() -> f64 {
    0.75
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    #[serde(default)]
    pub flow: Option<FlowSpec>,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub amplitude_range: Option<AmplitudeRange>,
    #[serde(default)]
    pub reaction: ReactionConfig,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// `λ` grid for the γ curve in `limits` mode.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    /// `reproduce-all` only: force a 16² grid.
    #[serde(default)]
    pub fast: bool,
}

fn bad(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.check()?;
    Ok(cfg)
}

impl ExperimentConfig {
    fn needs_flow(&self) -> bool {
        !matches!(self.mode, RunMode::ReproduceAll)
    }

    fn sweeps(&self) -> bool {
        matches!(self.mode, RunMode::Diffusivity | RunMode::Speed)
    }

    /// Field-level validation beyond what the JSON schema enforces.
    pub fn check(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        for (name, v) in [("tolerances.cell", t.cell), ("tolerances.eigen", t.eigen), ("tolerances.lambda", t.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, format!("must be positive, got {v}")));
            }
        }
        if t.cell > 1e-4 {
            return Err(bad("tolerances.cell", "must not exceed 1e-4"));
        }
        if self.workers == Some(0) {
            return Err(bad("workers", "must be at least 1"));
        }
        if !self.needs_flow() {
            return Ok(());
        }
        self.check_reaction()?;
        let flow = self.flow.as_ref().ok_or_else(|| bad("flow", "required for this mode"))?;
        let res = self.resolution.as_ref().ok_or_else(|| bad("resolution", "required for this mode"))?;
        if !(2..=3).contains(&res.len()) {
            return Err(bad("resolution", format!("needs 2 or 3 axes, got {}", res.len())));
        }
        for &n in res {
            if !n.is_power_of_two() || !(8..=4096).contains(&n) {
                return Err(bad("resolution", format!("{n} is not a power of two in [8, 4096]")));
            }
        }
        if flow.kind == FlowKindSpec::Shear && flow.axis >= res.len() {
            return Err(bad("flow.axis", format!("axis {} outside a {}-D grid", flow.axis, res.len())));
        }
        let dir = self.direction();
        if dir.len() != res.len() {
            return Err(bad("direction", format!("needs {} entries", res.len())));
        }
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (len - 1.0).abs() > 1e-12 {
            return Err(bad("direction", format!("must have unit length, got {len}")));
        }
        if self.sweeps() {
            self.amplitude_list()?;
        }
        if let Some(ls) = &self.lambdas {
            if ls.first() != Some(&0.0) || ls.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("lambdas", "must increase from 0"));
            }
        }
        if self.mode == RunMode::Limits && flow.kind != FlowKindSpec::Shear {
            return Err(bad("flow.kind", "limits mode needs a shear flow"));
        }
        if self.mode == RunMode::Simulate {
            let sim = self.simulation.as_ref().ok_or_else(|| bad("simulation", "required for simulate mode"))?;
            if sim.length_periods < 16 {
                return Err(bad("simulation.length_periods", "must be at least 16"));
            }
            if sim.resolution.len() != res.len() {
                return Err(bad("simulation.resolution", format!("needs {} entries", res.len())));
            }
            if !(sim.t_final > 0.0 && sim.t_final.is_finite()) {
                return Err(bad("simulation.t_final", "must be positive"));
            }
            if !(sim.window_fraction > 0.0 && sim.window_fraction <= 1.0) {
                return Err(bad("simulation.window_fraction", "must lie in (0, 1]"));
            }
            if let Some(dt) = sim.dt {
                if !(dt > 0.0) {
                    return Err(bad("simulation.dt", "must be positive"));
                }
            }
            let a = self.amplitudes.as_ref().and_then(|v| v.first()).copied().unwrap_or(0.0);
            if !(a >= 0.0 && a.is_finite()) {
                return Err(bad("amplitudes", "simulation amplitude must be non-negative"));
            }
        }
        Ok(())
    }

    fn check_reaction(&self) -> Result<(), CliError> {
        match &self.reaction {
            ReactionConfig::Fisher { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                return Err(bad("reaction.rate", format!("must be positive, got {rate}")));
            }
            ReactionConfig::Polynomial { coeffs } if coeffs.len() < 2 => {
                return Err(bad("reaction.coeffs", "needs at least the constant and linear terms"));
            }
            _ => {}
        }
        let report = validate_reaction(&self.reaction.build(), 1000).map_err(|e| bad("reaction", e.to_string()))?;
        if !report.passed {
            return Err(bad("reaction", format!("fails KPP checks: {}", report.failures().join(", "))));
        }
        Ok(())
    }

    pub fn direction(&self) -> Vec<f64> {
        self.direction.clone().unwrap_or_else(|| {
            let n = self.resolution.as_ref().map_or(2, Vec::len);
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        })
    }

    pub fn amplitude_list(&self) -> Result<Vec<f64>, CliError> {
        let list = match (&self.amplitudes, &self.amplitude_range) {
            (Some(_), Some(_)) => return Err(bad("amplitudes", "give either amplitudes or amplitude_range")),
            (Some(a), None) => a.clone(),
            (None, Some(r)) => {
                if !(r.lo > 0.0 && r.lo.is_finite()) {
                    return Err(bad("amplitude_range.lo", format!("must be positive, got {}", r.lo)));
                }
                if !(r.hi.is_finite() && r.hi > r.lo) {
                    return Err(bad("amplitude_range.hi", format!("must exceed lo = {}, got {}", r.lo, r.hi)));
                }
                if r.count < 2 {
                    return Err(bad("amplitude_range.count", "must be at least 2"));
                }
                (0..r.count)
                    .map(|i| {
                        let s = i as f64 / (r.count - 1) as f64;
                        match r.spacing {
                            Spacing::Geometric => r.lo * (r.hi / r.lo).powf(s),
                            Spacing::Linear => r.lo + (r.hi - r.lo) * s,
                        }
                    })
                    .collect()
            }
            (None, None) => return Err(bad("amplitudes", "required for sweep modes")),
        };
        if list.is_empty() {
            return Err(bad("amplitudes", "must not be empty"));
        }
        if let Some(v) = list.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(bad("amplitudes", format!("must be positive, got {v}")));
        }
        if list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("amplitudes", "must be strictly increasing"));
        }
        Ok(list)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let res = self.resolution.as_ref().ok_or_else(|| bad("resolution", "required for this mode"))?;
        make_grid(res.len(), res).map_err(|e| bad("resolution", e.to_string()))
    }

    pub fn build_flow(&self) -> Result<FlowField, CliError> {
        let spec = self.flow.as_ref().ok_or_else(|| bad("flow", "required for this mode"))?;
        let grid = self.grid()?;
        let flow = match spec.kind {
            FlowKindSpec::Zero => Ok(FlowField::zero(&grid)),
            FlowKindSpec::Shear => FlowField::shear(&grid, &spec.modes, spec.axis),
            FlowKindSpec::Cellular => FlowField::cellular(&grid),
            FlowKindSpec::Streamfunction => {
                let terms: Vec<_> = spec.modes.iter().map(|m| (m.wavevector.clone(), m.amplitude, m.phase)).collect();
                FlowField::from_streamfunction(&grid, &trig_sum(&grid, &terms))
            }
            FlowKindSpec::Fourier => FlowField::fourier(&grid, &spec.vector_modes),
        };
        flow.map_err(|e| bad("flow", e.to_string()))
    }

    pub fn output_dir(&self, config_path: &Path) -> PathBuf {
        match &self.output_dir {
            Some(d) => d.clone(),
            None => {
                let stem = config_path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                PathBuf::from(format!("{stem}-out"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(json).map_err(|e| CliError::Parse {
            path: PathBuf::from("inline"),
            message: e.to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    fn field_of(err: CliError) -> String {
        match err {
            CliError::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn geometric_range_expands() {
        let cfg = parse(
            r#"{"mode": "diffusivity", "flow": {"kind": "cellular"}, "resolution": [16, 16],
                "amplitude_range": {"lo": 1, "hi": 100, "count": 3}}"#,
        )
        .unwrap();
        let a = cfg.amplitude_list().unwrap();
        assert_eq!(a.len(), 3);
        assert!((a[1] - 10.0).abs() < 1e-12);
        assert_eq!(cfg.direction(), vec![1.0, 0.0]);
    }

    #[test]
    fn reversed_range_names_the_field() {
        let err = parse(
            r#"{"mode": "speed", "flow": {"kind": "cellular"}, "resolution": [16, 16],
                "amplitude_range": {"lo": 100, "hi": 1, "count": 3}}"#,
        )
        .unwrap_err();
        assert_eq!(field_of(err), "amplitude_range.hi");
    }

    #[test]
    fn field_level_errors() {
        let base = r#""flow": {"kind": "cellular"}, "amplitudes": [1, 2]"#;
        let cases = [
            (format!(r#"{{"mode": "speed", {base}, "resolution": [12, 16]}}"#), "resolution"),
            (format!(r#"{{"mode": "speed", {base}, "resolution": [16, 16], "direction": [1, 1]}}"#), "direction"),
            (format!(r#"{{"mode": "speed", {base}, "resolution": [16, 16], "tolerances": {{"cell": -1}}}}"#), "tolerances.cell"),
            (format!(r#"{{"mode": "limits", {base}, "resolution": [16, 16]}}"#), "flow.kind"),
            (format!(r#"{{"mode": "simulate", {base}, "resolution": [16, 16]}}"#), "simulation"),
            (r#"{"mode": "speed", "flow": {"kind": "cellular"}, "resolution": [16, 16], "amplitudes": [2, 1]}"#.to_string(), "amplitudes"),
            (r#"{"mode": "speed", "flow": {"kind": "cellular"}, "resolution": [16, 16], "amplitudes": []}"#.to_string(), "amplitudes"),
            (format!(r#"{{"mode": "speed", {base}, "resolution": [16, 16], "reaction": {{"kind": "polynomial", "coeffs": [0, 1, -1, 2]}}}}"#), "reaction"),
            (format!(r#"{{"mode": "speed", {base}, "resolution": [16, 16], "reaction": {{"kind": "fisher", "rate": 0}}}}"#), "reaction.rate"),
        ];
        for (json, field) in cases {
            assert_eq!(field_of(parse(&json).unwrap_err()), field, "{json}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse(r#"{"mode": "validate", "flwo": {}}"#).unwrap_err();
        assert!(matches!(err, CliError::Parse { .. }));
    }

    #[test]
    fn flows_build_from_specs() {
        let shear = parse(
            r#"{"mode": "validate", "resolution": [16, 16],
                "flow": {"kind": "shear", "modes": [{"wavevector": [1], "amplitude": 1, "phase": -1.5707963267948966}]}}"#,
        )
        .unwrap();
        let u = shear.build_flow().unwrap();
        assert!((u.max_along(&[1.0, 0.0]) - 1.0).abs() < 1e-12);

        let bad_mean = parse(
            r#"{"mode": "validate", "resolution": [16, 16],
                "flow": {"kind": "shear", "modes": [{"wavevector": [0], "amplitude": 1}]}}"#,
        )
        .unwrap();
        assert_eq!(field_of(bad_mean.build_flow().unwrap_err()), "flow");
    }
}
