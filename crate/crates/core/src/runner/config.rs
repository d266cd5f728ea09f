//! TOML run configuration. Every section is optional and unknown keys are
//! rejected.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RunError;
use crate::linalg::{commutator_norm, ComplexMatrix, StateVector, C64, MAX_DIM};
use crate::measurement::{MeasurementSpec, Penalty, Record, COMMUTATOR_TOL};
use crate::spin::{build_example, default_strength_grid, MeasuredSystem, SpinExampleConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "simulate")]
    Simulate,
    #[serde(rename = "sweep-f")]
    SweepF,
    #[serde(rename = "sweep-T-speed", alias = "sweep-t-speed")]
    SweepTSpeed,
    #[serde(rename = "sweep-T-distance", alias = "sweep-t-distance")]
    SweepTDistance,
    #[serde(rename = "zeno-check")]
    ZenoCheck,
    #[serde(rename = "smalltime-check")]
    SmalltimeCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::SweepF => "sweep-f",
            Experiment::SweepTSpeed => "sweep-T-speed",
            Experiment::SweepTDistance => "sweep-T-distance",
            Experiment::ZenoCheck => "zeno-check",
            Experiment::SmalltimeCheck => "smalltime-check",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    #[default]
    Spin,
    Matrix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    #[default]
    QuarterSquare,
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    pub hbar: f64,
    /// Spin example couplings; default 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Matrix system: real and optional imaginary parts of `H0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0_imag: Option<Vec<Vec<f64>>>,
    /// Matrix system initial state; normalized on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi0_imag: Option<Vec<f64>>,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            kind: SystemKind::Spin,
            hbar: 1.0,
            omega: None,
            alpha: None,
            h0: None,
            h0_imag: None,
            psi0: None,
            psi0_imag: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    /// Spin example eigenvalues of `A`; default 0.03 and 0.05.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    /// Matrix system observable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable_imag: Option<Vec<Vec<f64>>>,
    pub accuracy: f64,
    pub record: f64,
    pub strength: f64,
    pub penalty: PenaltyKind,
    pub penalty_coefficient: f64,
    pub penalty_exponent: f64,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self {
            a1: None,
            a2: None,
            observable: None,
            observable_imag: None,
            accuracy: 0.01,
            record: 0.02,
            strength: 5.0,
            penalty: PenaltyKind::QuarterSquare,
            penalty_coefficient: 0.25,
            penalty_exponent: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Evaluation time for `sweep-f`.
    pub t_eval: f64,
    pub f_grid: Vec<f64>,
    /// Strengths for the `T` sweeps.
    pub f_values: Vec<f64>,
    /// Explicit `T` grid; otherwise `k t_max / t_count` for `k = 1..=t_count`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    pub t_max: f64,
    pub t_count: usize,
    /// Horizon and sample count for `simulate` and `zeno-check`.
    pub t_final: f64,
    pub samples: usize,
    /// Horizon for `smalltime-check`.
    pub t_small: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_eval: 0.1,
            f_grid: default_strength_grid(),
            f_values: vec![0.0, 5.0],
            t_grid: None,
            t_max: 3.0,
            t_count: 300,
            t_final: 3.0,
            samples: 301,
            t_small: 0.01,
        }
    }
}

impl GridSection {
    pub fn resolved_t_grid(&self) -> Vec<f64> {
        match &self.t_grid {
            Some(grid) => grid.clone(),
            None => (1..=self.t_count)
                .map(|k| k as f64 * self.t_max / self.t_count as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn invalid(field: &str, reason: impl Into<String>) -> RunError {
    RunError::Validation { field: field.to_string(), reason: reason.into() }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, RunError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| RunError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        self.check_numbers()?;
        self.measured_system()?;
        if self.experiment == Experiment::SmalltimeCheck {
            let system = self.measured_system()?;
            let g = system.spec.penalty_operator(0.0);
            let norm = commutator_norm(&g, &system.h0).map_err(|e| invalid("system.h0", e.to_string()))?;
            if norm * (self.system.hbar * self.measurement.strength).max(1.0) > COMMUTATOR_TOL {
                return Err(invalid(
                    "measurement.observable",
                    format!("smalltime-check needs [g(A), H0] = 0, got norm {norm:e}"),
                ));
            }
        }
        Ok(())
    }

    fn check_numbers(&self) -> Result<(), RunError> {
        let s = &self.system;
        let m = &self.measurement;
        let g = &self.grid;
        let mut scalars = vec![
            ("system.hbar", s.hbar),
            ("measurement.accuracy", m.accuracy),
            ("measurement.record", m.record),
            ("measurement.strength", m.strength),
            ("measurement.penalty_coefficient", m.penalty_coefficient),
            ("measurement.penalty_exponent", m.penalty_exponent),
            ("grid.t_eval", g.t_eval),
            ("grid.t_max", g.t_max),
            ("grid.t_final", g.t_final),
            ("grid.t_small", g.t_small),
        ];
        for (field, value) in [
            ("system.omega", s.omega),
            ("system.alpha", s.alpha),
            ("measurement.a1", m.a1),
            ("measurement.a2", m.a2),
        ] {
            if let Some(v) = value {
                scalars.push((field, v));
            }
        }
        for (field, value) in scalars {
            if !value.is_finite() {
                return Err(invalid(field, format!("{value} is not finite")));
            }
        }
        let arrays: [(&str, Option<&Vec<f64>>); 5] = [
            ("grid.f_grid", Some(&g.f_grid)),
            ("grid.f_values", Some(&g.f_values)),
            ("grid.t_grid", g.t_grid.as_ref()),
            ("system.psi0", s.psi0.as_ref()),
            ("system.psi0_imag", s.psi0_imag.as_ref()),
        ];
        for (field, values) in arrays {
            if let Some(v) = values {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(field, "entries must be finite"));
                }
            }
        }
        for (field, rows) in [
            ("system.h0", &s.h0),
            ("system.h0_imag", &s.h0_imag),
            ("measurement.observable", &m.observable),
            ("measurement.observable_imag", &m.observable_imag),
        ] {
            if let Some(rows) = rows {
                if rows.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(invalid(field, "entries must be finite"));
                }
            }
        }

        if s.hbar <= 0.0 {
            return Err(invalid("system.hbar", "must be positive"));
        }
        if m.accuracy <= 0.0 {
            return Err(invalid("measurement.accuracy", "must be positive"));
        }
        if m.strength < 0.0 {
            return Err(invalid("measurement.strength", "must be nonnegative"));
        }
        if g.t_eval < 0.0 {
            return Err(invalid("grid.t_eval", "must be nonnegative"));
        }
        for (field, value) in [("grid.t_max", g.t_max), ("grid.t_final", g.t_final), ("grid.t_small", g.t_small)] {
            if value <= 0.0 {
                return Err(invalid(field, "must be positive"));
            }
        }
        if g.t_count == 0 {
            return Err(invalid("grid.t_count", "must be at least 1"));
        }
        if g.samples < 3 {
            return Err(invalid("grid.samples", format!("need at least 3, got {}", g.samples)));
        }
        for (field, values) in [("grid.f_grid", &g.f_grid), ("grid.f_values", &g.f_values)] {
            if values.is_empty() {
                return Err(invalid(field, "must not be empty"));
            }
            if values.iter().any(|&f| f < 0.0) {
                return Err(invalid(field, "strengths must be nonnegative"));
            }
        }
        if let Some(t) = &g.t_grid {
            if t.is_empty() || t[0] <= 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("grid.t_grid", "must be nonempty, positive and strictly increasing"));
            }
        }
        Ok(())
    }

    fn penalty(&self) -> Penalty {
        let m = &self.measurement;
        match m.penalty {
            PenaltyKind::QuarterSquare => Penalty::QuarterSquare,
            PenaltyKind::Power => Penalty::Power {
                coefficient: m.penalty_coefficient,
                exponent: m.penalty_exponent,
            },
        }
    }

    /// The spin example parameters, when `system.kind = "spin"`.
    pub fn spin_config(&self) -> Option<SpinExampleConfig> {
        if self.system.kind != SystemKind::Spin {
            return None;
        }
        let defaults = SpinExampleConfig::default();
        Some(SpinExampleConfig {
            omega: self.system.omega.unwrap_or(defaults.omega),
            alpha: self.system.alpha.unwrap_or(defaults.alpha),
            hbar: self.system.hbar,
            a1: self.measurement.a1.unwrap_or(defaults.a1),
            a2: self.measurement.a2.unwrap_or(defaults.a2),
            delta_a: self.measurement.accuracy,
            a_record: self.measurement.record,
            f: self.measurement.strength,
            t_final: self.grid.t_final,
            samples: self.grid.samples,
        })
    }

    /// Builds the Hamiltonian, measurement and initial state described by
    /// the configuration.
    pub fn measured_system(&self) -> Result<MeasuredSystem, RunError> {
        match self.system.kind {
            SystemKind::Spin => self.spin_system(),
            SystemKind::Matrix => self.matrix_system(),
        }
    }

    fn spin_system(&self) -> Result<MeasuredSystem, RunError> {
        let s = &self.system;
        let m = &self.measurement;
        for (field, present) in [
            ("system.h0", s.h0.is_some()),
            ("system.h0_imag", s.h0_imag.is_some()),
            ("system.psi0", s.psi0.is_some()),
            ("system.psi0_imag", s.psi0_imag.is_some()),
            ("measurement.observable", m.observable.is_some()),
            ("measurement.observable_imag", m.observable_imag.is_some()),
        ] {
            if present {
                return Err(invalid(field, "only valid with system.kind = \"matrix\""));
            }
        }
        if m.penalty != PenaltyKind::QuarterSquare {
            return Err(invalid("measurement.penalty", "the spin example uses quarter-square"));
        }
        let config = self.spin_config().expect("spin kind");
        let (h, spec, psi0) = build_example(&config).map_err(|e| match e {
            crate::error::Error::InvalidConfig { field, reason } => {
                let section = match field {
                    "omega" | "alpha" | "hbar" => "system",
                    "t_final" | "samples" => "grid",
                    "f" => return invalid("measurement.strength", reason),
                    "delta_a" => return invalid("measurement.accuracy", reason),
                    "a_record" => return invalid("measurement.record", reason),
                    _ => "measurement",
                };
                invalid(&format!("{section}.{field}"), reason)
            }
            other => invalid("system", other.to_string()),
        })?;
        Ok(MeasuredSystem { h0: h.h0().clone(), spec, psi0 })
    }

    fn matrix_system(&self) -> Result<MeasuredSystem, RunError> {
        let s = &self.system;
        let m = &self.measurement;
        for (field, present) in [
            ("system.omega", s.omega.is_some()),
            ("system.alpha", s.alpha.is_some()),
            ("measurement.a1", m.a1.is_some()),
            ("measurement.a2", m.a2.is_some()),
        ] {
            if present {
                return Err(invalid(field, "only valid with system.kind = \"spin\""));
            }
        }
        let h0 = hermitian_from_rows("system.h0", s.h0.as_ref(), s.h0_imag.as_ref())?;
        let observable =
            hermitian_from_rows("measurement.observable", m.observable.as_ref(), m.observable_imag.as_ref())?;
        if observable.dim() != h0.dim() {
            return Err(invalid(
                "measurement.observable",
                format!("dimension {} differs from system.h0 dimension {}", observable.dim(), h0.dim()),
            ));
        }
        let re = s.psi0.as_ref().ok_or_else(|| invalid("system.psi0", "required for a matrix system"))?;
        if re.len() != h0.dim() {
            return Err(invalid("system.psi0", format!("length {} differs from dimension {}", re.len(), h0.dim())));
        }
        let im = match &s.psi0_imag {
            Some(im) if im.len() != re.len() => {
                return Err(invalid("system.psi0_imag", "length differs from system.psi0"));
            }
            Some(im) => im.clone(),
            None => vec![0.0; re.len()],
        };
        let amps = DVector::from_iterator(re.len(), re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)));
        let psi0 = StateVector::normalize(amps).map_err(|e| invalid("system.psi0", e.to_string()))?;
        let spec = MeasurementSpec::new(
            observable,
            Record::Constant(m.record),
            m.accuracy,
            m.strength,
            self.penalty(),
        )
        .and_then(|spec| spec.with_hbar(s.hbar))
        .map_err(|e| invalid("measurement", e.to_string()))?;
        Ok(MeasuredSystem { h0, spec, psi0 })
    }
}

fn hermitian_from_rows(
    field: &str,
    re: Option<&Vec<Vec<f64>>>,
    im: Option<&Vec<Vec<f64>>>,
) -> Result<ComplexMatrix, RunError> {
    let re = re.ok_or_else(|| invalid(field, "required for a matrix system"))?;
    let dim = re.len();
    if dim == 0 || dim > MAX_DIM {
        return Err(invalid(field, format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    if re.iter().any(|row| row.len() != dim) {
        return Err(invalid(field, "matrix must be square"));
    }
    if let Some(im) = im {
        if im.len() != dim || im.iter().any(|row| row.len() != dim) {
            return Err(invalid(field, "imaginary part must match the real part's shape"));
        }
    }
    let data = DMatrix::from_fn(dim, dim, |i, j| {
        C64::new(re[i][j], im.map_or(0.0, |im| im[i][j]))
    });
    ComplexMatrix::hermitian(data).map_err(|e| invalid(field, e.to_string()))
}
