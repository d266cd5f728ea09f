//! Two-level worked example: `H0 = w sz + a sx` under continuous measurement
//! of an observable sharing its eigenbasis, plus the three figure sweeps.

use std::f64::consts::SQRT_2;

use nalgebra::DVector;

use crate::dynamics::{evolve_exp, SplitHamiltonian};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_distance, running_average_speed, speed_from_operators, operator_speeds};
use crate::linalg::{commutator_norm, ComplexMatrix, StateVector, C64};
use crate::measurement::{zeno_prediction, MeasurementSpec, Penalty, Record};

/// Structural tolerance for `[A, H0] = 0` and `eig(A) = {a1, a2}`.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Largest integration step used inside the time-averaged sweep.
pub const AVERAGE_MAX_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct SpinExampleConfig {
    pub omega: f64,
    pub alpha: f64,
    pub hbar: f64,
    pub a1: f64,
    pub a2: f64,
    pub delta_a: f64,
    pub a_record: f64,
    pub f: f64,
    pub t_final: f64,
    pub samples: usize,
}

impl Default for SpinExampleConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            alpha: 1.0,
            hbar: 1.0,
            a1: 0.03,
            a2: 0.05,
            delta_a: 0.01,
            a_record: 0.02,
            f: 5.0,
            t_final: 0.1,
            samples: 101,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { field, reason: reason.into() }
}

impl SpinExampleConfig {
    pub fn with_strength(&self, f: f64) -> Self {
        Self { f, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("omega", self.omega),
            ("alpha", self.alpha),
            ("hbar", self.hbar),
            ("a1", self.a1),
            ("a2", self.a2),
            ("delta_a", self.delta_a),
            ("a_record", self.a_record),
            ("f", self.f),
            ("t_final", self.t_final),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(invalid(field, format!("{value} is not finite")));
            }
        }
        if self.a2 <= self.a1 {
            return Err(invalid("a2", format!("a2 = {} must exceed a1 = {}", self.a2, self.a1)));
        }
        if self.delta_a <= 0.0 {
            return Err(invalid("delta_a", "accuracy must be positive"));
        }
        if self.hbar <= 0.0 {
            return Err(invalid("hbar", "must be positive"));
        }
        if self.f < 0.0 {
            return Err(invalid("f", "strength must be nonnegative"));
        }
        if self.t_final <= 0.0 {
            return Err(invalid("t_final", "must be positive"));
        }
        if self.samples < 3 {
            return Err(invalid("samples", format!("need at least 3, got {}", self.samples)));
        }
        Ok(())
    }

    pub fn free_hamiltonian(&self) -> ComplexMatrix {
        ComplexMatrix::pauli_z()
            .scaled(self.omega)
            .add(&ComplexMatrix::pauli_x().scaled(self.alpha))
            .expect("2x2 operands")
    }

    /// `A = a21/(2 sqrt2) [[sqrt2 trA/a21 + 1, 1], [1, sqrt2 trA/a21 - 1]]`.
    pub fn observable(&self) -> ComplexMatrix {
        let a21 = self.a2 - self.a1;
        let ratio = (self.a1 + self.a2) / a21;
        let rows = vec![
            vec![SQRT_2 * ratio + 1.0, 1.0],
            vec![1.0, SQRT_2 * ratio - 1.0],
        ];
        ComplexMatrix::from_real_rows(&rows, crate::linalg::Symmetry::Hermitian)
            .expect("real symmetric 2x2")
            .scaled(a21 / (2.0 * SQRT_2))
    }

    /// Uniform sampling grid on `[0, t_final]`.
    pub fn time_grid(&self) -> Vec<f64> {
        uniform_grid(self.t_final, self.samples)
    }
}

pub fn uniform_grid(t_final: f64, samples: usize) -> Vec<f64> {
    let last = (samples - 1) as f64;
    (0..samples).map(|k| t_final * k as f64 / last).collect()
}

/// Free Hamiltonian, measurement and the initial state `(|0> + |1>)/sqrt2`.
pub fn build_example(config: &SpinExampleConfig) -> Result<(SplitHamiltonian, MeasurementSpec, StateVector)> {
    config.validate()?;
    let h0 = config.free_hamiltonian();
    let a = config.observable();
    let spec = MeasurementSpec::new(
        a.clone(),
        Record::Constant(config.a_record),
        config.delta_a,
        config.f,
        Penalty::QuarterSquare,
    )?
    .with_hbar(config.hbar)?;
    let eig = &spec.eigen().values;
    let spread = (eig[0] - config.a1).abs().max((eig[1] - config.a2).abs());
    if spread > STRUCTURE_TOL {
        return Err(invalid(
            "a1",
            format!("observable eigenvalues {eig:?} deviate from (a1, a2) by {spread:e}"),
        ));
    }
    let comm = commutator_norm(&a, &h0)?;
    if comm > STRUCTURE_TOL {
        return Err(invalid(
            "alpha",
            format!("[A, H0] = {comm:e}; the example requires omega = alpha"),
        ));
    }
    let h = SplitHamiltonian::with_measurement(h0, spec.clone())?;
    Ok((h, spec, StateVector::plus()))
}

/// Scalars of the closed-form propagated state. `omega_exp` is the second
/// exponent and is unrelated to the coupling `omega`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormCoefficients {
    pub p: f64,
    pub delta: f64,
    pub gamma: C64,
    pub omega_exp: C64,
    delta_a: f64,
}

impl ClosedFormCoefficients {
    pub fn new(config: &SpinExampleConfig) -> Self {
        let (f, a, a1, a2) = (config.f, config.a_record, config.a1, config.a2);
        let d2 = config.delta_a * config.delta_a;
        // Energy splitting sqrt2 * omega / hbar; reduces to sqrt2 at omega = hbar.
        let phase = SQRT_2 * config.omega / config.hbar;
        Self {
            p: f * (2.0 * a - a1 - a2) * (a1 - a2),
            delta: f * (2.0 * a * a - 2.0 * a * (a1 + a2) + a1 * a1 + a2 * a2) / (4.0 * d2),
            gamma: C64::new(f * (a - a1).powi(2) / (4.0 * d2), -phase),
            omega_exp: C64::new(f * (a - a2).powi(2) / (4.0 * d2), phase),
            delta_a: config.delta_a,
        }
    }

    fn weights(&self) -> (C64, C64, C64) {
        let d2 = self.delta_a * self.delta_a;
        let ip = C64::new(0.0, self.p);
        let first = C64::new(8.0 * (2.0 + SQRT_2) * d2, 0.0) - ip * (1.0 + SQRT_2);
        let second = C64::new(8.0 * (SQRT_2 - 2.0) * d2, 0.0) + ip * (SQRT_2 - 1.0);
        let denom = (C64::new(8.0 * SQRT_2 * d2, 0.0) - ip) * (2.0 * SQRT_2);
        (first, second, denom)
    }

    fn z_pair(&self, t: f64, shift: f64) -> (C64, C64) {
        let e_gamma = ((self.gamma - self.delta - shift) * t).exp();
        let e_omega = ((self.omega_exp - self.delta - shift) * t).exp();
        let (first, second, denom) = self.weights();
        let z1 = (e_gamma * first + e_omega * second) / denom;
        let z2 = (e_gamma + e_omega) / (2.0 * SQRT_2);
        (z1, z2)
    }

    /// Unnormalized `z1(t)`; underflows for large `f t`.
    pub fn z1(&self, t: f64) -> C64 {
        self.z_pair(t, 0.0).0
    }

    /// Unnormalized `z2(t)`.
    pub fn z2(&self, t: f64) -> C64 {
        self.z_pair(t, 0.0).1
    }

    /// `N(t) = sqrt(|z1|^2 + |z2|^2)`.
    pub fn normalization(&self, t: f64) -> f64 {
        let (z1, z2) = self.z_pair(t, 0.0);
        (z1.norm_sqr() + z2.norm_sqr()).sqrt()
    }

    /// Normalized `(z1 |0> + z2 |1>) / N`. A common real factor is removed
    /// from both exponentials first so large `f t` neither overflows nor
    /// underflows.
    pub fn state(&self, t: f64) -> Result<StateVector> {
        let shift = (self.gamma.re - self.delta).max(self.omega_exp.re - self.delta);
        let (z1, z2) = self.z_pair(t, shift);
        StateVector::normalize(DVector::from_vec(vec![z1, z2]))
    }
}

/// Closed-form state at time `t`; requires the constant record this
/// example assumes.
pub fn closed_form_state(config: &SpinExampleConfig, t: f64) -> Result<StateVector> {
    config.validate()?;
    ClosedFormCoefficients::new(config).state(t)
}

/// `S0(infinity) = 2 arccos |<psi0|a_r>|` for the Zeno attractor `a_r`.
pub fn saturation_distance(config: &SpinExampleConfig) -> Result<f64> {
    let (_, spec, psi0) = build_example(config)?;
    let zeno = zeno_prediction(&spec, &psi0)?;
    geodesic_distance(&psi0, &zeno.attractor_state)
}

/// A measured system independent of the spin parametrization.
#[derive(Clone, Debug)]
pub struct MeasuredSystem {
    pub h0: ComplexMatrix,
    pub spec: MeasurementSpec,
    pub psi0: StateVector,
}

impl MeasuredSystem {
    pub fn from_config(config: &SpinExampleConfig) -> Result<Self> {
        let (h, spec, psi0) = build_example(config)?;
        Ok(Self { h0: h.h0().clone(), spec, psi0 })
    }

    pub fn hamiltonian(&self, f: f64) -> Result<SplitHamiltonian> {
        SplitHamiltonian::with_measurement(self.h0.clone(), self.spec.with_strength(f)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedRow {
    pub f: f64,
    pub t: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AverageSpeedRow {
    pub total_time: f64,
    pub f: f64,
    pub v_bar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceRow {
    pub total_time: f64,
    pub f: f64,
    pub s0: f64,
}

/// `0` followed by 39 geometrically spaced strengths from 0.1 to 100.
pub fn default_strength_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..39).map(|k| 0.1 * 1000f64.powf(k as f64 / 38.0)));
    *grid.last_mut().unwrap() = 100.0;
    grid
}

/// `T = 0.01 k` for `k = 1..=300`.
pub fn default_time_grid() -> Vec<f64> {
    (1..=300).map(|k| k as f64 / 100.0).collect()
}

fn check_increasing(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if grid[0] <= 0.0 || !grid.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidGrid(format!("{name} grid must be positive and finite")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

/// Speed at time `t` for each strength.
pub fn speed_vs_strength(system: &MeasuredSystem, f_grid: &[f64], t: f64) -> Result<Vec<SpeedRow>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidGrid(format!("evaluation time {t} must be nonnegative")));
    }
    f_grid
        .iter()
        .map(|&f| {
            let h = system.hamiltonian(f)?;
            let psi = if t == 0.0 {
                system.psi0.clone()
            } else {
                evolve_exp(&h, &system.psi0, &[0.0, t])?.last_psi().clone()
            };
            Ok(SpeedRow { f, t, v: speed_from_operators(&h, &psi, t)? })
        })
        .collect()
}

/// Refines `[0, T_1, T_2, ...]` so no step exceeds `max_step`; returns the
/// fine grid and the index of each `T_k` in it.
fn refine(t_grid: &[f64], max_step: f64) -> (Vec<f64>, Vec<usize>) {
    let mut fine = vec![0.0];
    let mut marks = Vec::with_capacity(t_grid.len());
    let mut start = 0.0;
    for &end in t_grid {
        let pieces = ((end - start) / max_step).ceil().max(1.0) as usize;
        for j in 1..pieces {
            fine.push(start + (end - start) * j as f64 / pieces as f64);
        }
        fine.push(end);
        marks.push(fine.len() - 1);
        start = end;
    }
    (fine, marks)
}

/// `V_bar(T)` for every `T` in the grid and every strength, rows grouped by
/// strength.
pub fn average_speed_vs_time(
    system: &MeasuredSystem,
    t_grid: &[f64],
    f_values: &[f64],
) -> Result<Vec<AverageSpeedRow>> {
    check_increasing(t_grid, "T")?;
    let (fine, marks) = refine(t_grid, AVERAGE_MAX_STEP);
    let mut rows = Vec::with_capacity(t_grid.len() * f_values.len());
    for &f in f_values {
        let h = system.hamiltonian(f)?;
        let traj = evolve_exp(&h, &system.psi0, &fine)?;
        let running = running_average_speed(&operator_speeds(&h, &traj)?, &fine)?;
        rows.extend(t_grid.iter().zip(&marks).map(|(&total_time, &k)| AverageSpeedRow {
            total_time,
            f,
            v_bar: running[k],
        }));
    }
    Ok(rows)
}

/// `S0(T)` for every `T` in the grid and every strength.
pub fn distance_vs_time(system: &MeasuredSystem, t_grid: &[f64], f_values: &[f64]) -> Result<Vec<DistanceRow>> {
    check_increasing(t_grid, "T")?;
    let mut times = vec![0.0];
    times.extend_from_slice(t_grid);
    let mut rows = Vec::with_capacity(t_grid.len() * f_values.len());
    for &f in f_values {
        let h = system.hamiltonian(f)?;
        let traj = evolve_exp(&h, &system.psi0, &times)?;
        for (k, &total_time) in t_grid.iter().enumerate() {
            rows.push(DistanceRow {
                total_time,
                f,
                s0: geodesic_distance(&system.psi0, &traj.psi[k + 1])?,
            });
        }
    }
    Ok(rows)
}

/// Speed at `config.t_final` against measurement strength.
pub fn figure1_sweep(config: &SpinExampleConfig, f_grid: &[f64]) -> Result<Vec<SpeedRow>> {
    speed_vs_strength(&MeasuredSystem::from_config(config)?, f_grid, config.t_final)
}

pub fn figure2_sweep(config: &SpinExampleConfig, t_grid: &[f64], f_values: &[f64]) -> Result<Vec<AverageSpeedRow>> {
    average_speed_vs_time(&MeasuredSystem::from_config(config)?, t_grid, f_values)
}

pub fn figure3_sweep(config: &SpinExampleConfig, t_grid: &[f64], f_values: &[f64]) -> Result<Vec<DistanceRow>> {
    distance_vs_time(&MeasuredSystem::from_config(config)?, t_grid, f_values)
}
