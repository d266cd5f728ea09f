//! Evolution of `i hbar d|Phi>/dt = (H0 - i H1)|Phi>`.
//!
//! Every route integrates the linear equation for the unnormalized state and
//! only normalizes when building the `psi` view of a [`Trajectory`].

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{commutator_norm, expectation, matrix_exp, ComplexMatrix, StateVector, C64};
use crate::measurement::{build_h1, MeasurementSpec, COMMUTATOR_TOL};

/// Upper bound on the RK4 step.
pub const DEFAULT_MAX_STEP: f64 = 1e-3;
/// Minimum number of RK4 steps across the whole grid.
pub const MIN_STEPS: f64 = 2000.0;
/// Relative change in the final state tolerated when the step is halved.
pub const RICHARDSON_TOL: f64 = 1e-8;
/// Survival probability below which the state counts as filtered out.
pub const SURVIVAL_FLOOR: f64 = 1e-300;
/// Relative step mismatch below which `evolve_exp` reuses its propagator.
/// Uniform grids carry rounding jitter of order 1e-13 in their steps.
pub const STEP_REUSE_TOL: f64 = 1e-10;

/// Source of the measurement generator `H1(t)`.
#[derive(Clone)]
pub enum H1Generator {
    Constant(ComplexMatrix),
    Measurement(MeasurementSpec),
    Function(Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>),
}

impl fmt::Debug for H1Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            H1Generator::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            H1Generator::Measurement(s) => f.debug_tuple("Measurement").field(s).finish(),
            H1Generator::Function(_) => write!(f, "Function"),
        }
    }
}

/// `H = H0 - i H1` together with the value of `hbar`.
#[derive(Clone, Debug)]
pub struct SplitHamiltonian {
    h0: ComplexMatrix,
    h1: H1Generator,
    hbar: f64,
}

fn check_hermitian_dim(m: &ComplexMatrix, dim: usize) -> Result<()> {
    if !m.is_hermitian() {
        return Err(Error::HermitianRequired);
    }
    if m.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: m.dim(),
        });
    }
    Ok(())
}

fn check_hbar(hbar: f64) -> Result<()> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::InvalidSpec(format!("hbar {hbar} must be positive")));
    }
    Ok(())
}

impl SplitHamiltonian {
    pub fn new(h0: ComplexMatrix, h1: ComplexMatrix, hbar: f64) -> Result<Self> {
        check_hbar(hbar)?;
        check_hermitian_dim(&h0, h0.dim())?;
        check_hermitian_dim(&h1, h0.dim())?;
        Ok(Self {
            h0,
            h1: H1Generator::Constant(h1),
            hbar,
        })
    }

    /// Closed system, `H1 = 0`.
    pub fn unitary(h0: ComplexMatrix, hbar: f64) -> Result<Self> {
        let zero = ComplexMatrix::zeros(h0.dim())?;
        Self::new(h0, zero, hbar)
    }

    /// `H1` built from a measurement spec; `hbar` is taken from the spec.
    pub fn with_measurement(h0: ComplexMatrix, spec: MeasurementSpec) -> Result<Self> {
        check_hermitian_dim(&h0, spec.dim())?;
        Ok(Self {
            h0,
            hbar: spec.hbar(),
            h1: H1Generator::Measurement(spec),
        })
    }

    /// Arbitrary time-dependent `H1(t)`; Hermiticity is checked on every
    /// evaluation.
    pub fn time_dependent(
        h0: ComplexMatrix,
        h1: Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>,
        hbar: f64,
    ) -> Result<Self> {
        check_hbar(hbar)?;
        check_hermitian_dim(&h0, h0.dim())?;
        Ok(Self {
            h0,
            h1: H1Generator::Function(h1),
            hbar,
        })
    }

    pub fn h0(&self) -> &ComplexMatrix {
        &self.h0
    }

    pub fn h1_generator(&self) -> &H1Generator {
        &self.h1
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h1_at(&self, t: f64) -> Result<ComplexMatrix> {
        match &self.h1 {
            H1Generator::Constant(m) => Ok(m.clone()),
            H1Generator::Measurement(spec) => Ok(build_h1(spec, t)),
            H1Generator::Function(f) => {
                let m = f(t);
                check_hermitian_dim(&m, self.dim())?;
                Ok(m)
            }
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match &self.h1 {
            H1Generator::Constant(_) => true,
            H1Generator::Measurement(spec) => spec.record().is_constant(),
            H1Generator::Function(_) => false,
        }
    }

    /// `-(i/hbar)(H0 - i H1(t)) = -(i H0 + H1(t)) / hbar`.
    pub fn generator_at(&self, t: f64) -> Result<ComplexMatrix> {
        let h1 = self.h1_at(t)?;
        let scale = C64::new(-1.0 / self.hbar, 0.0);
        let sum = self.h0.scaled_complex(C64::i()).add(&h1)?;
        Ok(sum.scaled_complex(scale))
    }

    /// Largest `max |[H1(t), H0]|` over the given times.
    pub fn commutator_norm_over(&self, times: &[f64]) -> Result<f64> {
        match &self.h1 {
            H1Generator::Constant(m) => commutator_norm(m, &self.h0),
            _ => {
                let mut worst = 0.0_f64;
                for &t in times {
                    worst = worst.max(commutator_norm(&self.h1_at(t)?, &self.h0)?);
                }
                Ok(worst)
            }
        }
    }
}

/// Sampled evolution: unnormalized `phi`, normalized `psi`, and the survival
/// probability `|phi|^2`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub phi: Vec<StateVector>,
    pub psi: Vec<StateVector>,
    pub survival: Vec<f64>,
}

impl Trajectory {
    /// Assembles a trajectory from raw unnormalized amplitudes.
    pub fn from_states(times: Vec<f64>, states: Vec<DVector<C64>>) -> Result<Self> {
        check_grid(&times)?;
        if states.len() != times.len() {
            return Err(Error::InvalidGrid(format!(
                "{} states for {} times",
                states.len(),
                times.len()
            )));
        }
        let mut phi = Vec::with_capacity(states.len());
        let mut psi = Vec::with_capacity(states.len());
        let mut survival = Vec::with_capacity(states.len());
        for (state, &t) in states.into_iter().zip(&times) {
            if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite("trajectory state"));
            }
            let p = state.norm_squared();
            if !(p >= SURVIVAL_FLOOR) {
                return Err(Error::StateFilteredOut { time: t });
            }
            let phi_k = StateVector::unnormalized(state)?;
            psi.push(phi_k.to_normalized());
            phi.push(phi_k);
            survival.push(p);
        }
        Ok(Self {
            times,
            phi,
            psi,
            survival,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn first_psi(&self) -> &StateVector {
        &self.psi[0]
    }

    pub fn last_psi(&self) -> &StateVector {
        &self.psi[self.psi.len() - 1]
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidGrid("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("non-finite time".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_initial(h: &SplitHamiltonian, phi0: &StateVector) -> Result<()> {
    if phi0.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: phi0.dim(),
        });
    }
    Ok(())
}

/// Default RK4 step for a grid: `min(1e-3, T / 2000)`.
pub fn default_step(times: &[f64]) -> f64 {
    let span = times[times.len() - 1] - times[0];
    if span > 0.0 {
        DEFAULT_MAX_STEP.min(span / MIN_STEPS)
    } else {
        DEFAULT_MAX_STEP
    }
}

fn rk4_pass(
    h: &SplitHamiltonian,
    phi0: &DVector<C64>,
    times: &[f64],
    max_step: f64,
) -> Result<Option<Vec<DVector<C64>>>> {
    let constant = if h.is_time_independent() {
        Some(h.generator_at(times[0])?)
    } else {
        None
    };
    let generator = |t: f64| -> Result<ComplexMatrix> {
        match &constant {
            Some(m) => Ok(m.clone()),
            None => h.generator_at(t),
        }
    };

    let mut out = Vec::with_capacity(times.len());
    let mut state = phi0.clone();
    out.push(state.clone());
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / max_step).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        let half = C64::new(dt / 2.0, 0.0);
        let full = C64::new(dt, 0.0);
        for k in 0..steps {
            let t = w[0] + k as f64 * dt;
            let m0 = generator(t)?;
            let m_mid = generator(t + dt / 2.0)?;
            let m1 = generator(t + dt)?;
            let k1 = m0.apply_raw(&state);
            let k2 = m_mid.apply_raw(&(&state + &k1 * half));
            let k3 = m_mid.apply_raw(&(&state + &k2 * half));
            let k4 = m1.apply_raw(&(&state + &k3 * full));
            state += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4)
                * C64::new(dt / 6.0, 0.0);
        }
        if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Ok(None);
        }
        out.push(state.clone());
    }
    Ok(Some(out))
}

fn relative_change(coarse: &[DVector<C64>], fine: &[DVector<C64>]) -> f64 {
    let a = &coarse[coarse.len() - 1];
    let b = &fine[fine.len() - 1];
    let scale = b.norm();
    if scale > 0.0 {
        (a - b).norm() / scale
    } else {
        f64::INFINITY
    }
}

/// Classical fourth-order Runge-Kutta with the default step.
pub fn evolve_rk4(h: &SplitHamiltonian, phi0: &StateVector, times: &[f64]) -> Result<Trajectory> {
    check_grid(times)?;
    evolve_rk4_with_step(h, phi0, times, default_step(times))
}

/// RK4 with a caller-chosen base step. The run at `step` is compared with a
/// run at `step / 2`; if they differ by more than `RICHARDSON_TOL` one more
/// halving is tried before giving up.
pub fn evolve_rk4_with_step(
    h: &SplitHamiltonian,
    phi0: &StateVector,
    times: &[f64],
    step: f64,
) -> Result<Trajectory> {
    check_grid(times)?;
    check_initial(h, phi0)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidGrid(format!("step {step} must be positive")));
    }
    let start = phi0.amplitudes();
    let coarse = rk4_pass(h, start, times, step)?;
    let fine = rk4_pass(h, start, times, step / 2.0)?;
    let mut change = f64::INFINITY;
    if let (Some(c), Some(f)) = (&coarse, &fine) {
        change = relative_change(c, f);
        if change < RICHARDSON_TOL {
            return Trajectory::from_states(times.to_vec(), fine.unwrap());
        }
    }
    let finer = rk4_pass(h, start, times, step / 4.0)?;
    if let (Some(f), Some(ff)) = (&fine, &finer) {
        change = relative_change(f, ff);
        if change < RICHARDSON_TOL {
            return Trajectory::from_states(times.to_vec(), finer.unwrap());
        }
    }
    Err(Error::StepSizeFailure { change })
}

/// `phi(t) = exp(-i (H0 - i H1)(t - t0) / hbar) phi0` for time-independent `H1`.
pub fn evolve_exp(h: &SplitHamiltonian, phi0: &StateVector, times: &[f64]) -> Result<Trajectory> {
    check_grid(times)?;
    check_initial(h, phi0)?;
    if !h.is_time_independent() {
        return Err(Error::TimeDependentGenerator("evolve_exp"));
    }
    let generator = h.generator_at(times[0])?;
    let mut states = Vec::with_capacity(times.len());
    let mut state = phi0.amplitudes().clone();
    states.push(state.clone());
    let mut cached: Option<(f64, ComplexMatrix)> = None;
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let reuse = matches!(&cached, Some((prev, _)) if (prev - dt).abs() <= STEP_REUSE_TOL * dt);
        if !reuse {
            cached = Some((dt, matrix_exp(&generator.scaled(dt))?));
        }
        let (_, propagator) = cached.as_ref().expect("propagator cached");
        state = propagator.apply_raw(&state);
        states.push(state.clone());
    }
    Trajectory::from_states(times.to_vec(), states)
}

/// Factorized propagator `exp(-i H0 t / hbar) exp(-int H1 dt / hbar)`, valid
/// when `[H1, H0] = 0`.
pub fn evolve_commuting(h: &SplitHamiltonian, phi0: &StateVector, times: &[f64]) -> Result<Trajectory> {
    check_grid(times)?;
    check_initial(h, phi0)?;
    let norm = h.commutator_norm_over(times)?;
    if norm > COMMUTATOR_TOL {
        return Err(Error::CommutatorCheck { norm });
    }
    let t0 = times[0];
    let free_generator = h.h0.scaled_complex(C64::new(0.0, -1.0 / h.hbar));
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let elapsed = t - t0;
        // int_{t0}^{t} H1 ds
        let integral = match &h.h1 {
            H1Generator::Constant(m) => m.scaled(elapsed),
            H1Generator::Measurement(spec) => {
                let end = spec.accumulated_penalty(t);
                let start = spec.accumulated_penalty(t0);
                let scale = spec.hbar() * spec.strength();
                let values: Vec<f64> = end.iter().zip(&start).map(|(e, s)| scale * (e - s)).collect();
                spec.eigen().from_spectrum(&values)
            }
            H1Generator::Function(_) => {
                return Err(Error::TimeDependentGenerator("evolve_commuting"));
            }
        };
        let damping = matrix_exp(&integral.scaled(-1.0 / h.hbar))?;
        let free = matrix_exp(&free_generator.scaled(elapsed))?;
        states.push(free.apply_raw(&damping.apply_raw(phi0.amplitudes())));
    }
    Trajectory::from_states(times.to_vec(), states)
}

/// Largest deviation over interior samples between a centered finite
/// difference of `psi` and the normalized-state equation
/// `i hbar dPsi/dt = H0 Psi - i (H1 - <H1>) Psi`.
pub fn normalized_rhs_residual(h: &SplitHamiltonian, traj: &Trajectory) -> Result<f64> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, found: n });
    }
    let mut worst = 0.0_f64;
    for k in 1..n - 1 {
        let (tm, t0, tp) = (traj.times[k - 1], traj.times[k], traj.times[k + 1]);
        let (h1, h2) = (t0 - tm, tp - t0);
        let prev = traj.psi[k - 1].amplitudes();
        let cur = traj.psi[k].amplitudes();
        let next = traj.psi[k + 1].amplitudes();
        // Second-order three-point derivative on a possibly uneven grid.
        let derivative = prev * C64::new(-h2 / (h1 * (h1 + h2)), 0.0)
            + cur * C64::new((h2 - h1) / (h1 * h2), 0.0)
            + next * C64::new(h1 / (h2 * (h1 + h2)), 0.0);

        let psi = &traj.psi[k];
        let h1_op = h.h1_at(t0)?;
        let mean_h1 = expectation(&h1_op, psi)?;
        let centered = h1_op.apply(psi)? - cur * C64::new(mean_h1, 0.0);
        let rhs = (h.h0.apply(psi)? - centered * C64::i()) * C64::new(0.0, -1.0 / h.hbar);
        worst = worst.max((derivative - rhs).norm());
    }
    Ok(worst)
}
