//! Fubini-Study evolution speed, path length, geodesic distance and the
//! quantum speed limit time `T_qsl = S0 / V_bar`.

use nalgebra::DVector;

use crate::dynamics::{SplitHamiltonian, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{expectation, ComplexMatrix, StateVector, C64, IMAG_TOL};

/// Radicands below `-RADICAND_TOL` indicate inconsistent inputs.
pub const RADICAND_TOL: f64 = 1e-10;
/// Relative spacing deviation tolerated on a "uniform" grid.
pub const UNIFORM_GRID_TOL: f64 = 1e-8;
/// Geodesic distances at or below this count as zero.
pub const ZERO_DISTANCE_TOL: f64 = 1e-12;

/// The three terms under the square root of the operator speed formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedTerms {
    pub var_h0: f64,
    pub var_h1: f64,
    /// `i <[H1, H0]>`, real for Hermitian `H0`, `H1`.
    pub commutator: f64,
    pub hbar: f64,
}

impl SpeedTerms {
    pub fn radicand(&self) -> f64 {
        self.var_h0 + self.var_h1 + self.commutator
    }

    /// `(2/hbar) sqrt(dH0^2 + dH1^2 + i<[H1,H0]>)`.
    pub fn speed(&self) -> Result<f64> {
        let r = self.radicand();
        if r < -RADICAND_TOL {
            return Err(Error::NegativeRadicand { value: r });
        }
        Ok(2.0 / self.hbar * r.max(0.0).sqrt())
    }
}

pub fn speed_terms(h: &SplitHamiltonian, psi: &StateVector, t: f64) -> Result<SpeedTerms> {
    speed_terms_with(h, &h.h1_at(t)?, psi)
}

fn speed_terms_with(h: &SplitHamiltonian, h1: &ComplexMatrix, psi: &StateVector) -> Result<SpeedTerms> {
    let amps = psi.amplitudes();
    let mean_h0 = expectation(h.h0(), psi)?;
    let mean_h1 = expectation(h1, psi)?;
    // Centered vectors (H - <H>) psi; constants drop out of the commutator.
    let a = h.h0().apply(psi)? - amps * C64::new(mean_h0, 0.0);
    let b = h1.apply(psi)? - amps * C64::new(mean_h1, 0.0);
    let commutator = C64::i() * (b.dotc(&a) - a.dotc(&b));
    if commutator.im.abs() > IMAG_TOL * commutator.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue {
            context: "commutator expectation",
            residue: commutator.im.abs(),
        });
    }
    Ok(SpeedTerms {
        var_h0: a.norm_squared(),
        var_h1: b.norm_squared(),
        commutator: commutator.re,
        hbar: h.hbar(),
    })
}

/// Evolution speed from operator moments at a single instant.
pub fn speed_from_operators(h: &SplitHamiltonian, psi: &StateVector, t: f64) -> Result<f64> {
    speed_terms(h, psi, t)?.speed()
}

/// Operator speed at every sample of a trajectory.
pub fn operator_speeds(h: &SplitHamiltonian, traj: &Trajectory) -> Result<Vec<f64>> {
    if h.is_time_independent() {
        let h1 = h.h1_at(traj.times[0])?;
        return traj.psi.iter().map(|psi| speed_terms_with(h, &h1, psi)?.speed()).collect();
    }
    traj.times
        .iter()
        .zip(&traj.psi)
        .map(|(&t, psi)| speed_from_operators(h, psi, t))
        .collect()
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    let n = times.len();
    let step = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::InvalidGrid("zero-length grid".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - step).abs() > UNIFORM_GRID_TOL * step {
            return Err(Error::InvalidGrid("speed_from_trajectory needs a uniform grid".into()));
        }
    }
    Ok(step)
}

/// Finite-difference time derivative of the sampled states. Fourth-order
/// stencils when at least five samples exist, second-order otherwise.
fn state_derivatives(states: &[&DVector<C64>], step: f64) -> Vec<DVector<C64>> {
    let n = states.len();
    let combo = |weights: &[(usize, f64)], denom: f64| -> DVector<C64> {
        let mut acc = DVector::<C64>::zeros(states[0].len());
        for &(idx, w) in weights {
            acc += states[idx] * C64::new(w, 0.0);
        }
        acc / C64::new(denom * step, 0.0)
    };
    (0..n)
        .map(|k| {
            if n >= 5 {
                match k {
                    0 => combo(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)], 12.0),
                    1 => combo(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)], 12.0),
                    k if k == n - 2 => combo(
                        &[(n - 5, -1.0), (n - 4, 6.0), (n - 3, -18.0), (n - 2, 10.0), (n - 1, 3.0)],
                        12.0,
                    ),
                    k if k == n - 1 => combo(
                        &[(n - 5, 3.0), (n - 4, -16.0), (n - 3, 36.0), (n - 2, -48.0), (n - 1, 25.0)],
                        12.0,
                    ),
                    k => combo(&[(k - 2, 1.0), (k - 1, -8.0), (k + 1, 8.0), (k + 2, -1.0)], 12.0),
                }
            } else {
                match k {
                    0 => combo(&[(0, -3.0), (1, 4.0), (2, -1.0)], 2.0),
                    k if k == n - 1 => combo(&[(n - 3, 1.0), (n - 2, -4.0), (n - 1, 3.0)], 2.0),
                    k => combo(&[(k - 1, -1.0), (k + 1, 1.0)], 2.0),
                }
            }
        })
        .collect()
}

/// Evolution speed `2 sqrt(<dPsi|dPsi> - |<Psi|dPsi>|^2)` from finite
/// differences of the normalized states. Independent of the Hamiltonian.
pub fn speed_from_trajectory(traj: &Trajectory) -> Result<Vec<f64>> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, found: n });
    }
    let step = uniform_step(&traj.times)?;
    let states: Vec<&DVector<C64>> = traj.psi.iter().map(|p| p.amplitudes()).collect();
    let derivs = state_derivatives(&states, step);
    Ok(states
        .iter()
        .zip(&derivs)
        .map(|(psi, d)| {
            // <dPsi|dPsi> - |<Psi|dPsi>|^2 as the squared norm of the
            // component of dPsi orthogonal to Psi, avoiding cancellation.
            let perp = d - *psi * psi.dotc(d);
            2.0 * perp.norm()
        })
        .collect())
}

/// `(1/T) int_0^T V dt` by the composite trapezoid rule.
pub fn average_speed(v_samples: &[f64], times: &[f64]) -> Result<f64> {
    if v_samples.len() != times.len() {
        return Err(Error::InvalidGrid(format!(
            "{} speed samples for {} times",
            v_samples.len(),
            times.len()
        )));
    }
    if times.len() < 2 {
        return Err(Error::ZeroDuration);
    }
    let total = times[times.len() - 1] - times[0];
    if !(total > 0.0) {
        return Err(Error::ZeroDuration);
    }
    Ok(trapezoid(v_samples, times) / total)
}

fn trapezoid(values: &[f64], times: &[f64]) -> f64 {
    values
        .windows(2)
        .zip(times.windows(2))
        .map(|(v, t)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum()
}

/// Running `V_bar(T)` for every prefix `[times[0], times[k]]`; entry 0 is
/// the instantaneous speed.
pub fn running_average_speed(v_samples: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    if v_samples.len() != times.len() || times.is_empty() {
        return Err(Error::InvalidGrid("speed samples and times must align".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    out.push(v_samples[0]);
    let mut integral = 0.0;
    for k in 1..times.len() {
        integral += 0.5 * (v_samples[k - 1] + v_samples[k]) * (times[k] - times[k - 1]);
        out.push(integral / (times[k] - times[0]));
    }
    Ok(out)
}

/// `S0 = 2 arccos |<psi0|psiT>|`, in `[0, pi]`.
///
/// Evaluated as `2 atan2(|perp|, |overlap|)`, where `perp` is the part of
/// `psiT` orthogonal to `psi0`; this equals the arccos form with the overlap
/// clamped to `[0, 1]` and stays accurate for nearly parallel states.
pub fn geodesic_distance(psi0: &StateVector, psi_t: &StateVector) -> Result<f64> {
    let a = psi0.to_normalized();
    let b = psi_t.to_normalized();
    let overlap = a.inner(&b)?;
    let perp = b.amplitudes() - a.amplitudes() * overlap;
    Ok(2.0 * perp.norm().atan2(overlap.norm()))
}

/// Speed-limit summary for one completed run.
#[derive(Clone, Debug, PartialEq)]
pub struct QslReport {
    pub v_samples: Vec<f64>,
    pub v_bar: f64,
    /// `S = int V dt = V_bar T`.
    pub path_length: f64,
    pub geodesic: f64,
    pub t_qsl: f64,
    pub total_time: f64,
}

impl QslReport {
    /// `S - S0`; nonnegative up to quadrature error.
    pub fn bound_residual(&self) -> f64 {
        self.path_length - self.geodesic
    }
}

/// Assembles the report from speed samples and the end states.
pub fn qsl_time(
    times: &[f64],
    v_samples: Vec<f64>,
    psi0: &StateVector,
    psi_t: &StateVector,
) -> Result<QslReport> {
    let v_bar = average_speed(&v_samples, times)?;
    let total_time = times[times.len() - 1] - times[0];
    let geodesic = geodesic_distance(psi0, psi_t)?;
    let t_qsl = if v_bar > 0.0 {
        geodesic / v_bar
    } else if geodesic <= ZERO_DISTANCE_TOL {
        0.0
    } else {
        return Err(Error::InconsistentQsl { geodesic });
    };
    Ok(QslReport {
        v_samples,
        v_bar,
        path_length: v_bar * total_time,
        geodesic,
        t_qsl,
        total_time,
    })
}

/// Report built from operator speeds along a trajectory.
pub fn qsl_report(h: &SplitHamiltonian, traj: &Trajectory) -> Result<QslReport> {
    let speeds = operator_speeds(h, traj)?;
    qsl_time(&traj.times, speeds, traj.first_psi(), traj.last_psi())
}
