//! Continuous measurement of an observable `A` modeled by the anti-Hermitian
//! generator `H1 = hbar f g((A - a~(t)) / da)`.
//!
//! The penalty `g` is applied to `A` by spectral calculus, so every `H1`
//! produced here shares `A`'s eigenbasis. Amplitudes in that basis decay
//! independently, `Phi_i(t) = exp(-f x_i(t)) Phi_i(0)` with
//! `x_i(t) = int_0^t g((a_i - a~(s)) / da) ds`, which is what the Zeno and
//! small-time predictions below are built on.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    commutator_norm, covariance, expectation, hermitian_eigh, variance, ComplexMatrix,
    HermitianEigen, StateVector, C64,
};

/// `g(0)` must vanish to this tolerance.
pub const PENALTY_ZERO_TOL: f64 = 1e-15;
/// Validity window `2 f max(g) t` of the linearized small-time law.
pub const LINEARIZATION_LIMIT: f64 = 0.1;
/// Commutator tolerance for the commuting-case formulas.
pub const COMMUTATOR_TOL: f64 = 1e-10;
/// Relative tolerance under which two accumulated penalties count as tied.
pub const TIE_REL_TOL: f64 = 1e-12;
/// Eigen-components whose weight falls below this fraction of the total are
/// treated as absent from the initial state.
pub const ZERO_OVERLAP_REL: f64 = 1e-24;
/// Target suppression `exp(-2 f dx t)` that stands in for `f -> infinity`.
pub const LARGE_STRENGTH_SUPPRESSION: f64 = 1e-12;

/// Nonnegative penalty function with `g(0) = 0`.
#[derive(Clone)]
pub enum Penalty {
    /// `g(x) = x^2 / 4`.
    QuarterSquare,
    /// `g(x) = coefficient * |x|^exponent`.
    Power { coefficient: f64, exponent: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::QuarterSquare => write!(f, "QuarterSquare"),
            Penalty::Power {
                coefficient,
                exponent,
            } => write!(f, "Power({coefficient} * |x|^{exponent})"),
            Penalty::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::QuarterSquare
    }
}

impl Penalty {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Penalty::QuarterSquare => 0.25 * x * x,
            Penalty::Power {
                coefficient,
                exponent,
            } => coefficient * x.abs().powf(*exponent),
            Penalty::Custom(g) => g(x),
        }
    }

    /// Checks `g >= 0` on a sample grid over [-10, 10] and `g(0) = 0`.
    pub fn validate(&self) -> Result<()> {
        if let Penalty::Power {
            coefficient,
            exponent,
        } = self
        {
            if !(coefficient.is_finite() && *coefficient >= 0.0) {
                return Err(Error::InvalidPenalty(format!(
                    "coefficient {coefficient} must be finite and nonnegative"
                )));
            }
            if !(exponent.is_finite() && *exponent > 0.0) {
                return Err(Error::InvalidPenalty(format!(
                    "exponent {exponent} must be finite and positive"
                )));
            }
        }
        let at_zero = self.eval(0.0);
        if !(at_zero.abs() <= PENALTY_ZERO_TOL) {
            return Err(Error::InvalidPenalty(format!("g(0) = {at_zero:e}")));
        }
        for k in -1000..=1000 {
            let x = k as f64 * 0.01;
            let g = self.eval(x);
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidPenalty(format!("g({x}) = {g}")));
            }
        }
        Ok(())
    }
}

/// Measurement record `a~(t)` reported by the apparatus.
#[derive(Clone)]
pub enum Record {
    Constant(f64),
    Varying(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Record::Constant(a) => write!(f, "Constant({a})"),
            Record::Varying(_) => write!(f, "Varying"),
        }
    }
}

impl Record {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Record::Constant(a) => *a,
            Record::Varying(a) => a(t),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Record::Constant(a) => Some(*a),
            Record::Varying(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Record::Constant(_))
    }
}

/// Parameters of a continuous measurement of one observable.
#[derive(Clone, Debug)]
pub struct MeasurementSpec {
    observable: ComplexMatrix,
    eigen: HermitianEigen,
    record: Record,
    accuracy: f64,
    strength: f64,
    penalty: Penalty,
    hbar: f64,
}

impl MeasurementSpec {
    pub fn new(
        observable: ComplexMatrix,
        record: Record,
        accuracy: f64,
        strength: f64,
        penalty: Penalty,
    ) -> Result<Self> {
        if !(accuracy.is_finite() && accuracy > 0.0) {
            return Err(Error::InvalidSpec(format!("accuracy {accuracy} must be positive")));
        }
        if !(strength.is_finite() && strength >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "strength {strength} must be finite and nonnegative"
            )));
        }
        if let Record::Constant(a) = record {
            if !a.is_finite() {
                return Err(Error::InvalidSpec(format!("record {a} is not finite")));
            }
        }
        penalty.validate()?;
        let eigen = hermitian_eigh(&observable)?;
        Ok(Self {
            observable,
            eigen,
            record,
            accuracy,
            strength,
            penalty,
            hbar: 1.0,
        })
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidSpec(format!("hbar {hbar} must be positive")));
        }
        self.hbar = hbar;
        Ok(self)
    }

    /// Same measurement at a different strength `f`.
    pub fn with_strength(&self, strength: f64) -> Result<Self> {
        if !(strength.is_finite() && strength >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "strength {strength} must be finite and nonnegative"
            )));
        }
        let mut spec = self.clone();
        spec.strength = strength;
        Ok(spec)
    }

    pub fn observable(&self) -> &ComplexMatrix {
        &self.observable
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    pub fn record(&self) -> &Record {
        &self.record
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn dim(&self) -> usize {
        self.observable.dim()
    }

    /// `g((a_i - a~(t)) / da)` for every eigenvalue `a_i` of `A`.
    pub fn penalty_values(&self, t: f64) -> Vec<f64> {
        let record = self.record.value_at(t);
        self.eigen
            .values
            .iter()
            .map(|&a| self.penalty.eval((a - record) / self.accuracy))
            .collect()
    }

    /// Dimensionless operator `g((A - a~(t)) / da)`.
    pub fn penalty_operator(&self, t: f64) -> ComplexMatrix {
        self.eigen.from_spectrum(&self.penalty_values(t))
    }

    /// `x_i(t) = int_0^t g((a_i - a~(s)) / da) ds`; composite Simpson for a
    /// varying record.
    pub fn accumulated_penalty(&self, t: f64) -> Vec<f64> {
        match self.record {
            Record::Constant(_) => self.penalty_values(0.0).into_iter().map(|g| g * t).collect(),
            Record::Varying(_) => {
                let intervals = (((t.abs() / 1e-3).ceil() as usize).max(64) + 1) & !1;
                let h = t / intervals as f64;
                let mut acc = vec![0.0; self.dim()];
                for k in 0..=intervals {
                    let weight = if k == 0 || k == intervals {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    for (x, g) in acc.iter_mut().zip(self.penalty_values(k as f64 * h)) {
                        *x += weight * g;
                    }
                }
                acc.into_iter().map(|x| x * h / 3.0).collect()
            }
        }
    }
}

/// `H1(t) = hbar f g((A - a~(t)) / da)` by spectral calculus.
pub fn build_h1(spec: &MeasurementSpec, t: f64) -> ComplexMatrix {
    let scale = spec.hbar * spec.strength;
    let values: Vec<f64> = spec.penalty_values(t).into_iter().map(|g| scale * g).collect();
    spec.eigen.from_spectrum(&values)
}

/// Pure-measurement decay of `A`-basis coefficients over `[0, t]`, free
/// evolution neglected.
pub fn amplitude_decay(spec: &MeasurementSpec, coefficients: &DVector<C64>, t: f64) -> Result<DVector<C64>> {
    if coefficients.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: coefficients.len(),
        });
    }
    let x = spec.accumulated_penalty(t);
    Ok(DVector::from_iterator(
        coefficients.len(),
        coefficients
            .iter()
            .zip(x)
            .map(|(c, xi)| c * (-spec.strength * xi).exp()),
    ))
}

/// Eigen-weights `|<a_i|phi0>|^2` and the indices that count as present.
fn initial_weights(spec: &MeasurementSpec, phi0: &StateVector) -> Result<(Vec<f64>, Vec<bool>)> {
    if phi0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: phi0.dim(),
        });
    }
    let coeffs = spec.eigen.coefficients(phi0.amplitudes());
    let weights: Vec<f64> = coeffs.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    let present = weights.iter().map(|&w| w > ZERO_OVERLAP_REL * total).collect();
    Ok((weights, present))
}

/// `<Psi(t)|H1|Psi(t)>` from the ratio of exponentially weighted sums over
/// the eigen-components of the initial state.
pub fn h1_expectation_ratio(spec: &MeasurementSpec, phi0: &StateVector, t: f64) -> Result<f64> {
    if !spec.record.is_constant() {
        return Err(Error::NonConstantRecord("h1_expectation_ratio"));
    }
    let (weights, present) = initial_weights(spec, phi0)?;
    let x = spec.accumulated_penalty(t);
    let g = spec.penalty_values(t);
    // Shift exponents by the smallest present x to keep the sums finite.
    let x_min = x
        .iter()
        .zip(&present)
        .filter(|(_, &p)| p)
        .map(|(&xi, _)| xi)
        .fold(f64::INFINITY, f64::min);
    let mut numer = 0.0;
    let mut denom = 0.0;
    for i in 0..spec.dim() {
        if !present[i] {
            continue;
        }
        let w = (-2.0 * spec.strength * (x[i] - x_min)).exp() * weights[i];
        numer += w * spec.hbar * spec.strength * g[i];
        denom += w;
    }
    Ok(numer / denom)
}

/// Limit `f -> infinity` of the measured dynamics.
#[derive(Clone, Debug)]
pub struct ZenoPrediction {
    /// Minimizing eigen-indices of `A` (ascending eigenvalue order). More
    /// than one entry means the minimum is tied.
    pub attractor_indices: Vec<usize>,
    /// Normalized projection of the initial state onto the minimizing
    /// eigenspace.
    pub attractor_state: StateVector,
    /// `hbar f g((a_r - a~) / da)`.
    pub limit_h1_expectation: f64,
    /// Accumulated penalty per unit time, `g((a_i - a~) / da)`.
    pub x_values: Vec<f64>,
    /// Indices skipped because the initial state has no weight there.
    pub excluded: Vec<usize>,
}

impl ZenoPrediction {
    pub fn is_tie(&self) -> bool {
        self.attractor_indices.len() > 1
    }

    /// Primary attractor index (the lowest among ties).
    pub fn index(&self) -> usize {
        self.attractor_indices[0]
    }
}

pub fn zeno_prediction(spec: &MeasurementSpec, phi0: &StateVector) -> Result<ZenoPrediction> {
    if !spec.record.is_constant() {
        return Err(Error::NonConstantRecord("zeno_prediction"));
    }
    let (_, present) = initial_weights(spec, phi0)?;
    let x_values = spec.penalty_values(0.0);
    let excluded: Vec<usize> = (0..spec.dim()).filter(|&i| !present[i]).collect();
    let x_min = (0..spec.dim())
        .filter(|&i| present[i])
        .map(|i| x_values[i])
        .fold(f64::INFINITY, f64::min);
    let tol = TIE_REL_TOL * x_min.abs().max(1.0);
    let attractor_indices: Vec<usize> = (0..spec.dim())
        .filter(|&i| present[i] && x_values[i] - x_min <= tol)
        .collect();

    let coeffs = spec.eigen.coefficients(phi0.amplitudes());
    let mut projected = DVector::<C64>::zeros(spec.dim());
    for &r in &attractor_indices {
        projected[r] = coeffs[r];
    }
    let attractor_state = StateVector::normalize(spec.eigen.synthesize(&projected))?;
    let limit_h1_expectation = spec.hbar * spec.strength * x_values[attractor_indices[0]];
    Ok(ZenoPrediction {
        attractor_indices,
        attractor_state,
        limit_h1_expectation,
        x_values,
        excluded,
    })
}

/// Strength at which `exp(-2 f dx t)` drops to `LARGE_STRENGTH_SUPPRESSION`,
/// with `dx` the gap between the two smallest present penalties. Returns
/// `None` when there is no gap (single component or tie).
pub fn large_strength_surrogate(spec: &MeasurementSpec, phi0: &StateVector, t: f64) -> Result<Option<f64>> {
    let (_, present) = initial_weights(spec, phi0)?;
    let mut x: Vec<f64> = spec
        .penalty_values(0.0)
        .into_iter()
        .zip(present)
        .filter(|(_, p)| *p)
        .map(|(g, _)| g)
        .collect();
    x.sort_by(f64::total_cmp);
    if x.len() < 2 || t <= 0.0 {
        return Ok(None);
    }
    let gap = x[1] - x[0];
    if gap <= TIE_REL_TOL * x[0].abs().max(1.0) {
        return Ok(None);
    }
    Ok(Some(-LARGE_STRENGTH_SUPPRESSION.ln() / (2.0 * gap * t)))
}

/// First-order small-time evolution speed in the commuting case.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallTimeSpeed {
    pub speed: f64,
    /// `X = 2<H0> Cov(g, H0) - Cov(g, H0^2)` in the initial state.
    pub x_coefficient: f64,
    pub initial_variance: f64,
    pub radicand: f64,
    /// `X > 0`: measurement speeds the evolution up at first order.
    pub speedup_predicted: bool,
    /// `2 f max(g) t`.
    pub linearization: f64,
    pub within_validity: bool,
}

/// `V = (2/hbar) sqrt(dH0^2(0) + 2 t f X)`.
///
/// Exceeding the linearization window is reported through
/// `within_validity` and does not fail.
pub fn small_time_speed(
    spec: &MeasurementSpec,
    h0: &ComplexMatrix,
    psi0: &StateVector,
    t: f64,
) -> Result<SmallTimeSpeed> {
    if !spec.record.is_constant() {
        return Err(Error::NonConstantRecord("small_time_speed"));
    }
    let g_op = spec.penalty_operator(0.0);
    let norm = commutator_norm(&g_op, h0)? * (spec.hbar * spec.strength).max(1.0);
    if norm > COMMUTATOR_TOL {
        return Err(Error::CommutatorCheck { norm });
    }
    let mean_h0 = expectation(h0, psi0)?;
    let h0_sq = h0.square();
    let x_coefficient =
        2.0 * mean_h0 * covariance(&g_op, h0, psi0)? - covariance(&g_op, &h0_sq, psi0)?;
    let initial_variance = variance(h0, psi0)?;
    let radicand = initial_variance + 2.0 * t * spec.strength * x_coefficient;
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand { value: radicand });
    }
    let max_g = spec.penalty_values(0.0).into_iter().fold(0.0, f64::max);
    let linearization = 2.0 * spec.strength * max_g * t;
    Ok(SmallTimeSpeed {
        speed: 2.0 / spec.hbar * radicand.sqrt(),
        x_coefficient,
        initial_variance,
        radicand,
        speedup_predicted: x_coefficient > 0.0,
        linearization,
        within_validity: linearization <= LINEARIZATION_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::variance;
    use std::f64::consts::SQRT_2;

    fn fig1_observable() -> ComplexMatrix {
        ComplexMatrix::diagonal(&[0.03, 0.05]).unwrap()
    }

    fn spec(record: f64, strength: f64) -> MeasurementSpec {
        MeasurementSpec::new(
            fig1_observable(),
            Record::Constant(record),
            0.01,
            strength,
            Penalty::QuarterSquare,
        )
        .unwrap()
    }

    fn max_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn h1_has_zero_eigenvalue_at_the_record() {
        let h1 = build_h1(&spec(0.05, 3.0), 0.0);
        let e = hermitian_eigh(&h1).unwrap();
        assert!(e.values[0].abs() < 1e-15);
        let v = e.vector(0);
        assert!((v[1].norm() - 1.0).abs() < 1e-12, "zero mode is |a2>");
    }

    #[test]
    fn h1_eigenvalues_for_figure_parameters() {
        // g(1) = 1/4, g(3) = 9/4
        let h1 = build_h1(&spec(0.02, 1.0), 0.0);
        let e = hermitian_eigh(&h1).unwrap();
        assert!((e.values[0] - 0.25).abs() < 1e-13);
        assert!((e.values[1] - 2.25).abs() < 1e-13);
    }

    #[test]
    fn spectral_route_matches_polynomial_route() {
        // Non-diagonal A, so the spectral route really goes through eigh.
        let h0 = ComplexMatrix::pauli_z().add(&ComplexMatrix::pauli_x()).unwrap();
        let (a1, a2) = (0.03, 0.05);
        let a = ComplexMatrix::identity(2)
            .unwrap()
            .scaled((a1 + a2) / 2.0)
            .add(&h0.scaled((a2 - a1) / (2.0 * SQRT_2)))
            .unwrap();
        for (record, f, da, hbar) in [(0.02, 1.0, 0.01, 1.0), (0.041, 7.5, 0.02, 0.5)] {
            let s = MeasurementSpec::new(a.clone(), Record::Constant(record), da, f, Penalty::QuarterSquare)
                .unwrap()
                .with_hbar(hbar)
                .unwrap();
            // (hbar f / 4 da^2)(A^2 + a~^2 I - 2 a~ A)
            let poly = a
                .square()
                .add(&ComplexMatrix::identity(2).unwrap().scaled(record * record))
                .unwrap()
                .sub(&a.scaled(2.0 * record))
                .unwrap()
                .scaled(hbar * f / (4.0 * da * da));
            assert!(max_diff(&build_h1(&s, 0.0), &poly) < 1e-12);
        }
    }

    #[test]
    fn decay_without_strength_is_identity() {
        let c = DVector::from_vec(vec![C64::new(0.6, 0.1), C64::new(-0.2, 0.7)]);
        let out = amplitude_decay(&spec(0.02, 0.0), &c, 3.0).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn decay_ratio_matches_exponent_difference() {
        let f = 1.7;
        let c = DVector::from_element(2, C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let out = amplitude_decay(&spec(0.02, f), &c, 1.0).unwrap();
        let ratio = out[1].norm() / out[0].norm();
        // exp(-(g(3) - g(1)) f t) = exp(-2 f)
        assert!((ratio - (-2.0 * f).exp()).abs() < 1e-15);
    }

    #[test]
    fn decay_drives_state_to_the_attractor() {
        let c = DVector::from_element(2, C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        let out = amplitude_decay(&spec(0.02, 10.0), &c, 1.0).unwrap();
        let psi = StateVector::normalize(out).unwrap();
        let a1 = StateVector::basis(2, 0).unwrap();
        assert!(psi.fidelity(&a1).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn ratio_single_component() {
        let s = spec(0.02, 4.0);
        let phi0 = StateVector::basis(2, 1).unwrap();
        for t in [0.0, 0.3, 5.0] {
            let v = h1_expectation_ratio(&s, &phi0, t).unwrap();
            assert!((v - 4.0 * 2.25).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_matches_operator_expectation() {
        let s = spec(0.02, 3.0);
        let phi0 = StateVector::from_slice(&[C64::new(0.4, 0.3), C64::new(-0.5, 0.2)]).unwrap();
        for t in [0.0, 0.05, 0.4, 2.0] {
            let c = s.eigen().coefficients(phi0.amplitudes());
            let decayed = amplitude_decay(&s, &c, t).unwrap();
            let psi = StateVector::normalize(s.eigen().synthesize(&decayed)).unwrap();
            let op = expectation(&build_h1(&s, t), &psi).unwrap();
            assert!((h1_expectation_ratio(&s, &phi0, t).unwrap() - op).abs() < 1e-10);
        }
    }

    #[test]
    fn large_strength_limit() {
        let f = 200.0;
        let s = spec(0.02, f);
        let phi0 = StateVector::plus();
        let limit = f * 0.25;
        let v = h1_expectation_ratio(&s, &phi0, 1.0).unwrap();
        assert!(((v - limit) / limit).abs() < 1e-6);

        let c = s.eigen().coefficients(phi0.amplitudes());
        let psi = StateVector::normalize(amplitude_decay(&s, &c, 1.0).unwrap()).unwrap();
        let var = variance(&build_h1(&s, 1.0), &psi).unwrap();
        assert!(var / (f * f) <= 1e-6);
    }

    #[test]
    fn zeno_attractor_for_figure_parameters() {
        let z = zeno_prediction(&spec(0.02, 5.0), &StateVector::plus()).unwrap();
        assert_eq!(z.attractor_indices, vec![0]);
        assert!(!z.is_tie());
        assert!((z.limit_h1_expectation - 5.0 * 0.25).abs() < 1e-14);
        let a1 = StateVector::basis(2, 0).unwrap();
        assert!((z.attractor_state.fidelity(&a1).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zeno_record_on_upper_eigenvalue() {
        let z = zeno_prediction(&spec(0.05, 5.0), &StateVector::plus()).unwrap();
        assert_eq!(z.attractor_indices, vec![1]);
        assert_eq!(z.limit_h1_expectation, 0.0);
    }

    #[test]
    fn zeno_tie_at_midpoint() {
        let z = zeno_prediction(&spec(0.04, 5.0), &StateVector::plus()).unwrap();
        assert_eq!(z.attractor_indices, vec![0, 1]);
        assert!(z.is_tie());
        assert!((z.attractor_state.fidelity(&StateVector::plus()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zeno_skips_absent_components() {
        let z = zeno_prediction(&spec(0.02, 5.0), &StateVector::basis(2, 1).unwrap()).unwrap();
        assert_eq!(z.attractor_indices, vec![1]);
        assert_eq!(z.excluded, vec![0]);
    }

    #[test]
    fn surrogate_strength_suppresses_the_gap() {
        let s = spec(0.02, 1.0);
        let f = large_strength_surrogate(&s, &StateVector::plus(), 1.0).unwrap().unwrap();
        assert!(((-2.0 * f * 2.0).exp() - 1e-12).abs() < 1e-20);
        assert!(large_strength_surrogate(&spec(0.04, 1.0), &StateVector::plus(), 1.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn small_time_speed_limits() {
        let h0 = ComplexMatrix::diagonal(&[-SQRT_2, SQRT_2]).unwrap();
        let psi = StateVector::from_slice(&[C64::new(0.38, 0.0), C64::new(0.92, 0.1)]).unwrap();
        let free = 2.0 * variance(&h0, &psi).unwrap().sqrt();

        let at_zero_strength = small_time_speed(&spec(0.02, 0.0), &h0, &psi, 0.05).unwrap();
        assert_eq!(at_zero_strength.speed, free);

        for f in [0.5, 5.0, 50.0] {
            let at_zero_time = small_time_speed(&spec(0.02, f), &h0, &psi, 0.0).unwrap();
            assert_eq!(at_zero_time.speed, free);
        }
    }

    #[test]
    fn small_time_validity_flag_and_commutator_gate() {
        let h0 = ComplexMatrix::diagonal(&[-SQRT_2, SQRT_2]).unwrap();
        let psi = StateVector::plus();
        let s = spec(0.02, 5.0);
        assert!(small_time_speed(&s, &h0, &psi, 0.001).unwrap().within_validity);
        assert!(!small_time_speed(&s, &h0, &psi, 0.01).unwrap().within_validity);
        assert!(matches!(
            small_time_speed(&s, &ComplexMatrix::pauli_x(), &psi, 0.001),
            Err(Error::CommutatorCheck { .. })
        ));
    }

    #[test]
    fn penalty_validation() {
        assert!(Penalty::QuarterSquare.validate().is_ok());
        assert!(Penalty::Power { coefficient: 1.0, exponent: 1.0 }.validate().is_ok());
        assert!(Penalty::Custom(Arc::new(|x| x * x + 1.0)).validate().is_err());
        assert!(Penalty::Custom(Arc::new(|x| x)).validate().is_err());
        assert!(Penalty::Power { coefficient: -1.0, exponent: 2.0 }.validate().is_err());
        assert!(matches!(
            MeasurementSpec::new(fig1_observable(), Record::Constant(0.0), 0.0, 1.0, Penalty::QuarterSquare),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn varying_record_integrates_penalty() {
        // a~(s) = 0.03 + 0.01 s: (a_1 - a~)/da = -s, so x_1(t) = t^3 / 12.
        let s = MeasurementSpec::new(
            fig1_observable(),
            Record::Varying(Arc::new(|s| 0.03 + 0.01 * s)),
            0.01,
            1.0,
            Penalty::QuarterSquare,
        )
        .unwrap();
        let x = s.accumulated_penalty(2.0);
        assert!((x[0] - 8.0 / 12.0).abs() < 1e-12);
        assert!(h1_expectation_ratio(&s, &StateVector::plus(), 1.0).is_err());
    }
}
