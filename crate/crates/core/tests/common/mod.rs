#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsl::linalg::{hermitian_eigh, ComplexMatrix, HermitianEigen, StateVector, C64};
use qsl::measurement::{MeasurementSpec, Penalty, Record};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complex(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_matrix(rng: &mut impl Rng, d: usize, scale: f64) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |_, _| complex(rng) * scale)
}

pub fn random_hermitian(rng: &mut impl Rng, d: usize, scale: f64) -> ComplexMatrix {
    let m = random_matrix(rng, d, scale);
    ComplexMatrix::hermitian((&m + m.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

pub fn random_state(rng: &mut impl Rng, d: usize) -> StateVector {
    StateVector::normalize(DVector::from_fn(d, |_, _| complex(rng))).unwrap()
}

pub fn random_basis(rng: &mut impl Rng, d: usize) -> HermitianEigen {
    hermitian_eigh(&random_hermitian(rng, d, 1.0)).unwrap()
}

pub fn random_spectrum(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

/// `H0` and `A` diagonal in a shared random eigenbasis.
pub fn commuting_pair(rng: &mut impl Rng, d: usize) -> (ComplexMatrix, ComplexMatrix) {
    let basis = random_basis(rng, d);
    let energies = random_spectrum(rng, d, -2.0, 2.0);
    let observable = random_spectrum(rng, d, 0.0, 0.1);
    (basis.from_spectrum(&energies), basis.from_spectrum(&observable))
}

/// Measurement with the accuracy comparable to the observable's spread so
/// penalties stay of order one.
pub fn random_spec(rng: &mut impl Rng, observable: ComplexMatrix, strength: f64) -> MeasurementSpec {
    let eig = hermitian_eigh(&observable).unwrap();
    let (lo, hi) = (eig.values[0], eig.values[eig.values.len() - 1]);
    let spread = (hi - lo).max(1e-3);
    let accuracy = spread * rng.random_range(0.5..2.0);
    let record = rng.random_range(lo..=hi);
    MeasurementSpec::new(observable, Record::Constant(record), accuracy, strength, Penalty::QuarterSquare).unwrap()
}

pub fn uniform_grid(t_final: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|k| t_final * k as f64 / (samples - 1) as f64)
        .collect()
}

pub fn fidelity_deficit(a: &StateVector, b: &StateVector) -> f64 {
    1.0 - a.fidelity(b).unwrap()
}
