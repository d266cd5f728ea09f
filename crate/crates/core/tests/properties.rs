mod common;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use common::*;
use qsl::dynamics::{evolve_commuting, evolve_exp, evolve_rk4, SplitHamiltonian, Trajectory};
use qsl::geometry::{geodesic_distance, operator_speeds, qsl_report, speed_from_trajectory, speed_terms};
use qsl::linalg::{
    commutator_norm, covariance, expectation, hermitian_eigh, matrix_exp, variance, ComplexMatrix, StateVector, C64,
};
use qsl::measurement::{build_h1, h1_expectation_ratio};
use qsl::spin::{build_example, figure1_sweep, figure2_sweep, figure3_sweep, SpinExampleConfig};

fn identity_gap(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    (m - DMatrix::<C64>::identity(d, d)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Random time-independent measured system of dimension `d`.
fn measured_system(seed: u64, d: usize, strength: f64) -> (SplitHamiltonian, StateVector) {
    let mut rng = rng(seed);
    let h0 = random_hermitian(&mut rng, d, 1.0);
    let observable = random_hermitian(&mut rng, d, 0.05);
    let spec = random_spec(&mut rng, observable, strength);
    let psi0 = random_state(&mut rng, d);
    (SplitHamiltonian::with_measurement(h0, spec).unwrap(), psi0)
}

fn commuting_system(seed: u64, d: usize, strength: f64) -> (SplitHamiltonian, StateVector) {
    let mut rng = rng(seed);
    let (h0, observable) = commuting_pair(&mut rng, d);
    let spec = random_spec(&mut rng, observable, strength);
    let psi0 = random_state(&mut rng, d);
    (SplitHamiltonian::with_measurement(h0, spec).unwrap(), psi0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // linear algebra

    #[test]
    fn variance_is_nonnegative(seed in any::<u64>(), d in 1usize..=8) {
        let mut rng = rng(seed);
        let op = random_hermitian(&mut rng, d, 3.0);
        let psi = random_state(&mut rng, d);
        prop_assert!(variance(&op, &psi).unwrap() >= 0.0);
    }

    #[test]
    fn self_covariance_is_variance(seed in any::<u64>(), d in 1usize..=8) {
        let mut rng = rng(seed);
        let op = random_hermitian(&mut rng, d, 1.0);
        let psi = random_state(&mut rng, d);
        let gap = (covariance(&op, &op, &psi).unwrap() - variance(&op, &psi).unwrap()).abs();
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn exponential_inverts(seed in any::<u64>(), d in 1usize..=8, norm in 0.0f64..5.0) {
        let mut rng = rng(seed);
        let m = random_matrix(&mut rng, d, 1.0);
        let m = ComplexMatrix::general(m).unwrap();
        let m = m.scaled(norm / m.one_norm().max(1e-300));
        let product = matrix_exp(&m).unwrap().matmul(&matrix_exp(&m.scaled(-1.0)).unwrap()).unwrap();
        prop_assert!(identity_gap(product.as_matrix()) <= 1e-9);
    }

    #[test]
    fn hermitian_exponential_is_unitary(seed in any::<u64>(), d in 1usize..=8, t in 0.0f64..10.0) {
        let mut rng = rng(seed);
        let h = random_hermitian(&mut rng, d, 1.0);
        let u = matrix_exp(&h.scaled_complex(C64::new(0.0, -t))).unwrap();
        let gram = u.as_matrix().adjoint() * u.as_matrix();
        prop_assert!(identity_gap(&gram) <= 1e-9);
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), d in 1usize..=8) {
        let mut rng = rng(seed);
        let op = random_hermitian(&mut rng, d, 2.0);
        let eig = hermitian_eigh(&op).unwrap();
        let rebuilt = eig.from_spectrum(&eig.values);
        prop_assert!(rebuilt.sub(&op).unwrap().max_abs() <= 1e-9);
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    // dynamics

    #[test]
    fn trajectory_views_are_consistent(seed in any::<u64>(), d in 1usize..=6, f in 0.0f64..5.0) {
        let (h, psi0) = measured_system(seed, d, f);
        let traj = evolve_exp(&h, &psi0, &uniform_grid(1.0, 21)).unwrap();
        prop_assert!((traj.survival[0] - 1.0).abs() <= 1e-12);
        for k in 0..traj.len() {
            let view = traj.phi[k].amplitudes() / C64::new(traj.phi[k].norm(), 0.0);
            prop_assert!((view - traj.psi[k].amplitudes()).norm() <= 1e-10);
            prop_assert!(traj.survival[k] > 0.0 && traj.survival[k] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn survival_never_increases(seed in any::<u64>(), d in 1usize..=6, f in 0.0f64..10.0) {
        let (h, psi0) = measured_system(seed, d, f);
        let traj = evolve_exp(&h, &psi0, &uniform_grid(2.0, 81)).unwrap();
        prop_assert!(traj.survival.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn unitary_flow_conserves_norm_and_energy(seed in any::<u64>(), d in 1usize..=6) {
        let mut rng = rng(seed);
        let h0 = random_hermitian(&mut rng, d, 1.0);
        let psi0 = random_state(&mut rng, d);
        let h = SplitHamiltonian::unitary(h0.clone(), 1.0).unwrap();
        let traj = evolve_exp(&h, &psi0, &uniform_grid(5.0, 51)).unwrap();
        let e0 = expectation(&h0, &psi0).unwrap();
        for (k, psi) in traj.psi.iter().enumerate() {
            prop_assert!((traj.survival[k] - 1.0).abs() <= 1e-10);
            prop_assert!((expectation(&h0, psi).unwrap() - e0).abs() <= 1e-8);
        }
    }

    #[test]
    fn scaling_the_initial_state_is_a_gauge(
        seed in any::<u64>(),
        d in 1usize..=6,
        re in -3.0f64..3.0,
        im in -3.0f64..3.0,
    ) {
        prop_assume!(re.hypot(im) > 1e-3);
        let (h, psi0) = measured_system(seed, d, 2.0);
        let scaled = psi0.scaled(C64::new(re, im)).unwrap();
        let times = uniform_grid(1.0, 11);
        let a = evolve_exp(&h, &psi0, &times).unwrap();
        let b = evolve_exp(&h, &scaled, &times).unwrap();
        for k in 0..times.len() {
            prop_assert!((a.psi[k].inner(&b.psi[k]).unwrap().norm() - 1.0).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn integrators_agree(seed in any::<u64>(), d in 1usize..=4, f in 0.0f64..5.0) {
        let (h, psi0) = measured_system(seed, d, f);
        let times = uniform_grid(1.0, 11);
        let exp = evolve_exp(&h, &psi0, &times).unwrap();
        let rk4 = evolve_rk4(&h, &psi0, &times).unwrap();
        for k in 0..times.len() {
            prop_assert!(fidelity_deficit(&exp.psi[k], &rk4.psi[k]) <= 1e-8);
        }
    }

    #[test]
    fn commuting_routes_agree(seed in any::<u64>(), d in 1usize..=4, f in 0.0f64..5.0) {
        let (h, psi0) = commuting_system(seed, d, f);
        let times = uniform_grid(1.0, 11);
        let exp = evolve_exp(&h, &psi0, &times).unwrap();
        let rk4 = evolve_rk4(&h, &psi0, &times).unwrap();
        let comm = evolve_commuting(&h, &psi0, &times).unwrap();
        for k in 0..times.len() {
            prop_assert!(fidelity_deficit(&exp.psi[k], &comm.psi[k]) <= 1e-10);
            prop_assert!(fidelity_deficit(&rk4.psi[k], &comm.psi[k]) <= 1e-8);
        }
    }
}

fn phase_shifted(traj: &Trajectory, amplitude: f64, rate: f64) -> Trajectory {
    let states = traj
        .times
        .iter()
        .zip(&traj.psi)
        .map(|(&t, psi)| psi.amplitudes() * C64::from_polar(1.0, amplitude * (rate * t).sin()))
        .collect();
    Trajectory::from_states(traj.times.clone(), states).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // geometry

    #[test]
    fn qsl_bound_and_report_invariants(seed in any::<u64>(), d in 2usize..=6, f in 0.0f64..5.0, t in 0.05f64..3.0) {
        let (h, psi0) = measured_system(seed, d, f);
        let traj = evolve_exp(&h, &psi0, &uniform_grid(t, 301)).unwrap();
        let report = qsl_report(&h, &traj).unwrap();
        prop_assert!(report.v_bar * report.total_time >= report.geodesic - 1e-6);
        prop_assert!(report.path_length >= report.geodesic - 1e-6);
        prop_assert!((0.0..=PI).contains(&report.geodesic));
        if report.v_bar > 0.0 {
            prop_assert!(report.t_qsl <= report.total_time + 1e-8);
        }
    }

    #[test]
    fn speed_formulas_agree(seed in any::<u64>(), d in 2usize..=4, f in 0.0f64..3.0) {
        let (h, psi0) = measured_system(seed, d, f);
        let traj = evolve_exp(&h, &psi0, &uniform_grid(0.5, 501)).unwrap();
        let ops = operator_speeds(&h, &traj).unwrap();
        let fd = speed_from_trajectory(&traj).unwrap();
        for k in 1..ops.len() - 1 {
            prop_assert!((ops[k] - fd[k]).abs() <= 1e-5, "k = {}: {} vs {}", k, ops[k], fd[k]);
        }
    }

    #[test]
    fn finite_difference_speed_ignores_smooth_phases(
        seed in any::<u64>(),
        d in 2usize..=4,
        amplitude in -2.0f64..2.0,
        rate in 0.0f64..4.0,
    ) {
        let (h, psi0) = measured_system(seed, d, 1.0);
        let traj = evolve_exp(&h, &psi0, &uniform_grid(1.0, 1001)).unwrap();
        let plain = speed_from_trajectory(&traj).unwrap();
        let shifted = speed_from_trajectory(&phase_shifted(&traj, amplitude, rate)).unwrap();
        for (a, b) in plain.iter().zip(&shifted) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn unitary_speed_is_constant(seed in any::<u64>(), d in 1usize..=6) {
        let mut rng = rng(seed);
        let h0 = random_hermitian(&mut rng, d, 1.0);
        let psi0 = random_state(&mut rng, d);
        let hbar = rng.random_range(0.5..2.0);
        let h = SplitHamiltonian::unitary(h0.clone(), hbar).unwrap();
        let traj = evolve_exp(&h, &psi0, &uniform_grid(3.0, 31)).unwrap();
        let expected = 2.0 * variance(&h0, &psi0).unwrap().sqrt() / hbar;
        for v in operator_speeds(&h, &traj).unwrap() {
            prop_assert!((v - expected).abs() <= 1e-6);
        }
    }

    // measurement

    #[test]
    fn measurement_generator_commutes(seed in any::<u64>(), d in 1usize..=6, f in 0.0f64..10.0) {
        let mut rng = rng(seed);
        let (h0, observable) = commuting_pair(&mut rng, d);
        let spec = random_spec(&mut rng, observable.clone(), f);
        let h1 = build_h1(&spec, 0.0);
        prop_assert!(commutator_norm(&h1, &observable).unwrap() <= 1e-12);
        prop_assert!(commutator_norm(&h1, &h0).unwrap() <= 1e-12 * f.max(1.0));
    }

    #[test]
    fn measurement_variance_is_nonnegative(seed in any::<u64>(), f in 0.0f64..200.0) {
        let (h, spec, _) = build_example(&SpinExampleConfig::default().with_strength(f)).unwrap();
        let psi0 = random_state(&mut rng(seed), 2);
        let traj = evolve_exp(&h, &psi0, &uniform_grid(1.0, 21)).unwrap();
        for (k, psi) in traj.psi.iter().enumerate() {
            prop_assert!(speed_terms(&h, psi, traj.times[k]).unwrap().var_h1 >= -1e-12);
            prop_assert!(variance(&build_h1(&spec, traj.times[k]), psi).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn ratio_of_sums_matches_operator(seed in any::<u64>(), f in 0.0f64..20.0, t in 1e-6f64..2.0) {
        let (h, spec, _) = build_example(&SpinExampleConfig::default().with_strength(f)).unwrap();
        let psi0 = random_state(&mut rng(seed), 2);
        let psi_t = evolve_exp(&h, &psi0, &[0.0, t]).unwrap().last_psi().clone();
        let ratio = h1_expectation_ratio(&spec, &psi0, t).unwrap();
        let operator = expectation(&build_h1(&spec, t), &psi_t).unwrap();
        prop_assert!((ratio - operator).abs() <= 1e-10);
    }

    #[test]
    fn strong_measurement_freezes_spin_family(
        a1 in 0.0f64..0.1,
        spread in 0.005f64..0.1,
        accuracy in 0.002f64..0.02,
        record in 0.0f64..0.2,
    ) {
        let config = SpinExampleConfig {
            a1,
            a2: a1 + spread,
            delta_a: accuracy,
            a_record: record,
            ..Default::default()
        };
        let g = |a: f64| ((a - record) / accuracy).powi(2) / 4.0;
        // Freezing at f = 100, t = 0.1 needs a penalty gap well above 1/(f t).
        prop_assume!((g(config.a2) - g(config.a1)).abs() >= 1.5);
        // Both branches decaying past the survival floor is a filtered-out state.
        prop_assume!(g(config.a1).min(g(config.a2)) <= 25.0);
        let rows = figure1_sweep(&config, &[0.0, 100.0]).unwrap();
        prop_assert!(rows[1].v <= 0.01 * rows[0].v, "V(0) = {}, V(100) = {}", rows[0].v, rows[1].v);
    }

    // spin example

    #[test]
    fn spin_observable_commutes_with_free_hamiltonian(
        coupling in 0.1f64..5.0,
        hbar in 0.5f64..2.0,
        a1 in -1.0f64..1.0,
        spread in 1e-3f64..1.0,
    ) {
        let config = SpinExampleConfig { omega: coupling, alpha: coupling, hbar, a1, a2: a1 + spread, ..Default::default() };
        let (h, spec, _) = build_example(&config).unwrap();
        prop_assert!(commutator_norm(spec.observable(), h.h0()).unwrap() <= 1e-12);
    }

    #[test]
    fn spin_routes_agree_with_closed_form(t in 0.0f64..2.0, which in 0usize..4) {
        let f = [0.0, 1.0, 5.0, 20.0][which];
        let config = SpinExampleConfig::default().with_strength(f);
        let (h, _, psi0) = build_example(&config).unwrap();
        let times = [0.0, t.max(1e-9)];
        let exp = evolve_exp(&h, &psi0, &times).unwrap();
        let closed = qsl::spin::closed_form_state(&config, times[1]).unwrap();
        prop_assert!(fidelity_deficit(exp.last_psi(), &closed) <= 1e-8);
    }
}

#[test]
fn measured_fig1_speed_exceeds_free_speed_somewhere() {
    let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.5).collect();
    let rows = figure1_sweep(&SpinExampleConfig::default(), &grid).unwrap();
    assert!(rows[1..].iter().any(|r| r.v > rows[0].v));
}

#[test]
fn measured_fig3_curve_settles_from_above_after_its_peak() {
    let grid: Vec<f64> = (1..=300).map(|k| k as f64 / 100.0).collect();
    let rows = figure3_sweep(&SpinExampleConfig::default(), &grid, &[5.0]).unwrap();
    let s: Vec<f64> = rows.iter().map(|r| r.s0).collect();
    let peak = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
    assert!(peak > 0 && peak < s.len() - 1);
    // The approach to the Zeno value overshoots: past the peak the curve
    // descends (to 1e-6) onto 3 pi / 4.
    assert!(s[peak] - s[s.len() - 1] > 1e-3);
    assert!(s[peak..].windows(2).all(|w| w[1] <= w[0] + 1e-6));
    assert!((s[s.len() - 1] - 0.75 * PI).abs() < 1e-6);
}

#[test]
fn figure_sweeps_are_bitwise_deterministic() {
    let config = SpinExampleConfig::default();
    let t_grid: Vec<f64> = (1..=50).map(|k| k as f64 / 20.0).collect();
    let f_grid = [0.0, 0.5, 5.0, 50.0];
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    let fig1 = || bits(figure1_sweep(&config, &f_grid).unwrap().iter().map(|r| r.v).collect());
    let fig2 = || bits(figure2_sweep(&config, &t_grid, &[0.0, 5.0]).unwrap().iter().map(|r| r.v_bar).collect());
    let fig3 = || bits(figure3_sweep(&config, &t_grid, &[0.0, 5.0]).unwrap().iter().map(|r| r.s0).collect());
    assert_eq!(fig1(), fig1());
    assert_eq!(fig2(), fig2());
    assert_eq!(fig3(), fig3());
}

#[test]
fn geodesic_is_symmetric_and_bounded() {
    let mut rng = rng(11);
    for _ in 0..200 {
        let d = rng.random_range(1..=8);
        let (a, b) = (random_state(&mut rng, d), random_state(&mut rng, d));
        let ab = geodesic_distance(&a, &b).unwrap();
        assert!((ab - geodesic_distance(&b, &a).unwrap()).abs() < 1e-14);
        assert!((0.0..=PI).contains(&ab));
    }
}
