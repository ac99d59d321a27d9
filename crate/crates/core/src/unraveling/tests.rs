use super::*;
use crate::bath::{check_symmetric_pairs, sigma_minus, BathSpec, ModeSpec};
use crate::conditioning::condition;
use crate::linalg::basis::BasisDescriptor;
use crate::linalg::state::SystemOperator;
use crate::propagator::{evolve, IntegratorConfig};
use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn two_mode_bath(g: f64) -> BathSpec {
    BathSpec::new(vec![
        ModeSpec { detuning: 1.0, coupling: g },
        ModeSpec { detuning: -1.0, coupling: g },
    ])
    .unwrap()
}

fn superposition_system() -> SystemSpec {
    // (|e⟩ + |g⟩)/√2 so ⟨σ₋⟩ = 1/2.
    let r = 0.5f64.sqrt();
    SystemSpec::new(
        SystemOperator::hermitian(DMatrix::zeros(2, 2)).unwrap(),
        SystemOperator::general(sigma_minus()).unwrap(),
        DVector::from_row_slice(&[c(r, 0.0), c(r, 0.0)]),
    )
    .unwrap()
}

/// Random normalized state with per-mode Fock support ≤ n_max − 2, so ladder
/// raises inside commutators never hit the truncation edge.
fn random_state_below_edge(basis: BasisDescriptor, seed: u64) -> StateVector {
    let mut rng = RngStream { master_seed: seed, trajectory_index: 0 }.rng();
    let n_max = basis.n_max().unwrap();
    let mut amps = vec![C64::ZERO; basis.total_dim()];
    for (idx, a) in amps.iter_mut().enumerate() {
        let b = idx % basis.bath_dim();
        let ok = (0..basis.modes()).all(|m| basis.fock_level(b, m) + 2 <= n_max);
        if ok {
            *a = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    StateVector::new(basis, amps, 0.0).unwrap()
}

#[test]
fn sampler_moments_match_vacuum_distributions() {
    let bath = two_mode_bath(0.4);
    let pairing = check_symmetric_pairs(&bath).unwrap();
    let n = 100_000usize;
    let mut rng = RngStream { master_seed: 11, trajectory_index: 0 }.rng();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut abs2 = 0.0;
    for _ in 0..n {
        if let HiddenVars::Position(xs) =
            sample_initial(Unraveling::Position, &bath, None, &mut rng).unwrap()
        {
            sum += xs[0];
            sumsq += xs[0] * xs[0];
        }
        if let HiddenVars::Coherent(a) =
            sample_initial(Unraveling::Coherent, &bath, Some(&pairing), &mut rng).unwrap()
        {
            abs2 += a[1].norm_sqr();
        }
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean * mean;
    // density e^{-x²}/√π has variance 1/2
    assert!(mean.abs() <= 4.0 * (0.5 / n as f64).sqrt(), "mean {mean}");
    let se_var = 0.5 * (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((var - 0.5).abs() <= 3.0 * se_var, "variance {var}");
    // E[|a|²] = 1 for the vacuum Husimi distribution; |a|² is Exp(1), SE = 1/√n
    let mean_abs2 = abs2 / n as f64;
    assert!((mean_abs2 - 1.0).abs() <= 3.0 / (n as f64).sqrt(), "E|a|² = {mean_abs2}");
}

#[test]
fn sampler_is_deterministic_per_stream() {
    let bath = two_mode_bath(0.4);
    for index in [0u64, 7] {
        let mut r1 = RngStream { master_seed: 5, trajectory_index: index }.rng();
        let mut r2 = RngStream { master_seed: 5, trajectory_index: index }.rng();
        let a = sample_initial(Unraveling::Coherent, &bath, None, &mut r1).unwrap();
        let b = sample_initial(Unraveling::Coherent, &bath, None, &mut r2).unwrap();
        assert_eq!(a, b);
    }
    let mut r1 = RngStream { master_seed: 5, trajectory_index: 0 }.rng();
    let mut r2 = RngStream { master_seed: 5, trajectory_index: 1 }.rng();
    let a = sample_initial(Unraveling::Position, &bath, None, &mut r1).unwrap();
    let b = sample_initial(Unraveling::Position, &bath, None, &mut r2).unwrap();
    assert_ne!(a, b);
}

#[test]
fn closed_drift_vanishes_without_coherence() {
    let bath = two_mode_bath(0.7);
    let pairing = check_symmetric_pairs(&bath).unwrap();
    for unr in [Unraveling::Position, Unraveling::Quadrature, Unraveling::Coherent] {
        let v = velocity_closed(unr, C64::ZERO, &bath, Some(&pairing), 0.3);
        assert!(v.iter().all(|x| *x == 0.0));
    }
}

#[test]
#[allow(clippy::approx_constant)] // the frozen expected values are the point
fn closed_drift_frozen_values() {
    // ⟨σ₋⟩ = 1/2, g = 1, Ωt = 0.
    let bath = BathSpec::new(vec![ModeSpec { detuning: 0.0, coupling: 1.0 }]).unwrap();
    let l = c(0.5, 0.0);
    let v = velocity_closed(Unraveling::Position, l, &bath, None, 0.0);
    assert_abs_diff_eq!(v[0], 0.70711, epsilon = 1e-5);
    assert_abs_diff_eq!(v[0], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    // d_t a = g e^{iΩt}⟨L̂⟩ = 0.5, so d_t a* = 0.5 as well.
    let v = velocity_closed(Unraveling::Coherent, l, &bath, None, 0.0);
    assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
}

#[test]
#[allow(clippy::approx_constant)]
fn noise_frozen_values() {
    // All hidden values zero → z = 0.
    let bath = two_mode_bath(0.4);
    let pairing = check_symmetric_pairs(&bath).unwrap();
    let z0 = noise_z(&HiddenVars::Position(vec![0.0, 0.0]), &bath, 0.3, None);
    assert_eq!(z0.z, C64::ZERO);

    // One mode, x = 1, g = 0.5, Ωt = π/2 → z = -0.70711 i.
    let single = BathSpec::new(vec![ModeSpec { detuning: 1.0, coupling: 0.5 }]).unwrap();
    let z = noise_z(
        &HiddenVars::Position(vec![1.0]),
        &single,
        std::f64::consts::PI / 2.0,
        None,
    );
    assert_abs_diff_eq!(z.z.re, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(z.z.im, -0.70711, epsilon = 1e-5);

    // Quadrature noise is exactly real by construction.
    let mut rng = RngStream { master_seed: 3, trajectory_index: 0 }.rng();
    for _ in 0..20 {
        let hv = sample_initial(Unraveling::Quadrature, &bath, Some(&pairing), &mut rng).unwrap();
        let z = noise_z(&hv, &bath, rng.random::<f64>() * 5.0, Some(&pairing));
        assert_eq!(z.z.im, 0.0);
    }
}

#[test]
fn velocity_general_matches_closed_all_unravelings() {
    // The dual-route velocity check on random states, hidden values, times.
    let basis = BasisDescriptor::dense_fock(2, 2, 4).unwrap();
    let sys = superposition_system();
    let bath = two_mode_bath(0.6);
    let pairing = check_symmetric_pairs(&bath).unwrap();
    let h = crate::bath::UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
    let mut rng = RngStream { master_seed: 77, trajectory_index: 0 }.rng();
    for probe in 0..30 {
        let state = random_state_below_edge(basis, 1000 + probe);
        let t = rng.random::<f64>() * 4.0;
        let unr = match probe % 3 {
            0 => Unraveling::Position,
            1 => Unraveling::Quadrature,
            _ => Unraveling::Coherent,
        };
        let hv = sample_initial(unr, &bath, Some(&pairing), &mut rng).unwrap();
        let cs = condition(&state, &hv, Some(&pairing)).unwrap();
        let l_exp = sys.lowering.expectation(&cs.ket);
        let closed = velocity_closed(unr, l_exp, &bath, Some(&pairing), t);
        let general = velocity_general(&state, &hv, t, &h, Some(&pairing)).unwrap();
        assert_eq!(closed.len(), general.len());
        for (a, b) in closed.iter().zip(&general) {
            let dev = (a - b).abs() / a.abs().max(1.0);
            assert!(dev <= 1e-8, "unr {unr:?} closed {a} general {b}");
        }
    }
}

#[test]
fn velocity_general_zero_for_decoupled_bath() {
    let basis = BasisDescriptor::dense_fock(2, 2, 3).unwrap();
    let sys = superposition_system();
    let bath = two_mode_bath(0.0);
    let h = crate::bath::UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
    let state = random_state_below_edge(basis, 4);
    let v = velocity_general(&state, &HiddenVars::Position(vec![0.2, -0.4]), 1.1, &h, None).unwrap();
    assert!(v.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn quadrature_brackets_have_no_imaginary_residue() {
    let basis = BasisDescriptor::dense_fock(2, 2, 4).unwrap();
    let sys = superposition_system();
    let bath = two_mode_bath(0.5);
    let pairing = check_symmetric_pairs(&bath).unwrap();
    let h = crate::bath::UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
    let mut rng = RngStream { master_seed: 9, trajectory_index: 2 }.rng();
    for probe in 0..10 {
        let state = random_state_below_edge(basis, 300 + probe);
        let hv = sample_initial(Unraveling::Quadrature, &bath, Some(&pairing), &mut rng).unwrap();
        let brackets =
            velocity_general_brackets(&state, &hv, 0.7 * probe as f64, &h, Some(&pairing)).unwrap();
        for b in brackets {
            assert!(b.im.abs() <= 1e-14, "imaginary residue {}", b.im);
        }
    }
}

fn vacuum_rabi_grid(t_final: f64) -> (SystemSpec, BathSpec, crate::propagator::GuidingStateGrid) {
    let sys = SystemSpec::new(
        SystemOperator::hermitian(DMatrix::zeros(2, 2)).unwrap(),
        SystemOperator::general(sigma_minus()).unwrap(),
        DVector::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
    )
    .unwrap();
    let bath = BathSpec::new(vec![ModeSpec { detuning: 0.0, coupling: 1.0 }]).unwrap();
    let basis = BasisDescriptor::dense_fock(2, 1, 3).unwrap();
    let h = crate::bath::UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
    let initial = StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
    let cfg = IntegratorConfig::new(1e-3, t_final, 1);
    let grid = evolve(&initial, &h, &cfg).unwrap();
    (sys, bath, grid)
}

#[test]
fn decoupled_bath_keeps_hidden_values_constant() {
    let sys = superposition_system();
    let bath = two_mode_bath(0.0);
    let basis = BasisDescriptor::dense_fock(2, 2, 2).unwrap();
    let h = crate::bath::UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
    let initial = StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
    let cfg = IntegratorConfig::new(0.01, 0.5, 1);
    let grid = evolve(&initial, &h, &cfg).unwrap();
    let traj = integrate_trajectory(
        &grid,
        &sys,
        &bath,
        None,
        Unraveling::Position,
        RngStream { master_seed: 1, trajectory_index: 0 },
        &TrajectoryOptions::default(),
    )
    .unwrap();
    assert_eq!(traj.status, TrajectoryStatus::Completed);
    assert_eq!(traj.times.len(), 51);
    let first = &traj.hidden[0];
    for row in &traj.hidden {
        for (a, b) in row.iter().zip(first) {
            assert_eq!(a, b);
        }
    }
    for z in &traj.noise {
        assert_eq!(z.z, C64::ZERO);
    }
}

#[test]
fn trajectory_replay_is_bit_identical() {
    let (sys, bath, grid) = vacuum_rabi_grid(0.2);
    let opts = TrajectoryOptions::default();
    let stream = RngStream { master_seed: 42, trajectory_index: 3 };
    let t1 = integrate_trajectory(&grid, &sys, &bath, None, Unraveling::Position, stream, &opts)
        .unwrap();
    let t2 = integrate_trajectory(&grid, &sys, &bath, None, Unraveling::Position, stream, &opts)
        .unwrap();
    assert_eq!(t1, t2);
}

#[test]
fn closed_and_general_paths_integrate_identically() {
    // Dual-path self-oracle: the production drift and the commutator-form
    // drift drive the same trajectory to 1e-10.
    let (sys, bath, grid) = vacuum_rabi_grid(0.3);
    for unr in [Unraveling::Position, Unraveling::Coherent] {
        let stream = RngStream { master_seed: 8, trajectory_index: 1 };
        let closed = integrate_trajectory(
            &grid, &sys, &bath, None, unr, stream,
            &TrajectoryOptions { velocity_source: VelocitySource::Closed, ..Default::default() },
        )
        .unwrap();
        let general = integrate_trajectory(
            &grid, &sys, &bath, None, unr, stream,
            &TrajectoryOptions { velocity_source: VelocitySource::General, ..Default::default() },
        )
        .unwrap();
        assert_eq!(closed.status, TrajectoryStatus::Completed);
        assert_eq!(general.status, TrajectoryStatus::Completed);
        let mut max_dev = 0.0f64;
        for (a, b) in closed.hidden.iter().zip(&general.hidden) {
            for (x, y) in a.iter().zip(b) {
                max_dev = max_dev.max((x - y).abs());
            }
        }
        assert!(max_dev <= 1e-10, "{unr:?} dual-path deviation {max_dev}");
    }
}

#[test]
fn snapshots_are_recorded_at_requested_times() {
    let (sys, bath, grid) = vacuum_rabi_grid(0.2);
    let opts = TrajectoryOptions {
        snapshot_times: &[0.0, 0.1, 0.2],
        ..Default::default()
    };
    let traj = integrate_trajectory(
        &grid, &sys, &bath, None, Unraveling::Coherent,
        RngStream { master_seed: 2, trajectory_index: 0 },
        &opts,
    )
    .unwrap();
    assert_eq!(traj.snapshots.len(), 3);
    for (t, cs) in &traj.snapshots {
        assert!(cs.weight > 0.0, "weight at {t}");
        assert_abs_diff_eq!(cs.ket.norm(), 1.0, epsilon = 1e-12);
    }
    // Off-lattice snapshot time is rejected.
    let bad = TrajectoryOptions { snapshot_times: &[0.05001], ..Default::default() };
    assert!(matches!(
        integrate_trajectory(
            &grid, &sys, &bath, None, Unraveling::Coherent,
            RngStream { master_seed: 2, trajectory_index: 0 }, &bad,
        ),
        Err(Error::OffLattice { .. })
    ));
}

#[test]
fn observables_recorded_per_step() {
    let (sys, bath, grid) = vacuum_rabi_grid(0.1);
    let sigma_z = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), C64::ZERO, C64::ZERO, c(-1.0, 0.0)]);
    let opts = TrajectoryOptions { observables: std::slice::from_ref(&sigma_z), ..Default::default() };
    let traj = integrate_trajectory(
        &grid, &sys, &bath, None, Unraveling::Position,
        RngStream { master_seed: 6, trajectory_index: 0 },
        &opts,
    )
    .unwrap();
    assert_eq!(traj.observables.len(), traj.times.len());
    // Trajectory starts in |e⟩ exactly: ⟨σ_z⟩ = 1 at t = 0.
    assert_abs_diff_eq!(traj.observables[0][0], 1.0, epsilon = 1e-12);
    for row in &traj.observables {
        assert!(row[0] <= 1.0 + 1e-12 && row[0] >= -1.0 - 1e-12);
    }
}
