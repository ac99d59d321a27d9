//! Fixed-step propagation of the universe state and the shared guiding-state
//! grid consumed by every trajectory.
//!
//! The guiding state obeys the plain Schrödinger equation and is independent
//! of the hidden-variable values, so it is computed once per model and shared
//! read-only by all trajectories. Integration runs at substep dt/2 and stores
//! every substep, which hands trajectory integration exact states at the RK4
//! stage times t, t + dt/2, t + dt — no interpolation ever occurs.

use crate::bath::UniverseHamiltonian;
use crate::error::{Error, Result};
use crate::linalg::ladder::partial_trace_bath;
use crate::linalg::state::{DensityMatrix, StateVector};
use crate::numerics::{rk4_step, Rk4Buffers};
use crate::C64;

pub const NORM_DRIFT_LIMIT: f64 = 1e-6;
pub const TRUNCATION_LIMIT: f64 = 1e-6;

/// Anything that can act as Ĥ_uni(t) on a state vector, returning the result
/// and the truncation loss of the application.
pub trait HamiltonianAction {
    fn apply(&self, t: f64, state: &StateVector) -> Result<(StateVector, f64)>;
}

impl HamiltonianAction for UniverseHamiltonian<'_> {
    fn apply(&self, t: f64, state: &StateVector) -> Result<(StateVector, f64)> {
        self.apply_h_uni(t, state)
    }
}

/// Fixed-step integrator configuration. `dt` is the trajectory step; the
/// guiding state is integrated at dt/2 internally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub checkpoint_stride: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64, checkpoint_stride: usize) -> Self {
        Self {
            dt,
            t_final,
            checkpoint_stride,
        }
    }

    /// dt must resolve the fastest detuning (dt ≤ 0.1 / max(1, max|Ω_k|)),
    /// t_final must sit on the step lattice, and the stride must divide the
    /// step count so t_final is always a stored checkpoint.
    pub fn validate(&self, max_abs_detuning: f64) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt and t_final must be positive (dt = {}, t_final = {})",
                self.dt, self.t_final
            )));
        }
        let dt_max = 0.1 / max_abs_detuning.max(1.0);
        if self.dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds 0.1/max(1, max|detuning|) = {dt_max}",
                self.dt
            )));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "t_final/dt = {steps} is not an integer"
            )));
        }
        if self.checkpoint_stride == 0 {
            return Err(Error::InvalidConfig("checkpoint_stride must be >= 1".into()));
        }
        if (steps.round() as usize) % self.checkpoint_stride != 0 {
            return Err(Error::InvalidConfig(format!(
                "checkpoint_stride {} does not divide the {} steps",
                self.checkpoint_stride,
                steps.round()
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Stored guiding-state checkpoints on a uniform lattice, plus the validity
/// diagnostics accumulated during propagation.
#[derive(Debug, Clone)]
pub struct GuidingStateGrid {
    states: Vec<StateVector>,
    storage_step: f64,
    dt: f64,
    t_final: f64,
    /// Stride-1 grids store every dt/2 substep; coarser grids only full steps.
    half_lattice: bool,
    pub truncation_loss: f64,
    pub max_norm_drift: f64,
}

impl GuidingStateGrid {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn storage_step(&self) -> f64 {
        self.storage_step
    }

    pub fn has_half_lattice(&self) -> bool {
        self.half_lattice
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.storage_step;
        (0..self.states.len()).map(move |i| i as f64 * step)
    }

    pub(crate) fn state_by_index(&self, idx: usize) -> &StateVector {
        &self.states[idx]
    }

    /// The stored state at `t`, which must lie on the storage lattice.
    pub fn state_at(&self, t: f64) -> Result<&StateVector> {
        let idx = self.lattice_index(t)?;
        Ok(&self.states[idx])
    }

    pub fn lattice_index(&self, t: f64) -> Result<usize> {
        let ratio = t / self.storage_step;
        let idx = ratio.round();
        if (ratio - idx).abs() > 1e-6 || idx < 0.0 || (idx as usize) >= self.states.len() {
            return Err(Error::OffLattice {
                t,
                step: self.storage_step,
            });
        }
        Ok(idx as usize)
    }

    /// Exact ρ_red(t) by partial trace of the stored state.
    pub fn reduced_state(&self, t: f64) -> Result<DensityMatrix> {
        Ok(partial_trace_bath(self.state_at(t)?))
    }
}

/// Propagate `initial` under `h` and store the checkpoint lattice.
///
/// No renormalization is applied: norm drift is measured and bounded, not
/// hidden. The run fails on the first checkpoint whose drift exceeds 1e-6 or
/// once the accumulated truncation loss passes 1e-6.
pub fn evolve<H: HamiltonianAction>(
    initial: &StateVector,
    h: &H,
    cfg: &IntegratorConfig,
) -> Result<GuidingStateGrid> {
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!(
            "initial universe state norm {norm} is not 1"
        )));
    }
    let n_steps = cfg.n_steps();
    let (substeps_per_step, storage_step, half_lattice) = if cfg.checkpoint_stride == 1 {
        (2usize, cfg.dt / 2.0, true)
    } else {
        (2usize, cfg.dt * cfg.checkpoint_stride as f64, false)
    };
    let substep = cfg.dt / substeps_per_step as f64;

    let mut grid = GuidingStateGrid {
        states: Vec::new(),
        storage_step,
        dt: cfg.dt,
        t_final: cfg.t_final,
        half_lattice,
        truncation_loss: 0.0,
        max_norm_drift: 0.0,
    };

    let mut current = initial.clone();
    current.time = 0.0;
    grid.states.push(current.clone());

    let mut buf = Rk4Buffers::new(current.amplitudes.len());
    let mut amps = current.amplitudes.clone();
    let basis = current.basis;
    let minus_i = C64::new(0.0, -1.0);

    for sub in 0..n_steps * substeps_per_step {
        let t = sub as f64 * substep;
        let mut step_loss = 0.0;
        {
            let loss_acc = &mut step_loss;
            rk4_step(&mut amps, t, substep, &mut buf, |ts, y, out| {
                let y_state = StateVector {
                    amplitudes: y.to_vec(),
                    basis,
                    time: ts,
                };
                let (hy, loss) = h.apply(ts, &y_state)?;
                *loss_acc += loss;
                for (o, v) in out.iter_mut().zip(&hy.amplitudes) {
                    *o = minus_i * v;
                }
                Ok(())
            })?;
        }
        // Dropped amplitude enters the step scaled by the substep, so the
        // squared-norm leakage estimate carries substep².
        grid.truncation_loss += substep * substep * step_loss;

        let full_steps_done = (sub + 1) / substeps_per_step;
        let at_full = (sub + 1) % substeps_per_step == 0;
        let store = if half_lattice {
            true
        } else {
            at_full && full_steps_done % cfg.checkpoint_stride == 0
        };
        if store {
            let t_next = (grid.states.len()) as f64 * storage_step;
            let state = StateVector {
                amplitudes: amps.clone(),
                basis,
                time: t_next,
            };
            let drift = (state.norm() - 1.0).abs();
            grid.max_norm_drift = grid.max_norm_drift.max(drift);
            if drift > NORM_DRIFT_LIMIT {
                return Err(Error::NormDrift {
                    step: full_steps_done,
                    t: t_next,
                    drift,
                    limit: NORM_DRIFT_LIMIT,
                });
            }
            if grid.truncation_loss > TRUNCATION_LIMIT {
                return Err(Error::TruncationLoss {
                    step: full_steps_done,
                    t: t_next,
                    loss: grid.truncation_loss,
                    limit: TRUNCATION_LIMIT,
                });
            }
            grid.states.push(state);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{sigma_minus, BathSpec, ModeSpec, SystemSpec, UniverseHamiltonian};
    use crate::linalg::basis::BasisDescriptor;
    use crate::linalg::state::SystemOperator;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn vacuum_rabi_model() -> (SystemSpec, BathSpec) {
        let sys = SystemSpec::new(
            SystemOperator::hermitian(DMatrix::zeros(2, 2)).unwrap(),
            SystemOperator::general(sigma_minus()).unwrap(),
            DVector::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
        )
        .unwrap();
        let bath = BathSpec::new(vec![ModeSpec {
            detuning: 0.0,
            coupling: 1.0,
        }])
        .unwrap();
        (sys, bath)
    }

    fn excited_population(grid: &GuidingStateGrid, t: f64) -> f64 {
        grid.reduced_state(t).unwrap().entries[(0, 0)].re
    }

    #[test]
    fn zero_generator_keeps_state() {
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let sys = SystemSpec::new(
            SystemOperator::hermitian(DMatrix::zeros(2, 2)).unwrap(),
            SystemOperator::general(sigma_minus()).unwrap(),
            DVector::from_row_slice(&[c(0.6, 0.0), c(0.0, 0.8)]),
        )
        .unwrap();
        let bath = BathSpec::new(vec![ModeSpec {
            detuning: 1.0,
            coupling: 0.0,
        }])
        .unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, 1);
        cfg.validate(bath.max_abs_detuning()).unwrap();
        let grid = evolve(&initial, &h, &cfg).unwrap();
        let fin = grid.state_at(1.0).unwrap();
        for (a, b) in fin.amplitudes.iter().zip(&initial.amplitudes) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn vacuum_rabi_matches_analytic_oracle() {
        // Closed-form 2×2 solution: P_e(t) = cos² t.
        let (sys, bath) = vacuum_rabi_model();
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 1.0, 1);
        let grid = evolve(&initial, &h, &cfg).unwrap();
        for t in [0.25, 0.5, 1.0] {
            assert_abs_diff_eq!(excited_population(&grid, t), t.cos().powi(2), epsilon = 1e-8);
        }
        // Unitarity at the endpoint.
        assert_abs_diff_eq!(grid.state_at(1.0).unwrap().norm(), 1.0, epsilon = 1e-8);
        assert!(grid.max_norm_drift <= 1e-8);
        assert_eq!(grid.truncation_loss, 0.0);
    }

    #[test]
    fn reduced_state_full_transfer_at_half_pi() {
        let (sys, bath) = vacuum_rabi_model();
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let dt = std::f64::consts::PI / 2.0 / 20000.0;
        let cfg = IntegratorConfig::new(dt, std::f64::consts::PI / 2.0, 1);
        let grid = evolve(&initial, &h, &cfg).unwrap();
        let rho = grid.reduced_state(std::f64::consts::PI / 2.0).unwrap();
        assert_abs_diff_eq!(rho.entries[(0, 0)].re, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rho.entries[(1, 1)].re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn state_at_contract() {
        let (sys, bath) = vacuum_rabi_model();
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 0.1, 1);
        let grid = evolve(&initial, &h, &cfg).unwrap();
        assert_eq!(grid.state_at(0.0).unwrap().amplitudes, initial.amplitudes);
        assert!(grid.state_at(0.1).is_ok());
        assert!(grid.state_at(0.005).is_ok()); // half lattice is stored
        assert!(matches!(
            grid.state_at(0.0037),
            Err(Error::OffLattice { .. })
        ));
    }

    #[test]
    fn rk4_order_measured_between_12_and_20() {
        let (sys, bath) = vacuum_rabi_model();
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            let cfg = IntegratorConfig::new(dt, 1.0, 1);
            let grid = evolve(&initial, &h, &cfg).unwrap();
            errs.push((excited_population(&grid, 1.0) - 1.0f64.cos().powi(2)).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (12.0..=20.0).contains(&ratio),
            "dt-halving ratio {ratio} outside [12, 20]"
        );
    }

    #[test]
    fn time_reversal_recovers_initial() {
        struct Reversed<'h> {
            inner: &'h UniverseHamiltonian<'h>,
            t_final: f64,
        }
        impl HamiltonianAction for Reversed<'_> {
            fn apply(&self, t: f64, state: &StateVector) -> Result<(StateVector, f64)> {
                let (mut out, loss) = self.inner.apply_h_uni(self.t_final - t, state)?;
                out.scale(C64::new(-1.0, 0.0));
                Ok((out, loss))
            }
        }
        let (sys, bath) = vacuum_rabi_model();
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 1.0, 1);
        let grid = evolve(&initial, &h, &cfg).unwrap();
        let mut turning = grid.state_at(1.0).unwrap().clone();
        let norm = turning.norm();
        turning.scale(C64::new(1.0 / norm, 0.0));
        turning.time = 0.0;
        let back = evolve(&turning, &Reversed { inner: &h, t_final: 1.0 }, &cfg).unwrap();
        let recovered = back.state_at(1.0).unwrap();
        let fidelity = initial.inner(recovered).norm();
        assert!(
            1.0 - fidelity <= 1e-6,
            "fidelity deficit {} too large",
            1.0 - fidelity
        );
    }

    #[test]
    fn dense_fock_and_single_excitation_agree() {
        let (sys, bath) = vacuum_rabi_model();
        let sigma_z = DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), C64::ZERO, C64::ZERO, c(-1.0, 0.0)],
        );
        let mut curves = Vec::new();
        for dense in [true, false] {
            let basis = if dense {
                BasisDescriptor::dense_fock(2, 1, 2).unwrap()
            } else {
                BasisDescriptor::single_excitation(2, 1).unwrap()
            };
            let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
            let initial =
                StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
            let cfg = IntegratorConfig::new(1e-2, 1.0, 1);
            let grid = evolve(&initial, &h, &cfg).unwrap();
            let curve: Vec<f64> = (0..=10)
                .map(|i| {
                    let rho = grid.reduced_state(i as f64 * 0.1).unwrap();
                    (rho.entries.clone() * &sigma_z).trace().re
                })
                .collect();
            curves.push(curve);
        }
        for (a, b) in curves[0].iter().zip(&curves[1]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(1e-3, 1.0, 1).validate(1.0).is_ok());
        // dt too coarse for the detuning
        assert!(IntegratorConfig::new(0.02, 1.0, 1).validate(10.0).is_err());
        // t_final off the lattice
        assert!(IntegratorConfig::new(0.3, 1.0, 1).validate(0.0).is_err());
        // stride must divide the step count
        assert!(IntegratorConfig::new(0.1, 1.0, 3).validate(0.0).is_err());
        assert!(IntegratorConfig::new(0.1, 1.0, 5).validate(0.0).is_ok());
    }

    #[test]
    fn coarse_stride_stores_only_multiples() {
        let (sys, bath) = vacuum_rabi_model();
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let initial =
            StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0).unwrap();
        let cfg = IntegratorConfig::new(0.01, 1.0, 10);
        let grid = evolve(&initial, &h, &cfg).unwrap();
        assert!(!grid.has_half_lattice());
        assert_eq!(grid.len(), 11);
        assert!(grid.state_at(0.1).is_ok());
        assert!(grid.state_at(0.05).is_err());
    }
}
