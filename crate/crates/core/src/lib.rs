//! Exact system–bath propagation with deterministic hidden-variable bath
//! trajectories for the position, quadrature, and coherent unravelings, plus
//! the discrete Bell jump process and Monte Carlo reconstruction of the
//! reduced system state.
//!
//! The guiding state |Ψ(t)⟩ obeys the plain Schrödinger equation and is
//! independent of the hidden values, so it is propagated once per model and
//! shared read-only by every trajectory; the hidden values follow a
//! deterministic velocity field evaluated from the system state conditioned
//! on the trajectory's own current values, with all randomness in the t = 0
//! draw.
//!
//! ```
//! use modaltraj::bath::{sigma_minus, BathSpec, ModeSpec, SystemSpec, UniverseHamiltonian};
//! use modaltraj::ensemble::{run_ensemble, EnsembleConfig};
//! use modaltraj::linalg::{BasisDescriptor, StateVector, SystemOperator};
//! use modaltraj::propagator::{evolve, IntegratorConfig};
//! use modaltraj::unraveling::Unraveling;
//! use modaltraj::C64;
//! use nalgebra::{DMatrix, DVector};
//!
//! // A two-level emitter, resonant with a single bath mode.
//! let sys = SystemSpec::new(
//!     SystemOperator::hermitian(DMatrix::zeros(2, 2))?,
//!     SystemOperator::general(sigma_minus())?,
//!     DVector::from_row_slice(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
//! )?;
//! let bath = BathSpec::new(vec![ModeSpec { detuning: 0.0, coupling: 1.0 }])?;
//! let basis = BasisDescriptor::dense_fock(2, 1, 2)?;
//!
//! // Propagate the guiding state once, then average conditioned projectors
//! // over coherent-amplitude trajectories.
//! let h = UniverseHamiltonian::new(&sys, &bath, basis)?;
//! let initial = StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0)?;
//! let grid = evolve(&initial, &h, &IntegratorConfig::new(0.01, 0.5, 1))?;
//! let result = run_ensemble(
//!     &grid, &sys, &bath, None, Unraveling::Coherent,
//!     &EnsembleConfig { n_traj: 50, master_seed: 7, worker_count: 1, checkpoints: vec![0.5] },
//! )?;
//! assert!(result.checkpoints[0].trace_distance < 0.2);
//! # Ok::<(), modaltraj::Error>(())
//! ```

pub use num_complex::Complex64 as C64;

pub mod bath;
pub mod bell;
pub mod conditioning;
pub mod ensemble;
pub mod error;
pub mod linalg;
mod numerics;
pub mod propagator;
pub mod unraveling;
pub mod verify;

pub use error::{Error, Result};
