//! Structured complex linear algebra for system ⊗ bath states: tensor bases,
//! ladder-operator actions, partial trace, and the oscillator overlap kernels
//! used by the unravelings.

pub mod basis;
pub mod fock;
pub mod ladder;
pub mod quad;
pub mod state;

pub use basis::{BasisDescriptor, BathLayout};
pub use fock::{coherent_overlap_vector, fock_position_amplitude, CoherentOverlap};
pub use ladder::{apply_bath_ladder, partial_trace_bath, Ladder};
pub use state::{apply_system, DensityMatrix, StateVector, SystemOperator};
