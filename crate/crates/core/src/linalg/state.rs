//! Universe state vectors, system operators, and reduced density matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::basis::BasisDescriptor;
use crate::C64;

/// Complex amplitude vector over a [`BasisDescriptor`], tagged with its time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
    pub basis: BasisDescriptor,
    pub time: f64,
}

impl StateVector {
    pub fn new(basis: BasisDescriptor, amplitudes: Vec<C64>, time: f64) -> Result<Self> {
        if amplitudes.len() != basis.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} amplitudes, basis needs {}",
                amplitudes.len(),
                basis.total_dim()
            )));
        }
        Ok(Self {
            amplitudes,
            basis,
            time,
        })
    }

    pub fn zero(basis: BasisDescriptor, time: f64) -> Self {
        Self {
            amplitudes: vec![C64::ZERO; basis.total_dim()],
            basis,
            time,
        }
    }

    /// `|sys⟩ ⊗ |vacuum⟩` product state.
    pub fn from_system_and_vacuum(basis: BasisDescriptor, sys: &[C64], time: f64) -> Result<Self> {
        if sys.len() != basis.system_dim() {
            return Err(Error::DimensionMismatch(format!(
                "system ket has {} entries, expected {}",
                sys.len(),
                basis.system_dim()
            )));
        }
        let mut state = Self::zero(basis, time);
        let bath_dim = basis.bath_dim();
        for (i, amp) in sys.iter().enumerate() {
            state.amplitudes[i * bath_dim] = *amp;
        }
        Ok(state)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&mut self, c: C64) {
        for a in &mut self.amplitudes {
            *a *= c;
        }
    }

    /// `self += c * other`.
    pub fn scaled_add(&mut self, c: C64, other: &Self) {
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a += c * b;
        }
    }
}

/// Dense operator on the system factor. Bath operators are never materialized;
/// they act through the structured index maps in [`crate::linalg::ladder`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemOperator {
    matrix: DMatrix<C64>,
    hermitian: bool,
}

pub(crate) const HERMITICITY_TOL: f64 = 1e-12;

impl SystemOperator {
    /// Wrap a matrix that must be Hermitian to 1e-12.
    pub fn hermitian(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("operator must be square".into()));
        }
        let dev = max_adjoint_deviation(&matrix);
        if dev > HERMITICITY_TOL {
            return Err(Error::InvalidModel(format!(
                "operator marked Hermitian deviates from its adjoint by {dev:.3e}"
            )));
        }
        Ok(Self {
            matrix,
            hermitian: true,
        })
    }

    /// Wrap a matrix with no symmetry requirement (e.g. a lowering operator).
    pub fn general(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("operator must be square".into()));
        }
        Ok(Self {
            matrix,
            hermitian: false,
        })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> DMatrix<C64> {
        self.matrix.adjoint()
    }

    /// ⟨ket|M|ket⟩ for a normalized system ket.
    pub fn expectation(&self, ket: &DVector<C64>) -> C64 {
        ket.dotc(&(&self.matrix * ket))
    }
}

pub(crate) fn max_adjoint_deviation(m: &DMatrix<C64>) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `(M ⊗ 1_bath)|ψ⟩`.
pub fn apply_system(state: &StateVector, m: &DMatrix<C64>) -> StateVector {
    let bath_dim = state.basis.bath_dim();
    let sys_dim = state.basis.system_dim();
    debug_assert_eq!(m.nrows(), sys_dim);
    let mut out = StateVector::zero(state.basis, state.time);
    for i in 0..sys_dim {
        for j in 0..sys_dim {
            let c = m[(i, j)];
            if c == C64::ZERO {
                continue;
            }
            let src = &state.amplitudes[j * bath_dim..(j + 1) * bath_dim];
            let dst = &mut out.amplitudes[i * bath_dim..(i + 1) * bath_dim];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
    }
    out
}

/// Reduced system density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// Hermitian to 1e-10, trace within 1e-8 of 1, eigenvalues ≥ -1e-8.
    pub fn validate(&self) -> Result<()> {
        let dev = max_adjoint_deviation(&self.entries);
        if dev > 1e-10 {
            return Err(Error::InvalidModel(format!(
                "density matrix deviates from Hermitian by {dev:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::InvalidModel(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let min_eig = self
            .entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-8 {
            return Err(Error::InvalidModel(format!(
                "density matrix has eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(())
    }
}
