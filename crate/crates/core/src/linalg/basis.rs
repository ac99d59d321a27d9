//! Tensor-product basis descriptors.
//!
//! A universe state is indexed as `sys * bath_dim + bath`, where the bath
//! label depends on the layout:
//!
//! * `DenseFock`: `bath` is a base-(n_max+1) integer whose k-th digit is the
//!   Fock level of mode k (mode 0 is the fastest-varying digit).
//! * `SingleExcitation`: `bath = 0` is the vacuum and `bath = 1 + k` holds a
//!   single quantum in mode k; at most one bath quantum total.

use crate::error::{Error, Result};

/// Layout of the bath factor of the tensor basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BathLayout {
    /// Every mode carries Fock levels `0..=n_max`.
    DenseFock { n_max: usize, modes: usize },
    /// Vacuum plus one-quantum states, one per mode.
    SingleExcitation { modes: usize },
}

/// Dimensions and index layout of a system ⊗ bath basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisDescriptor {
    system_dim: usize,
    layout: BathLayout,
}

impl BasisDescriptor {
    pub fn dense_fock(system_dim: usize, modes: usize, n_max: usize) -> Result<Self> {
        if system_dim == 0 {
            return Err(Error::InvalidModel("system_dim must be >= 1".into()));
        }
        if modes == 0 {
            return Err(Error::InvalidModel("mode count must be >= 1".into()));
        }
        if n_max == 0 {
            return Err(Error::InvalidModel("n_max must be >= 1".into()));
        }
        let levels = n_max + 1;
        let mut bath_dim: usize = 1;
        for _ in 0..modes {
            bath_dim = bath_dim
                .checked_mul(levels)
                .ok_or_else(|| Self::too_large(system_dim, modes, levels))?;
        }
        system_dim
            .checked_mul(bath_dim)
            .ok_or_else(|| Self::too_large(system_dim, modes, levels))?;
        Ok(Self {
            system_dim,
            layout: BathLayout::DenseFock { n_max, modes },
        })
    }

    pub fn single_excitation(system_dim: usize, modes: usize) -> Result<Self> {
        if system_dim == 0 {
            return Err(Error::InvalidModel("system_dim must be >= 1".into()));
        }
        if modes == 0 {
            return Err(Error::InvalidModel("mode count must be >= 1".into()));
        }
        system_dim
            .checked_mul(modes + 1)
            .ok_or_else(|| Self::too_large(system_dim, modes, 2))?;
        Ok(Self {
            system_dim,
            layout: BathLayout::SingleExcitation { modes },
        })
    }

    fn too_large(system_dim: usize, modes: usize, levels: usize) -> Error {
        Error::BasisTooLarge(format!(
            "system_dim {system_dim}, {modes} modes, {levels} levels per mode"
        ))
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn modes(&self) -> usize {
        match self.layout {
            BathLayout::DenseFock { modes, .. } => modes,
            BathLayout::SingleExcitation { modes } => modes,
        }
    }

    pub fn layout(&self) -> BathLayout {
        self.layout
    }

    pub fn bath_dim(&self) -> usize {
        match self.layout {
            BathLayout::DenseFock { n_max, modes } => (n_max + 1).pow(modes as u32),
            BathLayout::SingleExcitation { modes } => modes + 1,
        }
    }

    pub fn total_dim(&self) -> usize {
        self.system_dim * self.bath_dim()
    }

    /// Per-mode truncation, if the layout has one.
    pub fn n_max(&self) -> Option<usize> {
        match self.layout {
            BathLayout::DenseFock { n_max, .. } => Some(n_max),
            BathLayout::SingleExcitation { .. } => None,
        }
    }

    /// Index stride of mode `mode` in a `DenseFock` bath label.
    pub(crate) fn fock_stride(&self, mode: usize) -> usize {
        match self.layout {
            BathLayout::DenseFock { n_max, .. } => (n_max + 1).pow(mode as u32),
            BathLayout::SingleExcitation { .. } => unreachable!("fock_stride on single-excitation"),
        }
    }

    /// Fock level of `mode` inside a `DenseFock` bath label.
    pub fn fock_level(&self, bath_index: usize, mode: usize) -> usize {
        match self.layout {
            BathLayout::DenseFock { n_max, .. } => {
                (bath_index / (n_max + 1).pow(mode as u32)) % (n_max + 1)
            }
            BathLayout::SingleExcitation { .. } => {
                if bath_index == mode + 1 {
                    1
                } else {
                    0
                }
            }
        }
    }
}
