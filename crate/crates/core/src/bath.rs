//! Microscopic model: system spec, bath mode list, and the interaction-frame
//! Hamiltonian Ĥ_uni(t) = Ĥ_int + V̂_int(t) with
//! V̂_int(t) = i Σ_k g_k (L̂ e^{iΩ_k t} â_k† − L̂† e^{-iΩ_k t} â_k), ħ = 1.
//!
//! All dynamics lives in the interaction frame: the free system rotation at Ω
//! and the bare bath Hamiltonian are absorbed into the detunings Ω_k = ω_k − Ω
//! and into the phases of reported observables. The map back to the lab frame
//! is the phase e^{-iΩt} on L̂ and e^{-iω_k t} on each mode operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::basis::{BasisDescriptor, BathLayout};
use crate::linalg::ladder::{accumulate_ladder, Ladder};
use crate::linalg::state::{apply_system, StateVector, SystemOperator};
use crate::C64;

/// One bath oscillator: detuning Ω_k = ω_k − Ω and real coupling g_k ≥ 0
/// (coupling phases are absorbed into the mode operators).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub detuning: f64,
    pub coupling: f64,
}

/// Initial bath state; only the vacuum is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BathInitial {
    #[default]
    Vacuum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    modes: Vec<ModeSpec>,
    pub initial: BathInitial,
}

impl BathSpec {
    pub fn new(modes: Vec<ModeSpec>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidModel("bath needs at least one mode".into()));
        }
        for (k, m) in modes.iter().enumerate() {
            if !(m.coupling >= 0.0) || !m.coupling.is_finite() || !m.detuning.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "mode {k}: coupling must be finite and >= 0, detuning finite (got g = {}, omega = {})",
                    m.coupling, m.detuning
                )));
            }
        }
        Ok(Self {
            modes,
            initial: BathInitial::Vacuum,
        })
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_abs_detuning(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.detuning.abs())
            .fold(0.0, f64::max)
    }
}

/// System side of the model: interaction-frame Hamiltonian (time-independent),
/// lowering operator L̂, and initial system ket.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub dim: usize,
    pub h_int: SystemOperator,
    pub lowering: SystemOperator,
    pub initial: DVector<C64>,
}

impl SystemSpec {
    pub fn new(h_int: SystemOperator, lowering: SystemOperator, initial: DVector<C64>) -> Result<Self> {
        let dim = h_int.dim();
        if !h_int.is_hermitian() {
            return Err(Error::InvalidModel("h_int must be Hermitian".into()));
        }
        if lowering.dim() != dim || initial.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "system dims disagree: h_int {dim}, lowering {}, initial {}",
                lowering.dim(),
                initial.len()
            )));
        }
        let norm = initial.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "initial system state norm {norm} is not 1"
            )));
        }
        Ok(Self {
            dim,
            h_int,
            lowering,
            initial,
        })
    }

    /// Extra structure required by the single-excitation backend: L̂ must be
    /// strictly lowering (L̂² = 0) and Ĥ_int must preserve the excitation
    /// grading ([Ĥ_int, L̂†L̂] = 0), so one-quantum dynamics stays in sector.
    pub fn validate_single_excitation(&self) -> Result<()> {
        let l = self.lowering.matrix();
        let l2 = l * l;
        let l2_max = l2.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if l2_max > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "single-excitation backend needs a strictly lowering operator; |L²| = {l2_max:.3e}"
            )));
        }
        let grade = self.lowering.adjoint() * l;
        let h = self.h_int.matrix();
        let comm = h * &grade - &grade * h;
        let comm_max = comm.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if comm_max > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "single-excitation backend needs [h_int, L†L] = 0; deviation {comm_max:.3e}"
            )));
        }
        Ok(())
    }
}

/// Symmetric mode pairing for the quadrature unraveling: for every mode k
/// there is a mirror −k with Ω_{-k} = −Ω_k and g_{-k} = g_k. Pairs are listed
/// with the positive-detuning member first, sorted by |Ω| ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingMap {
    pairs: Vec<(usize, usize)>,
}

impl PairingMap {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

const PAIRING_TOL: f64 = 1e-9;

/// Match modes into symmetric (Ω, −Ω) pairs with equal couplings.
/// A zero-detuning mode is its own mirror and is rejected.
pub fn check_symmetric_pairs(bath: &BathSpec) -> Result<PairingMap> {
    let modes = bath.modes();
    let mut used = vec![false; modes.len()];
    let mut pairs = Vec::with_capacity(modes.len() / 2);
    for (k, mode) in modes.iter().enumerate() {
        if used[k] {
            continue;
        }
        if mode.detuning.abs() <= PAIRING_TOL {
            return Err(Error::UnpairableBath(format!(
                "mode {k} has detuning {} (a zero-detuning mode is its own mirror)",
                mode.detuning
            )));
        }
        let mut partner = None;
        for (j, cand) in modes.iter().enumerate().skip(k + 1) {
            if used[j] {
                continue;
            }
            if (cand.detuning + mode.detuning).abs() <= PAIRING_TOL
                && (cand.coupling - mode.coupling).abs() <= PAIRING_TOL
            {
                partner = Some(j);
                break;
            }
        }
        let Some(j) = partner else {
            return Err(Error::UnpairableBath(format!(
                "mode {k} (detuning {}, coupling {}) has no mirror with detuning {} at tolerance {PAIRING_TOL:e}",
                mode.detuning, mode.coupling, -mode.detuning
            )));
        };
        used[k] = true;
        used[j] = true;
        if mode.detuning > 0.0 {
            pairs.push((k, j));
        } else {
            pairs.push((j, k));
        }
    }
    pairs.sort_by(|a, b| {
        modes[a.0]
            .detuning
            .abs()
            .partial_cmp(&modes[b.0].detuning.abs())
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    Ok(PairingMap { pairs })
}

/// The assembled interaction-frame universe Hamiltonian, applied as a
/// structured action on state vectors.
pub struct UniverseHamiltonian<'a> {
    pub sys: &'a SystemSpec,
    pub bath: &'a BathSpec,
    pub basis: BasisDescriptor,
}

impl<'a> UniverseHamiltonian<'a> {
    pub fn new(sys: &'a SystemSpec, bath: &'a BathSpec, basis: BasisDescriptor) -> Result<Self> {
        if basis.system_dim() != sys.dim {
            return Err(Error::DimensionMismatch(format!(
                "basis system_dim {} != system dim {}",
                basis.system_dim(),
                sys.dim
            )));
        }
        if basis.modes() != bath.len() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} modes, bath has {}",
                basis.modes(),
                bath.len()
            )));
        }
        if let BathLayout::SingleExcitation { .. } = basis.layout() {
            sys.validate_single_excitation()?;
        }
        Ok(Self { sys, bath, basis })
    }

    /// V̂_int(t)|Ψ⟩. Returns the result and the truncation loss of this
    /// application.
    pub fn apply_v_int(&self, t: f64, state: &StateVector) -> Result<(StateVector, f64)> {
        let mut out = StateVector::zero(self.basis, state.time);
        let loss = self.accumulate_v_int(t, state, &mut out)?;
        Ok((out, loss))
    }

    /// Ĥ_uni(t)|Ψ⟩ = (Ĥ_int ⊗ 1)|Ψ⟩ + V̂_int(t)|Ψ⟩.
    pub fn apply_h_uni(&self, t: f64, state: &StateVector) -> Result<(StateVector, f64)> {
        let mut out = apply_system(state, self.sys.h_int.matrix());
        let loss = self.accumulate_v_int(t, state, &mut out)?;
        Ok((out, loss))
    }

    fn accumulate_v_int(&self, t: f64, state: &StateVector, out: &mut StateVector) -> Result<f64> {
        // i Σ_k g_k (e^{iΩ_k t} L̂ â_k† − e^{-iΩ_k t} L̂† â_k), applied as
        // system op then ladder so each system application is shared.
        let lowered = apply_system(state, self.sys.lowering.matrix());
        let raised = apply_system(state, &self.sys.lowering.adjoint());
        let mut loss = 0.0;
        for (k, mode) in self.bath.modes().iter().enumerate() {
            if mode.coupling == 0.0 {
                continue;
            }
            let phase = C64::from_polar(mode.coupling, mode.detuning * t);
            let i = C64::new(0.0, 1.0);
            loss += accumulate_ladder(
                &mut out.amplitudes,
                i * phase,
                &lowered.amplitudes,
                self.basis,
                k,
                Ladder::Raise,
            )?;
            loss += accumulate_ladder(
                &mut out.amplitudes,
                -i * phase.conj(),
                &raised.amplitudes,
                self.basis,
                k,
                Ladder::Lower,
            )?;
        }
        Ok(loss)
    }

    /// Dense matrix of Ĥ_uni(t), built column-by-column. Test oracle only;
    /// guarded to small dimensions.
    pub fn dense_matrix(&self, t: f64) -> Result<DMatrix<C64>> {
        let dim = self.basis.total_dim();
        if dim > 4096 {
            return Err(Error::BasisTooLarge(format!(
                "dense assembly requested at dimension {dim}"
            )));
        }
        let mut m = DMatrix::from_element(dim, dim, C64::ZERO);
        for col in 0..dim {
            let mut e = StateVector::zero(self.basis, 0.0);
            e.amplitudes[col] = C64::new(1.0, 0.0);
            let (he, _) = self.apply_h_uni(t, &e)?;
            for row in 0..dim {
                m[(row, col)] = he.amplitudes[row];
            }
        }
        Ok(m)
    }
}

/// Two-level lowering operator σ₋ in the {|e⟩, |g⟩} ordering used by the
/// bundled models (index 0 excited, index 1 ground).
pub fn sigma_minus() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::ZERO,
            C64::ZERO,
            C64::new(1.0, 0.0),
            C64::ZERO,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::basis::BasisDescriptor;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_level(h: DMatrix<C64>, initial: [C64; 2]) -> SystemSpec {
        SystemSpec::new(
            SystemOperator::hermitian(h).unwrap(),
            SystemOperator::general(sigma_minus()).unwrap(),
            DVector::from_row_slice(&initial),
        )
        .unwrap()
    }

    fn random_state(basis: BasisDescriptor, seed: u64) -> StateVector {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<C64> = (0..basis.total_dim())
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector::new(basis, amps, 0.0).unwrap()
    }

    #[test]
    fn pairing_simple() {
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 1.0, coupling: 0.3 },
            ModeSpec { detuning: -1.0, coupling: 0.3 },
        ])
        .unwrap();
        let map = check_symmetric_pairs(&bath).unwrap();
        assert_eq!(map.pairs(), &[(0, 1)]);
    }

    #[test]
    fn pairing_mismatch_rejected() {
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 1.0, coupling: 0.3 },
            ModeSpec { detuning: -1.0001, coupling: 0.3 },
        ])
        .unwrap();
        assert!(matches!(
            check_symmetric_pairs(&bath),
            Err(Error::UnpairableBath(_))
        ));
    }

    #[test]
    fn pairing_zero_detuning_rejected() {
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 0.0, coupling: 0.3 },
            ModeSpec { detuning: 0.0, coupling: 0.3 },
        ])
        .unwrap();
        assert!(matches!(
            check_symmetric_pairs(&bath),
            Err(Error::UnpairableBath(_))
        ));
    }

    #[test]
    fn pairing_sorted_by_abs_detuning() {
        // Exhaustive matching oracle for this 4-mode case: the only valid
        // pairing is {(+2,-2), (+1,-1)}; output sorted by |Ω| puts (+1,-1) first.
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 2.0, coupling: 0.3 },
            ModeSpec { detuning: -2.0, coupling: 0.3 },
            ModeSpec { detuning: 1.0, coupling: 0.3 },
            ModeSpec { detuning: -1.0, coupling: 0.3 },
        ])
        .unwrap();
        let map = check_symmetric_pairs(&bath).unwrap();
        assert_eq!(map.pairs(), &[(2, 3), (0, 1)]);
    }

    #[test]
    fn zero_coupling_gives_zero_action() {
        let basis = BasisDescriptor::dense_fock(2, 2, 2).unwrap();
        let sys = two_level(DMatrix::zeros(2, 2), [c(1.0, 0.0), c(0.0, 0.0)]);
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 1.0, coupling: 0.0 },
            ModeSpec { detuning: -1.0, coupling: 0.0 },
        ])
        .unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let s = random_state(basis, 3);
        let (hs, loss) = h.apply_h_uni(0.7, &s).unwrap();
        assert!(hs.amplitudes.iter().all(|a| *a == C64::ZERO));
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn v_int_matrix_elements_at_t0() {
        // One mode, g = 1, t = 0: V̂ = i(L̂â† − L̂†â); ⟨g,1|V̂|e,0⟩ = i.
        let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
        let sys = two_level(DMatrix::zeros(2, 2), [c(1.0, 0.0), c(0.0, 0.0)]);
        let bath = BathSpec::new(vec![ModeSpec { detuning: 0.0, coupling: 1.0 }]).unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let m = h.dense_matrix(0.0).unwrap();
        // |e,0⟩ is index 0, |g,1⟩ is index 3+1 = 4 (bath_dim 3).
        assert_abs_diff_eq!(m[(4, 0)].im, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 4)].im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn h_uni_hermitian_on_random_states() {
        // Adjoint oracle via dense matrix on dim ≤ 32.
        let basis = BasisDescriptor::dense_fock(2, 2, 3).unwrap();
        let h_sys = DMatrix::from_row_slice(2, 2, &[c(0.4, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(-0.4, 0.0)]);
        let sys = two_level(h_sys, [c(1.0, 0.0), c(0.0, 0.0)]);
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 1.3, coupling: 0.5 },
            ModeSpec { detuning: -0.8, coupling: 0.7 },
        ])
        .unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        for (seed, t) in [(1u64, 0.0), (2, 0.37), (3, 2.9)] {
            let m = h.dense_matrix(t).unwrap();
            let dev = (&m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(dev < 1e-12, "dense deviation {dev}");
            let phi = random_state(basis, seed);
            let psi = random_state(basis, seed + 50);
            let (h_psi, _) = h.apply_h_uni(t, &psi).unwrap();
            let (h_phi, _) = h.apply_h_uni(t, &phi).unwrap();
            let lhs = phi.inner(&h_psi);
            let rhs = psi.inner(&h_phi).conj();
            assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-12);
            assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn action_matches_dense_assembly() {
        let basis = BasisDescriptor::dense_fock(2, 2, 3).unwrap();
        let h_sys = DMatrix::from_row_slice(2, 2, &[c(0.2, 0.0), c(0.0, -0.3), c(0.0, 0.3), c(0.0, 0.0)]);
        let sys = two_level(h_sys, [c(1.0, 0.0), c(0.0, 0.0)]);
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 2.0, coupling: 0.4 },
            ModeSpec { detuning: -2.0, coupling: 0.4 },
        ])
        .unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let t = 1.23;
        let m = h.dense_matrix(t).unwrap();
        let s = random_state(basis, 11);
        let (fast, _) = h.apply_h_uni(t, &s).unwrap();
        let dense = &m * DVector::from_column_slice(&s.amplitudes);
        for (a, b) in fast.amplitudes.iter().zip(dense.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-13);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn excitation_number_conserved_by_commutator() {
        // [Ĥ, N̂_tot] = 0 on dense matrices for strictly-lowering L̂: grade the
        // basis by system excitation (index 0 = excited) plus bath quanta.
        let basis = BasisDescriptor::dense_fock(2, 2, 2).unwrap();
        let sys = two_level(DMatrix::zeros(2, 2), [c(1.0, 0.0), c(0.0, 0.0)]);
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 1.0, coupling: 0.6 },
            ModeSpec { detuning: -1.0, coupling: 0.6 },
        ])
        .unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let m = h.dense_matrix(0.9).unwrap();
        let dim = basis.total_dim();
        let mut n_tot = DMatrix::from_element(dim, dim, C64::ZERO);
        for idx in 0..dim {
            let sys_exc = if idx / basis.bath_dim() == 0 { 1 } else { 0 };
            let b = idx % basis.bath_dim();
            let quanta: usize = (0..2).map(|k| basis.fock_level(b, k)).sum();
            n_tot[(idx, idx)] = C64::new((sys_exc + quanta) as f64, 0.0);
        }
        let comm = &m * &n_tot - &n_tot * &m;
        let dev = comm.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-12, "commutator deviation {dev}");
    }

    #[test]
    fn v_int_periodic_for_commensurate_detunings() {
        let basis = BasisDescriptor::dense_fock(2, 2, 2).unwrap();
        let sys = two_level(DMatrix::zeros(2, 2), [c(1.0, 0.0), c(0.0, 0.0)]);
        let bath = BathSpec::new(vec![
            ModeSpec { detuning: 1.5, coupling: 0.4 },
            ModeSpec { detuning: -3.0, coupling: 0.2 },
        ])
        .unwrap();
        let h = UniverseHamiltonian::new(&sys, &bath, basis).unwrap();
        let period = 2.0 * std::f64::consts::PI / 1.5;
        let t = 0.613;
        let m1 = h.dense_matrix(t).unwrap();
        let m2 = h.dense_matrix(t + period).unwrap();
        let dev = (&m1 - &m2).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(dev < 1e-12, "period deviation {dev}");
    }

    #[test]
    fn single_excitation_requires_strict_lowering() {
        let sx = DMatrix::from_row_slice(2, 2, &[C64::ZERO, c(1.0, 0.0), c(1.0, 0.0), C64::ZERO]);
        let sys = SystemSpec::new(
            SystemOperator::hermitian(DMatrix::zeros(2, 2)).unwrap(),
            SystemOperator::general(sx).unwrap(),
            DVector::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
        )
        .unwrap();
        assert!(sys.validate_single_excitation().is_err());
        let bath = BathSpec::new(vec![ModeSpec { detuning: 0.0, coupling: 1.0 }]).unwrap();
        let basis = BasisDescriptor::single_excitation(2, 1).unwrap();
        assert!(UniverseHamiltonian::new(&sys, &bath, basis).is_err());
    }
}
