//! Structured ladder-operator actions and the bath partial trace.
//!
//! Bath operators act as index maps over the tensor basis; they are never
//! materialized at full dimension.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::basis::{BasisDescriptor, BathLayout};
use crate::linalg::state::{DensityMatrix, StateVector};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Lower,
    Raise,
}

/// Apply â_k or â_k† to `state`. Returns the result and the squared norm of
/// amplitude dropped past the truncation edge (always 0 for `Lower`).
pub fn apply_bath_ladder(
    state: &StateVector,
    mode: usize,
    kind: Ladder,
) -> Result<(StateVector, f64)> {
    let mut out = StateVector::zero(state.basis, state.time);
    let loss = accumulate_ladder(
        &mut out.amplitudes,
        C64::new(1.0, 0.0),
        &state.amplitudes,
        state.basis,
        mode,
        kind,
    )?;
    Ok((out, loss))
}

/// `out += coeff · ladder(amps)`; returns the |coeff|²-weighted truncation loss.
pub(crate) fn accumulate_ladder(
    out: &mut [C64],
    coeff: C64,
    amps: &[C64],
    basis: BasisDescriptor,
    mode: usize,
    kind: Ladder,
) -> Result<f64> {
    if mode >= basis.modes() {
        return Err(Error::DimensionMismatch(format!(
            "mode {mode} out of range for {} modes",
            basis.modes()
        )));
    }
    match basis.layout() {
        BathLayout::DenseFock { n_max, .. } => {
            Ok(dense_ladder(out, coeff, amps, basis, mode, n_max, kind))
        }
        BathLayout::SingleExcitation { modes } => {
            single_excitation_ladder(out, coeff, amps, basis, mode, modes, kind)
        }
    }
}

fn dense_ladder(
    out: &mut [C64],
    coeff: C64,
    amps: &[C64],
    basis: BasisDescriptor,
    mode: usize,
    n_max: usize,
    kind: Ladder,
) -> f64 {
    let stride = basis.fock_stride(mode);
    let levels = n_max + 1;
    let block = stride * levels;
    let total = basis.total_dim();
    let mut loss = 0.0;
    // Iterate over contiguous runs with a fixed Fock level of `mode`.
    let mut base = 0;
    while base < total {
        for level in 0..levels {
            let seg = base + level * stride;
            match kind {
                Ladder::Lower => {
                    if level > 0 {
                        let f = coeff * (level as f64).sqrt();
                        for off in 0..stride {
                            out[seg - stride + off] += f * amps[seg + off];
                        }
                    }
                }
                Ladder::Raise => {
                    if level < n_max {
                        let f = coeff * ((level + 1) as f64).sqrt();
                        for off in 0..stride {
                            out[seg + stride + off] += f * amps[seg + off];
                        }
                    } else {
                        let w = coeff.norm_sqr();
                        for off in 0..stride {
                            loss += w * amps[seg + off].norm_sqr();
                        }
                    }
                }
            }
        }
        base += block;
    }
    loss
}

fn single_excitation_ladder(
    out: &mut [C64],
    coeff: C64,
    amps: &[C64],
    basis: BasisDescriptor,
    mode: usize,
    modes: usize,
    kind: Ladder,
) -> Result<f64> {
    let bath_dim = modes + 1;
    for sys in 0..basis.system_dim() {
        let row = sys * bath_dim;
        match kind {
            Ladder::Lower => {
                out[row] += coeff * amps[row + 1 + mode];
            }
            Ladder::Raise => {
                // Raising any occupied component leaves the one-quantum sector.
                for occ in 0..modes {
                    if amps[row + 1 + occ] != C64::ZERO {
                        return Err(Error::SectorViolation { mode });
                    }
                }
                out[row + 1 + mode] += coeff * amps[row];
            }
        }
    }
    Ok(0.0)
}

/// ρ[i][j] = Σ_b ⟨i,b|Ψ⟩⟨Ψ|j,b⟩. Hermitian by construction; trace equals ‖Ψ‖².
pub fn partial_trace_bath(state: &StateVector) -> DensityMatrix {
    let sys_dim = state.basis.system_dim();
    let bath_dim = state.basis.bath_dim();
    let mut rho = DMatrix::from_element(sys_dim, sys_dim, C64::ZERO);
    for i in 0..sys_dim {
        let bi = &state.amplitudes[i * bath_dim..(i + 1) * bath_dim];
        for j in 0..=i {
            let bj = &state.amplitudes[j * bath_dim..(j + 1) * bath_dim];
            let mut acc = C64::ZERO;
            for (a, b) in bi.iter().zip(bj) {
                acc += a * b.conj();
            }
            rho[(i, j)] = acc;
            if i != j {
                rho[(j, i)] = acc.conj();
            }
        }
    }
    DensityMatrix { entries: rho }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
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
    fn lower_annihilates_vacuum() {
        let basis = BasisDescriptor::dense_fock(1, 1, 3).unwrap();
        let s = StateVector::from_system_and_vacuum(basis, &[c(1.0, 0.0)], 0.0).unwrap();
        let (out, loss) = apply_bath_ladder(&s, 0, Ladder::Lower).unwrap();
        assert!(out.amplitudes.iter().all(|a| *a == C64::ZERO));
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn raise_matrix_element() {
        let basis = BasisDescriptor::dense_fock(1, 1, 3).unwrap();
        let mut s = StateVector::zero(basis, 0.0);
        s.amplitudes[1] = c(1.0, 0.0); // |n=1⟩
        let (out, loss) = apply_bath_ladder(&s, 0, Ladder::Raise).unwrap();
        assert_abs_diff_eq!(out.amplitudes[2].re, 2.0f64.sqrt(), epsilon = 1e-15);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn raise_at_edge_is_dropped_and_counted() {
        let basis = BasisDescriptor::dense_fock(1, 1, 3).unwrap();
        let mut s = StateVector::zero(basis, 0.0);
        s.amplitudes[3] = c(0.6, 0.0); // |n = n_max⟩
        let (out, loss) = apply_bath_ladder(&s, 0, Ladder::Raise).unwrap();
        assert!(out.amplitudes.iter().all(|a| *a == C64::ZERO));
        assert_abs_diff_eq!(loss, 0.36, epsilon = 1e-15);
    }

    #[test]
    fn single_excitation_sector_violation_names_mode() {
        let basis = BasisDescriptor::single_excitation(2, 3).unwrap();
        let mut s = StateVector::zero(basis, 0.0);
        s.amplitudes[2] = c(1.0, 0.0); // |sys=0, 1_1⟩
        let err = apply_bath_ladder(&s, 2, Ladder::Raise).unwrap_err();
        assert_eq!(err, Error::SectorViolation { mode: 2 });
        // Lowering mode 1 brings it back to vacuum.
        let (out, _) = apply_bath_ladder(&s, 1, Ladder::Lower).unwrap();
        assert_eq!(out.amplitudes[0], c(1.0, 0.0));
    }

    #[test]
    fn trace_of_product_state_is_projector() {
        let basis = BasisDescriptor::dense_fock(2, 2, 2).unwrap();
        let sys = [c(0.6, 0.0), c(0.0, 0.8)];
        let s = StateVector::from_system_and_vacuum(basis, &sys, 0.0).unwrap();
        let rho = partial_trace_bath(&s);
        for i in 0..2 {
            for j in 0..2 {
                let expect = sys[i] * sys[j].conj();
                assert_abs_diff_eq!(rho.entries[(i, j)].re, expect.re, epsilon = 1e-15);
                assert_abs_diff_eq!(rho.entries[(i, j)].im, expect.im, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn bell_pair_traces_to_maximally_mixed() {
        let basis = BasisDescriptor::dense_fock(2, 1, 1).unwrap();
        let mut s = StateVector::zero(basis, 0.0);
        let r = 0.5f64.sqrt();
        s.amplitudes[0] = c(r, 0.0); // |e, 0⟩ (system index 0, vacuum)
        s.amplitudes[3] = c(r, 0.0); // |g, 1⟩
        let rho = partial_trace_bath(&s);
        assert_abs_diff_eq!(rho.entries[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entries[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.entries[(0, 1)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn trace_equals_norm_on_random_states() {
        // Direct-summation oracle on dim ≤ 32.
        let basis = BasisDescriptor::dense_fock(2, 2, 3).unwrap();
        for seed in 0..5 {
            let s = random_state(basis, seed);
            let rho = partial_trace_bath(&s);
            assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rho.trace().im, 0.0, epsilon = 1e-12);
            rho.validate().unwrap();
        }
    }

    #[test]
    fn ladder_adjointness_random_states() {
        // ⟨Φ|â_k|Ψ⟩ = conj(⟨Ψ|â_k†|Φ⟩), states kept below the truncation edge.
        let basis = BasisDescriptor::dense_fock(2, 2, 4).unwrap();
        for seed in 0..4 {
            let mut phi = random_state(basis, 100 + seed);
            let mut psi = random_state(basis, 200 + seed);
            // Zero the top level of each mode so raising never truncates.
            for state in [&mut phi, &mut psi] {
                for idx in 0..basis.total_dim() {
                    let b = idx % basis.bath_dim();
                    if (0..2).any(|m| basis.fock_level(b, m) == 4) {
                        state.amplitudes[idx] = C64::ZERO;
                    }
                }
            }
            for mode in 0..2 {
                let (a_psi, _) = apply_bath_ladder(&psi, mode, Ladder::Lower).unwrap();
                let (adag_phi, loss) = apply_bath_ladder(&phi, mode, Ladder::Raise).unwrap();
                assert_eq!(loss, 0.0);
                let lhs = phi.inner(&a_psi);
                let rhs = psi.inner(&adag_phi).conj();
                assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-12);
                assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_mode_order_invariance() {
        // Permuting the two modes' labels leaves ρ unchanged.
        let basis = BasisDescriptor::dense_fock(2, 2, 2).unwrap();
        let s = random_state(basis, 7);
        let mut swapped = StateVector::zero(basis, 0.0);
        let f = 3;
        for idx in 0..basis.total_dim() {
            let sys = idx / basis.bath_dim();
            let b = idx % basis.bath_dim();
            let (d0, d1) = (b % f, b / f);
            swapped.amplitudes[sys * basis.bath_dim() + d1 + f * d0] = s.amplitudes[idx];
        }
        let r1 = partial_trace_bath(&s);
        let r2 = partial_trace_bath(&swapped);
        let diff = (&r1.entries - &r2.entries)
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    proptest! {
        #[test]
        fn partial_trace_linear_in_projector(seed in 0u64..1000) {
            // tr_bath is linear in |Ψ⟩⟨Ψ|: scaling Ψ by c scales ρ by |c|².
            let basis = BasisDescriptor::dense_fock(2, 1, 2).unwrap();
            let mut s = random_state(basis, seed);
            let r1 = partial_trace_bath(&s);
            s.scale(C64::new(0.5, 0.5));
            let r2 = partial_trace_bath(&s);
            let diff = (&r2.entries - &r1.entries * C64::new(0.5, 0.0))
                .iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-12);
        }
    }
}
