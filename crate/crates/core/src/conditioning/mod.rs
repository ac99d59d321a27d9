//! Conditioned system states ⟨{q_k}|Ψ(t)⟩/√N for the three hidden-variable
//! bases: multimode position eigenstates, EPR quadrature eigenstates per
//! symmetric mode pair, and coherent states (Husimi weights).
//!
//! The bras are Dirac-normalized, so the weight N is a probability density
//! over the hidden values, not a probability. Coherent conditioning carries
//! the extra 1/π per mode of the Husimi decomposition; the auxiliary-mode
//! enlargement behind it never materializes because the auxiliary modes start
//! in vacuum and the overlap collapses to the coherent-state kernel.

mod pair_kernel;

pub(crate) use pair_kernel::{KernelScratch, PairKernel};
#[cfg(test)]
pub(crate) use pair_kernel::epr_overlap_integral;

use nalgebra::DVector;

use crate::bath::PairingMap;
use crate::error::{Error, Result};
use crate::linalg::basis::BathLayout;
use crate::linalg::fock::fock_position_table;
use crate::linalg::state::StateVector;
use crate::C64;

/// Weight floor below which the hidden values are treated as sitting on a
/// wavefunction node.
pub const NODE_FLOOR: f64 = 1e-300;

/// Bath beable values for one trajectory at one instant.
#[derive(Debug, Clone, PartialEq)]
pub enum HiddenVars {
    /// Oscillator positions x_k, one per mode.
    Position(Vec<f64>),
    /// EPR quadratures (X⁺, Y⁻), one pair of values per symmetric mode pair.
    Quadrature { xplus: Vec<f64>, yminus: Vec<f64> },
    /// Coherent amplitudes a_k, one per mode.
    Coherent(Vec<C64>),
}

impl HiddenVars {
    /// Number of real coordinates.
    pub fn dim(&self) -> usize {
        match self {
            HiddenVars::Position(xs) => xs.len(),
            HiddenVars::Quadrature { xplus, .. } => 2 * xplus.len(),
            HiddenVars::Coherent(a) => 2 * a.len(),
        }
    }

    /// Canonical flat coordinate order: positions by mode; (X⁺, Y⁻) by pair;
    /// (Re a, Im a) by mode.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.clear();
        match self {
            HiddenVars::Position(xs) => out.extend_from_slice(xs),
            HiddenVars::Quadrature { xplus, yminus } => {
                for (x, y) in xplus.iter().zip(yminus) {
                    out.push(*x);
                    out.push(*y);
                }
            }
            HiddenVars::Coherent(a) => {
                for v in a {
                    out.push(v.re);
                    out.push(v.im);
                }
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }

    /// Rebuild from the canonical flat layout, preserving the variant of
    /// `self` as the shape witness.
    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        match self {
            HiddenVars::Position(xs) => xs.copy_from_slice(flat),
            HiddenVars::Quadrature { xplus, yminus } => {
                for (j, chunk) in flat.chunks_exact(2).enumerate() {
                    xplus[j] = chunk[0];
                    yminus[j] = chunk[1];
                }
            }
            HiddenVars::Coherent(a) => {
                for (j, chunk) in flat.chunks_exact(2).enumerate() {
                    a[j] = C64::new(chunk[0], chunk[1]);
                }
            }
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            HiddenVars::Position(xs) => xs.iter().all(|x| x.is_finite()),
            HiddenVars::Quadrature { xplus, yminus } => {
                xplus.iter().chain(yminus).all(|x| x.is_finite())
            }
            HiddenVars::Coherent(a) => a.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        }
    }
}

/// Normalized system ket plus its weight N, a density over hidden values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedState {
    pub ket: DVector<C64>,
    pub weight: f64,
}

/// ket ∝ Σ_b Π_k ψ_{b_k}(x_k) ⟨i,b|Ψ⟩, weight N = ‖unnormalized‖².
pub fn condition_position(state: &StateVector, xs: &[f64]) -> Result<ConditionedState> {
    condition(state, &HiddenVars::Position(xs.to_vec()), None)
}

/// EPR-basis conditioning; the bath must have passed
/// [`crate::bath::check_symmetric_pairs`].
pub fn condition_quadrature(
    state: &StateVector,
    xplus: &[f64],
    yminus: &[f64],
    pairing: &PairingMap,
) -> Result<ConditionedState> {
    condition(
        state,
        &HiddenVars::Quadrature {
            xplus: xplus.to_vec(),
            yminus: yminus.to_vec(),
        },
        Some(pairing),
    )
}

/// Husimi conditioning: weight carries the 1/π per mode so ∫ N d²a = 1.
pub fn condition_coherent(state: &StateVector, amps: &[C64]) -> Result<ConditionedState> {
    condition(state, &HiddenVars::Coherent(amps.to_vec()), None)
}

/// Dispatch over the hidden-variable variant.
pub fn condition(
    state: &StateVector,
    hv: &HiddenVars,
    pairing: Option<&PairingMap>,
) -> Result<ConditionedState> {
    let mut bufs = OverlapBuffers::new();
    let weight = overlap_into(state, hv, pairing, &mut bufs)?;
    if weight < NODE_FLOOR {
        return Err(Error::NodeEncountered { t: state.time });
    }
    let inv = 1.0 / bufs.u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let ket = DVector::from_iterator(bufs.u.len(), bufs.u.iter().map(|c| c * inv));
    Ok(ConditionedState { ket, weight })
}

/// Reusable scratch for the overlap contraction. The hot trajectory loop keeps
/// one instance alive so no per-evaluation allocation occurs.
pub(crate) struct OverlapBuffers {
    /// Unnormalized ⟨{q}|Ψ⟩ per system index (output).
    pub(crate) u: Vec<C64>,
    kernel: Option<PairKernel>,
    scratch: KernelScratch,
    tabs_real: Vec<Vec<f64>>,
    tabs_cx: Vec<Vec<C64>>,
    kernels: Vec<Vec<C64>>,
    mode_factors: Vec<C64>,
    prefix: Vec<C64>,
    suffix: Vec<C64>,
}

impl OverlapBuffers {
    pub(crate) fn new() -> Self {
        Self {
            u: Vec::new(),
            kernel: None,
            scratch: KernelScratch::default(),
            tabs_real: Vec::new(),
            tabs_cx: Vec::new(),
            kernels: Vec::new(),
            mode_factors: Vec::new(),
            prefix: Vec::new(),
            suffix: Vec::new(),
        }
    }

}

/// Compute the unnormalized overlap into `bufs.u`; returns the weight N
/// (including the Husimi 1/π^K factor for the coherent variant).
pub(crate) fn overlap_into(
    state: &StateVector,
    hv: &HiddenVars,
    pairing: Option<&PairingMap>,
    bufs: &mut OverlapBuffers,
) -> Result<f64> {
    if !hv.all_finite() {
        return Err(Error::InvalidModel("hidden values must be finite".into()));
    }
    let basis = state.basis;
    let modes = basis.modes();
    match hv {
        HiddenVars::Position(xs) => {
            if xs.len() != modes {
                return Err(Error::DimensionMismatch(format!(
                    "{} positions for {} modes",
                    xs.len(),
                    modes
                )));
            }
        }
        HiddenVars::Coherent(a) => {
            if a.len() != modes {
                return Err(Error::DimensionMismatch(format!(
                    "{} amplitudes for {} modes",
                    a.len(),
                    modes
                )));
            }
        }
        HiddenVars::Quadrature { xplus, yminus } => {
            let pairing = pairing.ok_or_else(|| {
                Error::UnpairableBath("quadrature conditioning needs a pairing map".into())
            })?;
            if xplus.len() != pairing.len() || yminus.len() != pairing.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{}/{} quadrature values for {} pairs",
                    xplus.len(),
                    yminus.len(),
                    pairing.len()
                )));
            }
            if 2 * pairing.len() != modes {
                return Err(Error::UnpairableBath(format!(
                    "pairing covers {} modes, basis has {}",
                    2 * pairing.len(),
                    modes
                )));
            }
        }
    }

    match basis.layout() {
        BathLayout::DenseFock { n_max, .. } => dense_overlap(state, hv, pairing, n_max, bufs),
        BathLayout::SingleExcitation { .. } => single_excitation_overlap(state, hv, pairing, bufs),
    }
}

fn dense_overlap(
    state: &StateVector,
    hv: &HiddenVars,
    pairing: Option<&PairingMap>,
    n_max: usize,
    bufs: &mut OverlapBuffers,
) -> Result<f64> {
    let basis = state.basis;
    let modes = basis.modes();
    let levels = n_max + 1;
    let sys_dim = basis.system_dim();
    let bath_dim = basis.bath_dim();

    bufs.u.clear();
    bufs.u.resize(sys_dim, C64::ZERO);

    let mut husimi_factor = 1.0;
    match hv {
        HiddenVars::Position(xs) => {
            ensure_tables(&mut bufs.tabs_real, modes);
            for (k, x) in xs.iter().enumerate() {
                fock_position_table(n_max, *x, &mut bufs.tabs_real[k]);
            }
            for b in 0..bath_dim {
                let mut f = 1.0;
                let mut rem = b;
                for tab in bufs.tabs_real.iter().take(modes) {
                    f *= tab[rem % levels];
                    rem /= levels;
                }
                if f != 0.0 {
                    for (i, ui) in bufs.u.iter_mut().enumerate() {
                        *ui += f * state.amplitudes[i * bath_dim + b];
                    }
                }
            }
        }
        HiddenVars::Coherent(amps) => {
            ensure_tables(&mut bufs.tabs_cx, modes);
            for (k, a) in amps.iter().enumerate() {
                coherent_bra_table(*a, n_max, &mut bufs.tabs_cx[k]);
            }
            husimi_factor = std::f64::consts::PI.powi(-(modes as i32));
            for b in 0..bath_dim {
                let mut f = C64::new(1.0, 0.0);
                let mut rem = b;
                for tab in bufs.tabs_cx.iter().take(modes) {
                    f *= tab[rem % levels];
                    rem /= levels;
                }
                for (i, ui) in bufs.u.iter_mut().enumerate() {
                    *ui += f * state.amplitudes[i * bath_dim + b];
                }
            }
        }
        HiddenVars::Quadrature { xplus, yminus } => {
            let pairing = pairing.unwrap();
            ensure_tables(&mut bufs.kernels, pairing.len());
            {
                let kernel = if bufs.kernel.as_ref().map(|k| k.n_max()) != Some(n_max) {
                    bufs.kernel = Some(PairKernel::new(n_max));
                    bufs.kernel.as_ref().unwrap()
                } else {
                    bufs.kernel.as_ref().unwrap()
                };
                for (j, (x, y)) in xplus.iter().zip(yminus).enumerate() {
                    bufs.kernels[j].resize(levels * levels, C64::ZERO);
                    kernel.evaluate(*x, *y, &mut bufs.scratch, &mut bufs.kernels[j]);
                }
            }
            for b in 0..bath_dim {
                let mut f = C64::new(1.0, 0.0);
                for (j, (kp, km)) in pairing.pairs().iter().enumerate() {
                    let p = basis.fock_level(b, *kp);
                    let q = basis.fock_level(b, *km);
                    f *= bufs.kernels[j][p * levels + q];
                }
                for (i, ui) in bufs.u.iter_mut().enumerate() {
                    *ui += f * state.amplitudes[i * bath_dim + b];
                }
            }
        }
    }
    Ok(husimi_factor * bufs.u.iter().map(|c| c.norm_sqr()).sum::<f64>())
}

fn single_excitation_overlap(
    state: &StateVector,
    hv: &HiddenVars,
    pairing: Option<&PairingMap>,
    bufs: &mut OverlapBuffers,
) -> Result<f64> {
    let basis = state.basis;
    let modes = basis.modes();
    let sys_dim = basis.system_dim();
    let bath_dim = basis.bath_dim();

    bufs.u.clear();
    bufs.u.resize(sys_dim, C64::ZERO);
    bufs.mode_factors.clear();
    bufs.mode_factors.resize(modes, C64::ZERO);

    // factor_vac and the one-quantum factor per mode.
    let mut husimi_factor = 1.0;
    let factor_vac = match hv {
        HiddenVars::Position(xs) => {
            ensure_tables(&mut bufs.tabs_real, modes);
            for (k, x) in xs.iter().enumerate() {
                fock_position_table(1, *x, &mut bufs.tabs_real[k]);
            }
            product_with_single_replacement(
                modes,
                |k| C64::new(bufs.tabs_real[k][0], 0.0),
                |k| C64::new(bufs.tabs_real[k][1], 0.0),
                &mut bufs.prefix,
                &mut bufs.suffix,
                &mut bufs.mode_factors,
            )
        }
        HiddenVars::Coherent(amps) => {
            husimi_factor = std::f64::consts::PI.powi(-(modes as i32));
            ensure_tables(&mut bufs.tabs_cx, modes);
            for (k, a) in amps.iter().enumerate() {
                coherent_bra_table(*a, 1, &mut bufs.tabs_cx[k]);
            }
            product_with_single_replacement(
                modes,
                |k| bufs.tabs_cx[k][0],
                |k| bufs.tabs_cx[k][1],
                &mut bufs.prefix,
                &mut bufs.suffix,
                &mut bufs.mode_factors,
            )
        }
        HiddenVars::Quadrature { xplus, yminus } => {
            let pairing = pairing.unwrap();
            let n_pairs = pairing.len();
            ensure_tables(&mut bufs.kernels, n_pairs);
            {
                let kernel = if bufs.kernel.as_ref().map(|k| k.n_max()) != Some(1) {
                    bufs.kernel = Some(PairKernel::new(1));
                    bufs.kernel.as_ref().unwrap()
                } else {
                    bufs.kernel.as_ref().unwrap()
                };
                for (j, (x, y)) in xplus.iter().zip(yminus).enumerate() {
                    bufs.kernels[j].resize(4, C64::ZERO);
                    kernel.evaluate(*x, *y, &mut bufs.scratch, &mut bufs.kernels[j]);
                }
            }
            // Products over pair vacua, with one pair promoted to one quantum.
            bufs.prefix.clear();
            bufs.prefix.push(C64::new(1.0, 0.0));
            for j in 0..n_pairs {
                let last = *bufs.prefix.last().unwrap();
                bufs.prefix.push(last * bufs.kernels[j][0]);
            }
            bufs.suffix.clear();
            bufs.suffix.resize(n_pairs + 1, C64::new(1.0, 0.0));
            for j in (0..n_pairs).rev() {
                bufs.suffix[j] = bufs.kernels[j][0] * bufs.suffix[j + 1];
            }
            for (j, (kp, km)) in pairing.pairs().iter().enumerate() {
                let rest = bufs.prefix[j] * bufs.suffix[j + 1];
                bufs.mode_factors[*kp] = rest * bufs.kernels[j][2]; // E_{10}
                bufs.mode_factors[*km] = rest * bufs.kernels[j][1]; // E_{01}
            }
            bufs.prefix[n_pairs]
        }
    };

    for i in 0..sys_dim {
        let row = i * bath_dim;
        let mut acc = factor_vac * state.amplitudes[row];
        for (k, f) in bufs.mode_factors.iter().enumerate() {
            acc += f * state.amplitudes[row + 1 + k];
        }
        bufs.u[i] = acc;
    }
    Ok(husimi_factor * bufs.u.iter().map(|c| c.norm_sqr()).sum::<f64>())
}

/// Π_k v0(k), plus into `factors[k]` the product with v0(k) replaced by v1(k).
fn product_with_single_replacement(
    modes: usize,
    v0: impl Fn(usize) -> C64,
    v1: impl Fn(usize) -> C64,
    prefix: &mut Vec<C64>,
    suffix: &mut Vec<C64>,
    factors: &mut [C64],
) -> C64 {
    prefix.clear();
    prefix.push(C64::new(1.0, 0.0));
    for k in 0..modes {
        let last = *prefix.last().unwrap();
        prefix.push(last * v0(k));
    }
    suffix.clear();
    suffix.resize(modes + 1, C64::new(1.0, 0.0));
    for k in (0..modes).rev() {
        suffix[k] = v0(k) * suffix[k + 1];
    }
    for k in 0..modes {
        factors[k] = prefix[k] * v1(k) * suffix[k + 1];
    }
    prefix[modes]
}

/// ⟨a|n⟩ = e^{-|a|²/2} (a*)ⁿ/√(n!) for n = 0..=n_max.
fn coherent_bra_table(a: C64, n_max: usize, out: &mut Vec<C64>) {
    out.clear();
    let mut cur = C64::new((-0.5 * a.norm_sqr()).exp(), 0.0);
    out.push(cur);
    let ac = a.conj();
    for n in 1..=n_max {
        cur *= ac / C64::new((n as f64).sqrt(), 0.0);
        out.push(cur);
    }
}

fn ensure_tables<T: Default + Clone>(tabs: &mut Vec<T>, len: usize) {
    if tabs.len() < len {
        tabs.resize(len, T::default());
    }
}
