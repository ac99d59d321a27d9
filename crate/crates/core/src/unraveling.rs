//! Hidden-variable dynamics for the three unravelings: initial-condition
//! samplers, the closed-form drift laws, the first-principles velocity field
//! built from the commutator with Ĥ_uni(t), the noise functions z(t), and
//! deterministic per-trajectory RK4 over a shared guiding-state grid.
//!
//! The drift at every RK4 stage is evaluated from the system state conditioned
//! on the trajectory's *current* hidden values — this is what distinguishes
//! these trajectories from mean-field dynamics. Stage times land exactly on
//! the stored half-step lattice of the guiding grid, so the guiding state is
//! never interpolated.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bath::{BathSpec, PairingMap, SystemSpec, UniverseHamiltonian};
use crate::conditioning::{overlap_into, ConditionedState, HiddenVars, OverlapBuffers, NODE_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::ladder::{apply_bath_ladder, Ladder};
use crate::linalg::state::StateVector;
use crate::propagator::GuidingStateGrid;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unraveling {
    Position,
    Quadrature,
    Coherent,
}

impl Unraveling {
    pub fn needs_pairing(self) -> bool {
        matches!(self, Unraveling::Quadrature)
    }

    /// Number of real hidden coordinates for a bath with `modes` modes.
    pub fn coord_dim(self, modes: usize) -> usize {
        match self {
            Unraveling::Position => modes,
            Unraveling::Quadrature => modes, // 2 per pair, modes/2 pairs
            Unraveling::Coherent => 2 * modes,
        }
    }
}

/// Noise value z(t); identically real for the quadrature unraveling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSample {
    pub z: C64,
    pub t: f64,
}

/// Counter-split RNG stream: `master_seed` keys the run, the trajectory index
/// selects a ChaCha stream, so streams for different indices never overlap
/// and the draw sequence is independent of worker scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl RngStream {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trajectory_index);
        rng
    }
}

/// Draw t = 0 hidden values from the vacuum distribution of the unraveling:
/// every real coordinate is Normal(0, 1/2).
pub fn sample_initial(
    unraveling: Unraveling,
    bath: &BathSpec,
    pairing: Option<&PairingMap>,
    rng: &mut impl Rng,
) -> Result<HiddenVars> {
    let mut draw = || {
        let g: f64 = rng.sample(StandardNormal);
        g * 0.5f64.sqrt()
    };
    Ok(match unraveling {
        Unraveling::Position => HiddenVars::Position((0..bath.len()).map(|_| draw()).collect()),
        Unraveling::Coherent => HiddenVars::Coherent(
            (0..bath.len())
                .map(|_| {
                    let re = draw();
                    let im = draw();
                    C64::new(re, im)
                })
                .collect(),
        ),
        Unraveling::Quadrature => {
            let pairing = pairing.ok_or_else(|| {
                Error::UnpairableBath("quadrature sampling needs a pairing map".into())
            })?;
            let mut xplus = Vec::with_capacity(pairing.len());
            let mut yminus = Vec::with_capacity(pairing.len());
            for _ in 0..pairing.len() {
                xplus.push(draw());
                yminus.push(draw());
            }
            HiddenVars::Quadrature { xplus, yminus }
        }
    })
}

/// Closed-form drift of every hidden coordinate given ⟨L̂⟩ of the conditioned
/// state, in the canonical flat layout.
pub fn velocity_closed_into(
    unraveling: Unraveling,
    l_exp: C64,
    bath: &BathSpec,
    pairing: Option<&PairingMap>,
    t: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    match unraveling {
        Unraveling::Position => {
            // d_t x_k = √2 g_k Re(⟨L̂⟩ e^{iΩ_k t})
            for m in bath.modes() {
                let phase = C64::from_polar(1.0, m.detuning * t);
                out.push(2.0f64.sqrt() * m.coupling * (l_exp * phase).re);
            }
        }
        Unraveling::Quadrature => {
            // d_t X⁺ = g cos(Ωt)⟨L̂_x⟩, d_t Y⁻ = g sin(Ωt)⟨L̂_x⟩, ⟨L̂_x⟩ = 2Re⟨L̂⟩
            let lx = 2.0 * l_exp.re;
            let pairing = pairing.expect("quadrature drift needs a pairing map");
            for (kp, _) in pairing.pairs() {
                let m = bath.modes()[*kp];
                out.push(m.coupling * (m.detuning * t).cos() * lx);
                out.push(m.coupling * (m.detuning * t).sin() * lx);
            }
        }
        Unraveling::Coherent => {
            // d_t a_k = g_k e^{iΩ_k t} ⟨L̂⟩
            for m in bath.modes() {
                let v = C64::from_polar(m.coupling, m.detuning * t) * l_exp;
                out.push(v.re);
                out.push(v.im);
            }
        }
    }
}

pub fn velocity_closed(
    unraveling: Unraveling,
    l_exp: C64,
    bath: &BathSpec,
    pairing: Option<&PairingMap>,
    t: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    velocity_closed_into(unraveling, l_exp, bath, pairing, t, &mut out);
    out
}

/// First-principles drift: for each hidden coordinate q, apply the velocity
/// operator v̂ = -i[q̂, Ĥ_uni(t)] built from ladder actions, condition the
/// result on the hidden values, and take Re⟨ψ_q| v̂Ψ conditioned ⟩/N. This is
/// the independent oracle for [`velocity_closed`]; the two never share a code
/// path.
pub fn velocity_general(
    state: &StateVector,
    hv: &HiddenVars,
    t: f64,
    h_uni: &UniverseHamiltonian,
    pairing: Option<&PairingMap>,
) -> Result<Vec<f64>> {
    Ok(velocity_general_brackets(state, hv, t, h_uni, pairing)?
        .into_iter()
        .map(|b| b.re)
        .collect())
}

/// The complex brackets ⟨ψ_q|(⟨{q}|v̂_k|Ψ⟩/√N)⟩ before the real part is taken.
/// For the unravelings here v̂_k reduces to a Hermitian system operator, so the
/// imaginary parts vanish to rounding; tests pin that down.
pub fn velocity_general_brackets(
    state: &StateVector,
    hv: &HiddenVars,
    t: f64,
    h_uni: &UniverseHamiltonian,
    pairing: Option<&PairingMap>,
) -> Result<Vec<C64>> {
    let mut bufs = OverlapBuffers::new();
    let n_raw = overlap_into(state, hv, pairing, &mut bufs)?;
    let u = bufs.u.clone();
    let u_norm_sqr: f64 = u.iter().map(|c| c.norm_sqr()).sum();
    if n_raw < NODE_FLOOR {
        return Err(Error::NodeEncountered { t: state.time });
    }
    let (h_state, _) = h_uni.apply(t, state)?;

    let coord_ops = coordinate_operators(hv, pairing)?;
    let mut brackets = Vec::with_capacity(coord_ops.len());
    for combo in &coord_ops {
        // w = -i (q̂ Ĥ - Ĥ q̂)|Ψ⟩
        let q_h = apply_combo(&h_state, combo)?;
        let q_psi = apply_combo(state, combo)?;
        let (h_q_psi, _) = h_uni.apply(t, &q_psi)?;
        let mut w = q_h;
        w.scaled_add(C64::new(-1.0, 0.0), &h_q_psi);
        w.scale(C64::new(0.0, -1.0));
        w.time = state.time;
        overlap_into(&w, hv, pairing, &mut bufs)?;
        let mut acc = C64::ZERO;
        for (ui, wi) in u.iter().zip(&bufs.u) {
            acc += ui.conj() * wi;
        }
        brackets.push(acc / u_norm_sqr);
    }
    Ok(brackets)
}

use crate::propagator::HamiltonianAction;

type LadderCombo = Vec<(usize, Ladder, C64)>;

/// Ladder-operator decomposition of each hidden-coordinate operator q̂, in the
/// canonical flat order.
fn coordinate_operators(hv: &HiddenVars, pairing: Option<&PairingMap>) -> Result<Vec<LadderCombo>> {
    let i = C64::new(0.0, 1.0);
    let mut ops = Vec::new();
    match hv {
        HiddenVars::Position(xs) => {
            // x̂_k = (â_k + â_k†)/√2
            let c = C64::new(1.0 / 2.0f64.sqrt(), 0.0);
            for k in 0..xs.len() {
                ops.push(vec![(k, Ladder::Lower, c), (k, Ladder::Raise, c)]);
            }
        }
        HiddenVars::Quadrature { xplus, .. } => {
            let pairing = pairing.ok_or_else(|| {
                Error::UnpairableBath("quadrature velocity needs a pairing map".into())
            })?;
            let half = C64::new(0.5, 0.0);
            for (j, (kp, km)) in pairing.pairs().iter().enumerate() {
                if j >= xplus.len() {
                    break;
                }
                // X̂⁺ = (â_kp + â_kp† + â_km + â_km†)/2
                ops.push(vec![
                    (*kp, Ladder::Lower, half),
                    (*kp, Ladder::Raise, half),
                    (*km, Ladder::Lower, half),
                    (*km, Ladder::Raise, half),
                ]);
                // Ŷ⁻ = -i(â_kp - â_kp† - â_km + â_km†)/2
                ops.push(vec![
                    (*kp, Ladder::Lower, -i * half),
                    (*kp, Ladder::Raise, i * half),
                    (*km, Ladder::Lower, i * half),
                    (*km, Ladder::Raise, -i * half),
                ]);
            }
        }
        HiddenVars::Coherent(amps) => {
            // Naimark pair coordinates: x̂⁺ = (â + â† + aux)/2, ŷ⁻ with the
            // auxiliary ladder terms commuting with Ĥ ⊗ 1 and dropping out.
            let half = C64::new(0.5, 0.0);
            for k in 0..amps.len() {
                ops.push(vec![(k, Ladder::Lower, half), (k, Ladder::Raise, half)]);
                ops.push(vec![(k, Ladder::Lower, -i * half), (k, Ladder::Raise, i * half)]);
            }
        }
    }
    Ok(ops)
}

fn apply_combo(state: &StateVector, combo: &LadderCombo) -> Result<StateVector> {
    let mut out = StateVector::zero(state.basis, state.time);
    for (mode, kind, coeff) in combo {
        let (term, _) = apply_bath_ladder(state, *mode, *kind)?;
        out.scaled_add(*coeff, &term);
    }
    Ok(out)
}

/// z(t) as the stated linear combination of hidden values; derived output
/// only — nothing integrates it.
pub fn noise_z(
    hv: &HiddenVars,
    bath: &BathSpec,
    t: f64,
    pairing: Option<&PairingMap>,
) -> NoiseSample {
    let z = match hv {
        // z = Σ_k g_k √2 x_k e^{-iΩ_k t}
        HiddenVars::Position(xs) => xs
            .iter()
            .zip(bath.modes())
            .map(|(x, m)| C64::from_polar(m.coupling * 2.0f64.sqrt() * x, -m.detuning * t))
            .fold(C64::ZERO, |acc, v| acc + v),
        // z = Σ_{pairs} 2 g [X⁺ cos(Ωt) + Y⁻ sin(Ωt)], real by construction
        HiddenVars::Quadrature { xplus, yminus } => {
            let pairing = pairing.expect("quadrature noise needs a pairing map");
            let mut re = 0.0;
            for (j, (kp, _)) in pairing.pairs().iter().enumerate() {
                let m = bath.modes()[*kp];
                re += 2.0
                    * m.coupling
                    * (xplus[j] * (m.detuning * t).cos() + yminus[j] * (m.detuning * t).sin());
            }
            C64::new(re, 0.0)
        }
        // z = Σ_k g_k a_k e^{-iΩ_k t}
        HiddenVars::Coherent(amps) => amps
            .iter()
            .zip(bath.modes())
            .map(|(a, m)| a * C64::from_polar(m.coupling, -m.detuning * t))
            .fold(C64::ZERO, |acc, v| acc + v),
    };
    NoiseSample { z, t }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    NodeFailure { t: f64 },
}

/// One integrated trajectory: hidden values, noise, ⟨L̂⟩, and requested
/// observable expectations on the step lattice, plus conditioned-state
/// snapshots at requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Flat hidden coordinates per lattice time.
    pub hidden: Vec<Vec<f64>>,
    pub noise: Vec<NoiseSample>,
    pub l_exp: Vec<C64>,
    /// Per lattice time, one expectation per requested observable.
    pub observables: Vec<Vec<f64>>,
    pub snapshots: Vec<(f64, ConditionedState)>,
    pub stream: RngStream,
    pub status: TrajectoryStatus,
}

/// Which drift evaluation the integrator uses. `Closed` is the production
/// path; `General` re-derives the drift from the commutator form at every
/// stage and exists for the dual-path oracle tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocitySource {
    #[default]
    Closed,
    General,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrajectoryOptions<'a> {
    pub snapshot_times: &'a [f64],
    /// Hermitian system operators whose conditioned expectations are recorded
    /// at every lattice time.
    pub observables: &'a [nalgebra::DMatrix<C64>],
    pub velocity_source: VelocitySource,
}

/// Integrate the hidden variables by RK4 against the shared guiding grid.
/// Stage states are read at the exact stage times t, t + dt/2, t + dt from
/// the half-step lattice. A node encounter fails the trajectory (status, not
/// error); the partial series is retained.
pub fn integrate_trajectory(
    grid: &GuidingStateGrid,
    sys: &SystemSpec,
    bath: &BathSpec,
    pairing: Option<&PairingMap>,
    unraveling: Unraveling,
    stream: RngStream,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    if !grid.has_half_lattice() {
        return Err(Error::InvalidConfig(
            "trajectory integration needs a stride-1 guiding grid with half-step states".into(),
        ));
    }
    if unraveling.needs_pairing() && pairing.is_none() {
        return Err(Error::UnpairableBath(
            "quadrature trajectories need a pairing map".into(),
        ));
    }
    let dt = grid.dt();
    let n_steps = (grid.t_final() / dt).round() as usize;

    // Map snapshot times to step indices up front.
    let mut snapshot_steps = Vec::with_capacity(opts.snapshot_times.len());
    for t in opts.snapshot_times {
        let ratio = t / dt;
        let idx = ratio.round();
        if (ratio - idx).abs() > 1e-6 || idx < 0.0 || idx as usize > n_steps {
            return Err(Error::OffLattice { t: *t, step: dt });
        }
        snapshot_steps.push(idx as usize);
    }

    let mut rng = stream.rng();
    let mut hv = sample_initial(unraveling, bath, pairing, &mut rng)?;
    let mut flat = hv.flatten();
    let dim = flat.len();

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        hidden: Vec::with_capacity(n_steps + 1),
        noise: Vec::with_capacity(n_steps + 1),
        l_exp: Vec::with_capacity(n_steps + 1),
        observables: Vec::with_capacity(n_steps + 1),
        snapshots: Vec::new(),
        stream,
        status: TrajectoryStatus::Completed,
    };

    let mut bufs = OverlapBuffers::new();
    let mut stage_flat = vec![0.0; dim];
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let l_matrix = sys.lowering.matrix();
    let h_uni = match opts.velocity_source {
        VelocitySource::Closed => None,
        VelocitySource::General => Some(UniverseHamiltonian::new(sys, bath, grid.state_by_index(0).basis)?),
    };

    // Evaluate the drift at given hidden coords against a stored state;
    // returns ⟨L̂⟩ (and the conditioned weight) as a side product.
    let eval = |flat: &[f64],
                    state: &StateVector,
                    t: f64,
                    hv: &mut HiddenVars,
                    out: &mut Vec<f64>,
                    bufs: &mut OverlapBuffers|
     -> Result<(C64, f64)> {
        hv.assign_from_flat(flat);
        let weight = overlap_into(state, hv, pairing, bufs)?;
        if weight < NODE_FLOOR {
            return Err(Error::NodeEncountered { t });
        }
        let mut l_num = C64::ZERO;
        let mut norm = 0.0;
        for (i, ui) in bufs.u.iter().enumerate() {
            norm += ui.norm_sqr();
            for (j, uj) in bufs.u.iter().enumerate() {
                let lij = l_matrix[(i, j)];
                if lij != C64::ZERO {
                    l_num += ui.conj() * lij * uj;
                }
            }
        }
        let l_exp = l_num / norm;
        match opts.velocity_source {
            VelocitySource::Closed => {
                velocity_closed_into(unraveling, l_exp, bath, pairing, t, out)
            }
            VelocitySource::General => {
                let v = velocity_general(state, hv, t, h_uni.as_ref().unwrap(), pairing)?;
                out.clear();
                out.extend_from_slice(&v);
            }
        }
        Ok((l_exp, weight))
    };

    let record =
        |traj: &mut Trajectory, step: usize, flat: &[f64], hv: &HiddenVars, l_exp: C64, weight: f64, bufs: &OverlapBuffers| {
            let t = step as f64 * dt;
            traj.times.push(t);
            traj.hidden.push(flat.to_vec());
            traj.noise.push(noise_z(hv, bath, t, pairing));
            traj.l_exp.push(l_exp);
            let norm = bufs.u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let mut obs_row = Vec::with_capacity(opts.observables.len());
            for op in opts.observables {
                let mut acc = C64::ZERO;
                for (i, ui) in bufs.u.iter().enumerate() {
                    for (j, uj) in bufs.u.iter().enumerate() {
                        let oij = op[(i, j)];
                        if oij != C64::ZERO {
                            acc += ui.conj() * oij * uj;
                        }
                    }
                }
                obs_row.push(acc.re / (norm * norm));
            }
            traj.observables.push(obs_row);
            if snapshot_steps.contains(&step) {
                let inv = 1.0 / norm;
                let ket = nalgebra::DVector::from_iterator(
                    bufs.u.len(),
                    bufs.u.iter().map(|c| c * inv),
                );
                traj.snapshots.push((t, ConditionedState { ket, weight }));
            }
        };

    for step in 0..=n_steps {
        let t = step as f64 * dt;
        let state_0 = grid.state_by_index(2 * step);
        // k1 stage doubles as the lattice record point.
        match eval(&flat, state_0, t, &mut hv, &mut k1, &mut bufs) {
            Ok((l_exp, weight)) => record(&mut traj, step, &flat, &hv, l_exp, weight, &bufs),
            Err(Error::NodeEncountered { t }) => {
                traj.status = TrajectoryStatus::NodeFailure { t };
                return Ok(traj);
            }
            Err(e) => return Err(e),
        }
        if step == n_steps {
            break;
        }
        let state_half = grid.state_by_index(2 * step + 1);
        let state_1 = grid.state_by_index(2 * step + 2);
        let th = t + dt / 2.0;
        let t1 = t + dt;
        let stage = |base: &[f64], k: &[f64], h: f64, dst: &mut Vec<f64>| {
            dst.clear();
            dst.extend(base.iter().zip(k).map(|(q, v)| q + h * v));
        };
        let result = (|| -> Result<()> {
            stage(&flat, &k1, dt / 2.0, &mut stage_flat);
            eval(&stage_flat, state_half, th, &mut hv, &mut k2, &mut bufs)?;
            stage(&flat, &k2, dt / 2.0, &mut stage_flat);
            eval(&stage_flat, state_half, th, &mut hv, &mut k3, &mut bufs)?;
            stage(&flat, &k3, dt, &mut stage_flat);
            eval(&stage_flat, state_1, t1, &mut hv, &mut k4, &mut bufs)?;
            Ok(())
        })();
        match result {
            Ok(()) => {}
            Err(Error::NodeEncountered { t }) => {
                traj.status = TrajectoryStatus::NodeFailure { t };
                return Ok(traj);
            }
            Err(e) => return Err(e),
        }
        for i in 0..dim {
            flat[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests;
