//! Discrete modal dynamics for finite orthogonal decompositions: occupation
//! probabilities, probability currents, Bell's transition rates, and the
//! stochastic jump process they generate over a precomputed guiding grid.
//!
//! Only the minimal-rate solution is implemented; the extra rate and current
//! freedoms that leave the master equation invariant are out of scope.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{rk4_step, Rk4Buffers};
use crate::unraveling::RngStream;
use crate::C64;

/// An orthogonal, complete projective decomposition with value labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    projectors: Vec<DMatrix<C64>>,
    values: Vec<f64>,
}

const PROJECTOR_TOL: f64 = 1e-10;

impl Decomposition {
    pub fn new(projectors: Vec<DMatrix<C64>>, values: Vec<f64>) -> Result<Self> {
        if projectors.is_empty() || projectors.len() != values.len() {
            return Err(Error::InvalidModel(
                "decomposition needs one value per projector".into(),
            ));
        }
        let dim = projectors[0].nrows();
        for (n, p) in projectors.iter().enumerate() {
            if p.nrows() != dim || p.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "projector {n} is not {dim}x{dim}"
                )));
            }
        }
        for (n, pn) in projectors.iter().enumerate() {
            for (m, pm) in projectors.iter().enumerate() {
                let prod = pn * pm;
                let target = if n == m { pn.clone() } else { DMatrix::zeros(dim, dim) };
                let dev = (&prod - &target).iter().map(|c| c.norm()).fold(0.0, f64::max);
                if dev > PROJECTOR_TOL {
                    return Err(Error::InvalidModel(format!(
                        "projectors {n},{m} violate orthogonality by {dev:.3e}"
                    )));
                }
            }
        }
        let mut sum = DMatrix::from_element(dim, dim, C64::ZERO);
        for p in &projectors {
            sum += p;
        }
        let dev = (&sum - DMatrix::identity(dim, dim))
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if dev > PROJECTOR_TOL {
            return Err(Error::InvalidModel(format!(
                "projectors do not resolve unity (deviation {dev:.3e})"
            )));
        }
        Ok(Self { projectors, values })
    }

    /// σ_z eigenbasis decomposition of a dim-dimensional space (rank-one
    /// projectors onto the computational basis).
    pub fn computational_basis(dim: usize) -> Self {
        let projectors = (0..dim)
            .map(|n| {
                let mut p = DMatrix::from_element(dim, dim, C64::ZERO);
                p[(n, n)] = C64::new(1.0, 0.0);
                p
            })
            .collect();
        Self {
            projectors,
            values: (0..dim).map(|n| n as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[DMatrix<C64>] {
        &self.projectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// P_n = ⟨Φ|Π_n|Φ⟩.
pub fn probabilities(state: &DVector<C64>, dec: &Decomposition) -> Vec<f64> {
    dec.projectors
        .iter()
        .map(|p| state.dotc(&(p * state)).re)
        .collect()
}

/// J_nm = 2 Im{⟨Φ|Π_n Ĥ Π_m|Φ⟩} (ħ = 1). Each unordered pair is computed once
/// and mirrored, so J_mn = -J_nm holds bitwise.
pub fn current_matrix(
    state: &DVector<C64>,
    dec: &Decomposition,
    hamiltonian: &DMatrix<C64>,
) -> DMatrix<f64> {
    let n = dec.len();
    let projected: Vec<DVector<C64>> = dec.projectors.iter().map(|p| p * state).collect();
    let h_projected: Vec<DVector<C64>> = projected.iter().map(|v| hamiltonian * v).collect();
    let mut j = DMatrix::from_element(n, n, 0.0f64);
    for a in 0..n {
        for b in 0..a {
            let val = 2.0 * projected[a].dotc(&h_projected[b]).im;
            j[(a, b)] = val;
            j[(b, a)] = -val;
        }
    }
    j
}

const OCCUPATION_FLOOR: f64 = 1e-14;
const CURRENT_FLOOR: f64 = 1e-12;

/// Bell's minimal transition rates: for J_nm > 0, T_nm = J_nm/P_m and
/// T_mn = 0; for J_nm < 0 the mirrored assignment. T_nm is the rate into n
/// from m; T ≥ 0 entrywise and T_nm P_m − T_mn P_n = J_nm.
pub fn bell_rates(current: &DMatrix<f64>, probabilities: &[f64]) -> Result<DMatrix<f64>> {
    let n = probabilities.len();
    let mut t = DMatrix::from_element(n, n, 0.0f64);
    for a in 0..n {
        for b in 0..a {
            let j = current[(a, b)];
            if j == 0.0 {
                continue;
            }
            let (into, from) = if j > 0.0 { (a, b) } else { (b, a) };
            let p_from = probabilities[from];
            if p_from <= OCCUPATION_FLOOR {
                if j.abs() > CURRENT_FLOOR {
                    return Err(Error::CurrentIntoUnoccupied {
                        index: from,
                        current: j,
                        probability: p_from,
                    });
                }
                continue;
            }
            t[(into, from)] = j.abs() / p_from;
        }
    }
    Ok(t)
}

/// Guiding states of a small discrete model on a uniform lattice.
#[derive(Debug, Clone)]
pub struct DenseGrid {
    pub dt: f64,
    pub states: Vec<DVector<C64>>,
}

impl DenseGrid {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.dt;
        (0..self.states.len()).map(move |i| i as f64 * dt)
    }
}

/// RK4 propagation of d_t|Φ⟩ = -iĤ|Φ⟩ storing every step.
pub fn evolve_dense(
    hamiltonian: &DMatrix<C64>,
    initial: &DVector<C64>,
    dt: f64,
    n_steps: usize,
) -> Result<DenseGrid> {
    if !(dt > 0.0) || n_steps == 0 {
        return Err(Error::InvalidConfig("dense grid needs dt > 0 and steps > 0".into()));
    }
    let dim = initial.len();
    if hamiltonian.nrows() != dim {
        return Err(Error::DimensionMismatch(
            "hamiltonian does not match the state dimension".into(),
        ));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(initial.clone());
    let mut amps: Vec<C64> = initial.iter().copied().collect();
    let mut buf = Rk4Buffers::new(dim);
    let minus_i = C64::new(0.0, -1.0);
    for step in 0..n_steps {
        rk4_step(&mut amps, step as f64 * dt, dt, &mut buf, |_, y, out| {
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = C64::ZERO;
                for (col, yv) in y.iter().enumerate() {
                    acc += hamiltonian[(r, col)] * yv;
                }
                *o = minus_i * acc;
            }
            Ok(())
        })?;
        states.push(DVector::from_column_slice(&amps));
    }
    Ok(DenseGrid { dt, states })
}

/// Rates and occupation probabilities precomputed on the grid lattice so many
/// jump runs can share them.
#[derive(Debug, Clone)]
pub struct JumpProcess {
    pub dt: f64,
    pub probabilities: Vec<Vec<f64>>,
    pub rates: Vec<DMatrix<f64>>,
}

/// Occupation below which the per-step probability bound is not enforced:
/// Bell's rate out of a state scales as J/P_n and diverges as the occupation
/// vanishes, but such states hold an O(P_n) fraction of runs and are expelled
/// within a few steps, so the linearized step stays accurate where it matters.
const STABILITY_CHECK_FLOOR: f64 = 1e-4;

/// Precompute Bell rates along the grid; fails if any occupiable state's
/// per-step total jump probability exceeds 0.1 (reduce dt) or current flows
/// into an unoccupied state.
pub fn prepare_jump_process(
    grid: &DenseGrid,
    dec: &Decomposition,
    hamiltonian: &DMatrix<C64>,
) -> Result<JumpProcess> {
    let mut probs = Vec::with_capacity(grid.states.len());
    let mut rates = Vec::with_capacity(grid.states.len());
    for (idx, state) in grid.states.iter().enumerate() {
        let p = probabilities(state, dec);
        let j = current_matrix(state, dec, hamiltonian);
        let t = bell_rates(&j, &p)?;
        for n in 0..dec.len() {
            if p[n] < STABILITY_CHECK_FLOOR {
                continue;
            }
            let total: f64 = (0..dec.len())
                .filter(|m| *m != n)
                .map(|m| t[(m, n)])
                .sum::<f64>()
                * grid.dt;
            if total > 0.1 {
                return Err(Error::JumpStepTooLarge {
                    t: idx as f64 * grid.dt,
                    prob: total,
                });
            }
        }
        probs.push(p);
        rates.push(t);
    }
    Ok(JumpProcess {
        dt: grid.dt,
        probabilities: probs,
        rates,
    })
}

/// One realization of the jump process: the occupied index at every lattice
/// time. `n0` defaults to a draw from P(0).
pub fn simulate_jump_process(
    process: &JumpProcess,
    stream: RngStream,
    n0: Option<usize>,
) -> Vec<usize> {
    let mut rng = stream.rng();
    let dim = process.probabilities[0].len();
    let mut occupied = match n0 {
        Some(n) => n,
        None => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = dim - 1;
            for (n, p) in process.probabilities[0].iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = n;
                    break;
                }
            }
            pick
        }
    };
    let steps = process.rates.len() - 1;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(occupied);
    for t_idx in 0..steps {
        let rates = &process.rates[t_idx];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for m in 0..dim {
            if m == occupied {
                continue;
            }
            acc += rates[(m, occupied)] * process.dt;
            if u < acc {
                // Landing on a zero-probability member (the auxiliary
                // projector of a Naimark extension) must never happen.
                assert!(
                    process.probabilities[t_idx + 1][m] > OCCUPATION_FLOOR,
                    "jump into zero-probability state {m}"
                );
                occupied = m;
                break;
            }
        }
        path.push(occupied);
    }
    path
}
