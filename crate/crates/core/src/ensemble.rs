//! Monte Carlo orchestration: run many trajectories over one shared guiding
//! grid, average the conditioned projectors into an estimate of ρ_red(t), and
//! attach the diagnostics the verification battery needs.
//!
//! Trajectories are independent work items with index-derived RNG streams and
//! a reduction order fixed by trajectory index, so results are bit-identical
//! across runs and worker counts.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bath::{BathSpec, PairingMap, SystemSpec};
use crate::error::{Error, Result};
use crate::linalg::ladder::{apply_bath_ladder, Ladder};
use crate::linalg::state::{DensityMatrix, StateVector};
use crate::numerics::{rk4_step, Rk4Buffers};
use crate::propagator::GuidingStateGrid;
use crate::unraveling::{
    integrate_trajectory, RngStream, Trajectory, TrajectoryOptions, TrajectoryStatus, Unraveling,
};
use crate::C64;

/// Maximum tolerated fraction of node-failed trajectories.
pub const FAILURE_RATE_LIMIT: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
    pub worker_count: usize,
    /// Full-step lattice times at which ρ is estimated.
    pub checkpoints: Vec<f64>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidConfig("n_traj must be >= 1".into()));
        }
        if self.worker_count == 0 {
            return Err(Error::InvalidConfig("worker_count must be >= 1".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::InvalidConfig("at least one checkpoint is required".into()));
        }
        Ok(())
    }
}

/// Empirical hidden-coordinate moments next to their quantum references.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMoments {
    /// Empirical mean per flat coordinate.
    pub mean: Vec<f64>,
    /// Empirical (unbiased) variance per flat coordinate.
    pub variance: Vec<f64>,
    /// Standard error of the mean.
    pub mean_std_err: Vec<f64>,
    /// Normal-theory standard error of the variance, s²√(2/(M-1)).
    pub variance_std_err: Vec<f64>,
    /// Quantum reference mean ⟨q̂⟩ of the guiding state.
    pub ref_mean: Vec<f64>,
    /// Quantum reference variance; `None` where the unraveling's acceptance
    /// contract compares means only (coherent).
    pub ref_variance: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEstimate {
    pub t: f64,
    /// Monte Carlo mean of the conditioned projectors.
    pub rho: DensityMatrix,
    /// Entrywise standard error of the estimate, real and imaginary parts.
    pub std_err_re: DMatrix<f64>,
    pub std_err_im: DMatrix<f64>,
    /// ρ_red(t) from the propagated universe state.
    pub exact: DensityMatrix,
    pub trace_distance: f64,
    pub hidden: HiddenMoments,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleStatus {
    Passed,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub n_traj: usize,
    pub completed: usize,
    pub failures: usize,
    pub master_seed: u64,
    pub worker_count: usize,
    pub checkpoints: Vec<CheckpointEstimate>,
    pub status: EnsembleStatus,
}

impl EnsembleResult {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.n_traj as f64
    }

    pub fn max_trace_distance(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| c.trace_distance)
            .fold(0.0, f64::max)
    }
}

struct TrajectorySummary {
    kets: Vec<nalgebra::DVector<C64>>,
    hidden: Vec<Vec<f64>>,
    failed: bool,
}

/// Run `cfg.n_traj` trajectories of `unraveling` over the shared grid and
/// average conditioned projectors at every checkpoint.
pub fn run_ensemble(
    grid: &GuidingStateGrid,
    sys: &SystemSpec,
    bath: &BathSpec,
    pairing: Option<&PairingMap>,
    unraveling: Unraveling,
    cfg: &EnsembleConfig,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    for t in &cfg.checkpoints {
        let ratio = t / grid.dt();
        if (ratio - ratio.round()).abs() > 1e-6 || *t < 0.0 || *t > grid.t_final() + 1e-9 {
            return Err(Error::OffLattice { t: *t, step: grid.dt() });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let opts = TrajectoryOptions {
        snapshot_times: &cfg.checkpoints,
        ..Default::default()
    };
    let summaries: Vec<Result<TrajectorySummary>> = pool.install(|| {
        (0..cfg.n_traj as u64)
            .into_par_iter()
            .map(|index| {
                let traj = integrate_trajectory(
                    grid,
                    sys,
                    bath,
                    pairing,
                    unraveling,
                    RngStream {
                        master_seed: cfg.master_seed,
                        trajectory_index: index,
                    },
                    &opts,
                )?;
                Ok(summarize(traj, &cfg.checkpoints, grid.dt()))
            })
            .collect()
    });

    let mut completed = 0usize;
    let mut failures = 0usize;
    let mut kept: Vec<TrajectorySummary> = Vec::with_capacity(cfg.n_traj);
    for s in summaries {
        let s = s?;
        if s.failed {
            failures += 1;
        } else {
            completed += 1;
        }
        kept.push(s);
    }
    if completed == 0 {
        return Ok(EnsembleResult {
            n_traj: cfg.n_traj,
            completed,
            failures,
            master_seed: cfg.master_seed,
            worker_count: cfg.worker_count,
            checkpoints: Vec::new(),
            status: EnsembleStatus::Failed("every trajectory hit a node".into()),
        });
    }

    let sys_dim = sys.dim;
    let mut checkpoints = Vec::with_capacity(cfg.checkpoints.len());
    for (c_idx, t) in cfg.checkpoints.iter().enumerate() {
        let mut mean = DMatrix::from_element(sys_dim, sys_dim, C64::ZERO);
        let mut m2_re = DMatrix::from_element(sys_dim, sys_dim, 0.0f64);
        let mut m2_im = DMatrix::from_element(sys_dim, sys_dim, 0.0f64);
        // Two passes keep the entrywise variance numerically plain; reduction
        // order is trajectory index, fixed regardless of worker scheduling.
        for s in kept.iter().filter(|s| !s.failed) {
            let ket = &s.kets[c_idx];
            for i in 0..sys_dim {
                for j in 0..sys_dim {
                    mean[(i, j)] += ket[i] * ket[j].conj();
                }
            }
        }
        let m = completed as f64;
        mean /= C64::new(m, 0.0);
        for s in kept.iter().filter(|s| !s.failed) {
            let ket = &s.kets[c_idx];
            for i in 0..sys_dim {
                for j in 0..sys_dim {
                    let d = ket[i] * ket[j].conj() - mean[(i, j)];
                    m2_re[(i, j)] += d.re * d.re;
                    m2_im[(i, j)] += d.im * d.im;
                }
            }
        }
        let denom = (m * (m - 1.0).max(1.0)).sqrt();
        let std_err_re = m2_re.map(|v| v.sqrt() / denom);
        let std_err_im = m2_im.map(|v| v.sqrt() / denom);

        let coord_dim = unraveling.coord_dim(bath.len());
        let mut c_mean = vec![0.0; coord_dim];
        let mut c_var = vec![0.0; coord_dim];
        for s in kept.iter().filter(|s| !s.failed) {
            for (acc, v) in c_mean.iter_mut().zip(&s.hidden[c_idx]) {
                *acc += v;
            }
        }
        for v in &mut c_mean {
            *v /= m;
        }
        for s in kept.iter().filter(|s| !s.failed) {
            for (k, v) in s.hidden[c_idx].iter().enumerate() {
                let d = v - c_mean[k];
                c_var[k] += d * d;
            }
        }
        for v in &mut c_var {
            *v /= (m - 1.0).max(1.0);
        }
        let mean_std_err: Vec<f64> = c_var.iter().map(|v| (v / m).sqrt()).collect();
        let variance_std_err: Vec<f64> = c_var
            .iter()
            .map(|v| v * (2.0 / (m - 1.0).max(1.0)).sqrt())
            .collect();

        let guiding = grid.state_at(*t)?;
        let (ref_mean, ref_variance) = hidden_moment_refs(guiding, unraveling, bath, pairing)?;

        let exact = grid.reduced_state(*t)?;
        let rho = DensityMatrix { entries: mean };
        let distance = trace_distance(&rho, &exact);
        checkpoints.push(CheckpointEstimate {
            t: *t,
            rho,
            std_err_re,
            std_err_im,
            exact,
            trace_distance: distance,
            hidden: HiddenMoments {
                mean: c_mean,
                variance: c_var,
                mean_std_err,
                variance_std_err,
                ref_mean,
                ref_variance,
            },
        });
    }

    let status = if failures as f64 / cfg.n_traj as f64 > FAILURE_RATE_LIMIT {
        EnsembleStatus::Failed(format!(
            "node-failure rate {failures}/{} exceeds 0.5%",
            cfg.n_traj
        ))
    } else {
        EnsembleStatus::Passed
    };
    Ok(EnsembleResult {
        n_traj: cfg.n_traj,
        completed,
        failures,
        master_seed: cfg.master_seed,
        worker_count: cfg.worker_count,
        checkpoints,
        status,
    })
}

fn summarize(traj: Trajectory, checkpoints: &[f64], dt: f64) -> TrajectorySummary {
    let failed = !matches!(traj.status, TrajectoryStatus::Completed);
    if failed {
        return TrajectorySummary {
            kets: Vec::new(),
            hidden: Vec::new(),
            failed,
        };
    }
    let kets = traj
        .snapshots
        .iter()
        .map(|(_, cs)| cs.ket.clone())
        .collect();
    let hidden = checkpoints
        .iter()
        .map(|t| {
            let idx = (t / dt).round() as usize;
            traj.hidden[idx].clone()
        })
        .collect();
    TrajectorySummary {
        kets,
        hidden,
        failed,
    }
}

/// Quantum references ⟨q̂⟩ and Var(q̂) for each flat hidden coordinate of the
/// guiding state. Coherent references carry the Husimi first moment only.
pub fn hidden_moment_refs(
    state: &StateVector,
    unraveling: Unraveling,
    bath: &BathSpec,
    pairing: Option<&PairingMap>,
) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let modes = bath.len();
    // Per-mode first and second ladder moments via lowering only (exact in the
    // truncated space).
    let mut a_exp = Vec::with_capacity(modes);
    let mut aa_exp = Vec::with_capacity(modes);
    let mut n_exp = Vec::with_capacity(modes);
    let mut lowered: Vec<StateVector> = Vec::with_capacity(modes);
    for k in 0..modes {
        let (w, _) = apply_bath_ladder(state, k, Ladder::Lower)?;
        let (w2, _) = apply_bath_ladder(&w, k, Ladder::Lower)?;
        a_exp.push(state.inner(&w));
        aa_exp.push(state.inner(&w2));
        n_exp.push(w.norm_sqr());
        lowered.push(w);
    }
    let mut mean = Vec::new();
    let mut var = Vec::new();
    match unraveling {
        Unraveling::Position => {
            for k in 0..modes {
                // ⟨x̂⟩ = √2 Re⟨â⟩; ⟨x̂²⟩ = Re⟨â²⟩ + ⟨â†â⟩ + 1/2
                let m = 2.0f64.sqrt() * a_exp[k].re;
                let x2 = aa_exp[k].re + n_exp[k] + 0.5;
                mean.push(m);
                var.push(Some(x2 - m * m));
            }
        }
        Unraveling::Coherent => {
            for k in 0..modes {
                mean.push(a_exp[k].re);
                mean.push(a_exp[k].im);
                var.push(None);
                var.push(None);
            }
        }
        Unraveling::Quadrature => {
            let pairing = pairing.ok_or_else(|| {
                Error::UnpairableBath("quadrature moments need a pairing map".into())
            })?;
            for (kp, km) in pairing.pairs() {
                let (p, q) = (*kp, *km);
                // Single-mode pieces.
                let x_p = 2.0f64.sqrt() * a_exp[p].re;
                let x_m = 2.0f64.sqrt() * a_exp[q].re;
                let y_p = 2.0f64.sqrt() * a_exp[p].im;
                let y_m = 2.0f64.sqrt() * a_exp[q].im;
                let x2_p = aa_exp[p].re + n_exp[p] + 0.5;
                let x2_m = aa_exp[q].re + n_exp[q] + 0.5;
                let y2_p = -aa_exp[p].re + n_exp[p] + 0.5;
                let y2_m = -aa_exp[q].re + n_exp[q] + 0.5;
                // Cross moments: ⟨â_p â_m⟩ and ⟨â_p† â_m⟩.
                let (w_pm, _) = apply_bath_ladder(&lowered[q], p, Ladder::Lower)?;
                let apam = state.inner(&w_pm);
                let adam = lowered[p].inner(&lowered[q]);
                let xx = apam.re + adam.re;
                let yy = -apam.re + adam.re;
                // X⁺ = (x_p + x_m)/√2, Y⁻ = (y_p − y_m)/√2.
                let mx = (x_p + x_m) / 2.0f64.sqrt();
                let my = (y_p - y_m) / 2.0f64.sqrt();
                let x2 = 0.5 * (x2_p + x2_m) + xx;
                let y2 = 0.5 * (y2_p + y2_m) - yy;
                mean.push(mx);
                var.push(Some(x2 - mx * mx));
                mean.push(my);
                var.push(Some(y2 - my * my));
            }
        }
    }
    Ok((mean, var))
}

/// (1/2) Σ singular values of (a − b); for Hermitian arguments these are the
/// absolute eigenvalues of the difference.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let diff = &a.entries - &b.entries;
    0.5 * diff
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
}

/// Markovian-limit reference: RK4 integration of
/// d_t ρ = -i[Ĥ, ρ] + γ(L̂ρL̂† − ½{L̂†L̂, ρ}), sampled every step.
pub fn lindblad_oracle(
    hamiltonian: &DMatrix<C64>,
    lowering: &DMatrix<C64>,
    gamma: f64,
    rho0: &DMatrix<C64>,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    let dim = rho0.nrows();
    if dim > 8 {
        return Err(Error::DimensionMismatch(
            "lindblad oracle is for small systems (dim <= 8)".into(),
        ));
    }
    let l_dag = lowering.adjoint();
    let ldl = &l_dag * lowering;
    let mut series = Vec::with_capacity(n_steps + 1);
    series.push((0.0, DensityMatrix { entries: rho0.clone() }));
    let mut amps: Vec<C64> = rho0.iter().copied().collect();
    let mut buf = Rk4Buffers::new(dim * dim);
    for step in 0..n_steps {
        rk4_step(&mut amps, step as f64 * dt, dt, &mut buf, |_, y, out| {
            let rho = DMatrix::from_column_slice(dim, dim, y);
            let comm = hamiltonian * &rho - &rho * hamiltonian;
            let jump = lowering * &rho * &l_dag;
            let anti = &ldl * &rho + &rho * &ldl;
            let drho = comm * C64::new(0.0, -1.0) + (jump - anti * C64::new(0.5, 0.0)) * C64::new(gamma, 0.0);
            for (o, v) in out.iter_mut().zip(drho.iter()) {
                *o = *v;
            }
            Ok(())
        })?;
        series.push((
            (step + 1) as f64 * dt,
            DensityMatrix {
                entries: DMatrix::from_column_slice(dim, dim, &amps),
            },
        ));
    }
    Ok(series)
}
