//! Serialization of trajectories and results: CSV with shortest round-trip
//! decimals, and JSON trees with a fixed field order so equal runs produce
//! equal bytes.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use modaltraj::ensemble::EnsembleResult;
use modaltraj::unraveling::Trajectory;
use modaltraj::verify::CheckResult;
use modaltraj::C64;

/// Column layout: t, z_re, z_im, the hidden coordinates in canonical order
/// (positions by mode; X⁺ then Y⁻ per pair; Re a then Im a per mode), the
/// conditioned ⟨L̂⟩, then one column per requested observable. Rust's default
/// float formatting is the shortest representation that round-trips.
pub fn write_trajectory_csv(
    mut w: impl Write,
    traj: &Trajectory,
    obs_names: &[String],
) -> std::io::Result<()> {
    let coord_dim = traj.hidden.first().map_or(0, |h| h.len());
    let mut header = String::from("t,z_re,z_im");
    for k in 1..=coord_dim {
        header.push_str(&format!(",q_{k}"));
    }
    header.push_str(",L_re,L_im");
    for name in obs_names {
        header.push(',');
        header.push_str(name);
    }
    writeln!(w, "{header}")?;
    for (i, t) in traj.times.iter().enumerate() {
        let z = traj.noise[i].z;
        let l = traj.l_exp[i];
        let mut line = format!("{t},{},{}", z.re, z.im);
        for q in &traj.hidden[i] {
            line.push_str(&format!(",{q}"));
        }
        line.push_str(&format!(",{},{}", l.re, l.im));
        for v in &traj.observables[i] {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn matrix_pairs(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn matrix_reals(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Debug, Serialize)]
pub struct HiddenMomentsOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_std_err: Vec<f64>,
    pub variance_std_err: Vec<f64>,
    pub ref_mean: Vec<f64>,
    pub ref_variance: Vec<Option<f64>>,
}

#[derive(Debug, Serialize)]
pub struct ObservableOutput {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct CheckpointOutput {
    pub t: f64,
    /// Row-major [re, im] pairs.
    pub rho_estimate: Vec<Vec<[f64; 2]>>,
    pub rho_exact: Vec<Vec<[f64; 2]>>,
    pub std_err_re: Vec<Vec<f64>>,
    pub std_err_im: Vec<Vec<f64>>,
    pub trace_distance: f64,
    pub observables: Vec<ObservableOutput>,
    pub hidden_moments: HiddenMomentsOutput,
}

#[derive(Debug, Serialize)]
pub struct EnsembleOutput {
    pub version: String,
    /// Input config with the worker count masked: scheduling does not affect
    /// the data, and equal configs must serialize to equal bytes.
    pub config: serde_json::Value,
    pub n_traj: usize,
    pub completed: usize,
    pub failures: usize,
    pub status: String,
    pub checkpoints: Vec<CheckpointOutput>,
}

pub fn ensemble_output(
    result: &EnsembleResult,
    mut config_echo: serde_json::Value,
    observables: &[(String, DMatrix<C64>)],
) -> EnsembleOutput {
    if let Some(workers) = config_echo
        .get_mut("ensemble")
        .and_then(|e| e.get_mut("workers"))
    {
        *workers = serde_json::Value::Null;
    }
    let checkpoints = result
        .checkpoints
        .iter()
        .map(|cp| {
            let observables = observables
                .iter()
                .map(|(name, m)| ObservableOutput {
                    name: name.clone(),
                    value: (&cp.rho.entries * m).trace().re,
                })
                .collect();
            CheckpointOutput {
                t: cp.t,
                rho_estimate: matrix_pairs(&cp.rho.entries),
                rho_exact: matrix_pairs(&cp.exact.entries),
                std_err_re: matrix_reals(&cp.std_err_re),
                std_err_im: matrix_reals(&cp.std_err_im),
                trace_distance: cp.trace_distance,
                observables,
                hidden_moments: HiddenMomentsOutput {
                    mean: cp.hidden.mean.clone(),
                    variance: cp.hidden.variance.clone(),
                    mean_std_err: cp.hidden.mean_std_err.clone(),
                    variance_std_err: cp.hidden.variance_std_err.clone(),
                    ref_mean: cp.hidden.ref_mean.clone(),
                    ref_variance: cp.hidden.ref_variance.clone(),
                },
            }
        })
        .collect();
    EnsembleOutput {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config_echo,
        n_traj: result.n_traj,
        completed: result.completed,
        failures: result.failures,
        status: match &result.status {
            modaltraj::ensemble::EnsembleStatus::Passed => "passed".into(),
            modaltraj::ensemble::EnsembleStatus::Failed(msg) => format!("failed: {msg}"),
        },
        checkpoints,
    }
}

#[derive(Debug, Serialize)]
pub struct BellOutput {
    pub version: String,
    pub runs: usize,
    pub master_seed: u64,
    pub dt: f64,
    /// Checkpoint times snapped to the step lattice.
    pub times: Vec<f64>,
    /// Empirical occupation frequency per checkpoint, per decomposition member.
    pub empirical: Vec<Vec<f64>>,
    /// Born probabilities of the guiding state at the same times.
    pub exact: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CheckOutput {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub version: String,
    pub suite: String,
    pub scale: String,
    pub all_pass: bool,
    pub checks: Vec<CheckOutput>,
}

pub fn verify_report(suite: &str, scale: &str, checks: &[CheckResult]) -> VerifyReport {
    VerifyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        suite: suite.to_string(),
        scale: scale.to_string(),
        all_pass: checks.iter().all(|c| c.pass),
        checks: checks
            .iter()
            .map(|c| CheckOutput {
                name: c.name.clone(),
                measured: c.measured,
                threshold: c.threshold,
                pass: c.pass,
                detail: c.detail.clone(),
            })
            .collect(),
    }
}
