//! Command-line front end: configuration ingestion, the simulate / ensemble /
//! verify / bell subcommands, and bit-exact serialization of their outputs.
//!
//! Exit codes: 0 success; 1 usage or config error; 2 physics-validity failure
//! (norm drift, truncation loss, node-failure rate); 3 verification failure.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modaltraj::bell;
use modaltraj::ensemble::{run_ensemble, EnsembleConfig, EnsembleStatus};
use modaltraj::error::Error as ModelError;
use modaltraj::linalg::state::SystemOperator;
use modaltraj::propagator::IntegratorConfig;
use modaltraj::unraveling::{
    integrate_trajectory, RngStream, TrajectoryOptions, TrajectoryStatus,
};
use modaltraj::verify::{run_suite, Scale};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Physics(String),
    Verification(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Physics(m) => write!(f, "physics-validity failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failure: {m}"),
        }
    }
}

impl CliError {
    fn from_model(e: ModelError) -> Self {
        match e {
            ModelError::NormDrift { .. }
            | ModelError::TruncationLoss { .. }
            | ModelError::NodeEncountered { .. }
            | ModelError::FailureRate { .. } => CliError::Physics(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Physics(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "modaltraj",
    version,
    about = "Hidden-variable bath trajectories for open quantum systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate individual trajectories and write them as CSV.
    Simulate {
        /// Path to the JSON run configuration.
        config: PathBuf,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of trajectories (indices 0..count) to write.
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Run a trajectory ensemble and write the reconstruction report as JSON.
    Ensemble {
        /// Path to the JSON run configuration.
        config: PathBuf,
    },
    /// Run a verification suite against bundled reference models.
    Verify {
        /// Suite: all, velocity, propagator, reconstruction, equivariance,
        /// markovian, bell, determinism.
        #[arg(default_value = "all")]
        suite: String,
        /// Run the full-size reference parameters instead of the quick ones.
        #[arg(long)]
        full: bool,
        /// Write the machine-readable report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Negative-control hook: flip the closed-form drift sign so the
        /// velocity-oracle check must fail.
        #[arg(long, hide = true)]
        corrupt_velocity_sign: bool,
    },
    /// Simulate the discrete jump process and tabulate occupation statistics.
    Bell {
        /// Path to the JSON run configuration (requires a "bell" section).
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, count } => cmd_simulate(&config, seed, count),
        Command::Ensemble { config } => cmd_ensemble(&config),
        Command::Verify {
            suite,
            full,
            report,
            corrupt_velocity_sign,
        } => cmd_verify(&suite, full, report.as_deref(), corrupt_velocity_sign),
        Command::Bell { config } => cmd_bell(&config),
    }
}

fn build_grid(
    cfg: &config::RunConfig,
    model: &config::BuiltModel,
) -> Result<modaltraj::propagator::GuidingStateGrid, CliError> {
    let icfg = IntegratorConfig::new(
        cfg.integrator.dt,
        cfg.integrator.t_final,
        cfg.integrator.checkpoint_stride,
    );
    icfg.validate(model.bath.max_abs_detuning())
        .map_err(CliError::from_model)?;
    modaltraj::verify::build_grid(&model.sys, &model.bath, model.basis, &icfg)
        .map_err(CliError::from_model)
}

fn pairing_for(
    cfg: &config::RunConfig,
    model: &config::BuiltModel,
) -> Result<Option<modaltraj::bath::PairingMap>, CliError> {
    if matches!(cfg.unraveling, config::UnravelingConfig::Quadrature) {
        Ok(Some(
            modaltraj::bath::check_symmetric_pairs(&model.bath).map_err(CliError::from_model)?,
        ))
    } else {
        Ok(None)
    }
}

fn cmd_simulate(path: &Path, seed: Option<u64>, count: u64) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let cfg = config::load(path)?;
    let model = config::build_model(&cfg)?;
    let grid = build_grid(&cfg, &model)?;
    let pairing = pairing_for(&cfg, &model)?;
    let master_seed = seed.unwrap_or(cfg.ensemble.master_seed);
    let obs_matrices: Vec<nalgebra::DMatrix<modaltraj::C64>> =
        model.observables.iter().map(|(_, m)| m.clone()).collect();
    let obs_names: Vec<String> = model.observables.iter().map(|(n, _)| n.clone()).collect();
    let base = cfg
        .outputs
        .as_ref()
        .and_then(|o| o.trajectory.clone())
        .unwrap_or_else(|| "trajectory.csv".into());

    let mut any_node_failure = None;
    for index in 0..count {
        let traj = integrate_trajectory(
            &grid,
            &model.sys,
            &model.bath,
            pairing.as_ref(),
            cfg.unraveling.into(),
            RngStream {
                master_seed,
                trajectory_index: index,
            },
            &TrajectoryOptions {
                observables: &obs_matrices,
                ..Default::default()
            },
        )
        .map_err(CliError::from_model)?;
        let out_path = indexed_path(&base, index, count);
        let file = std::fs::File::create(&out_path)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out_path.display())))?;
        output::write_trajectory_csv(std::io::BufWriter::new(file), &traj, &obs_names)
            .map_err(|e| CliError::Usage(format!("writing {}: {e}", out_path.display())))?;
        if let TrajectoryStatus::NodeFailure { t } = traj.status {
            any_node_failure = Some((index, t));
        }
        eprintln!("wrote {}", out_path.display());
    }
    if let Some((index, t)) = any_node_failure {
        return Err(CliError::Physics(format!(
            "trajectory {index} hit a wavefunction node at t = {t}; partial series written"
        )));
    }
    Ok(())
}

fn indexed_path(base: &str, index: u64, count: u64) -> PathBuf {
    if count == 1 {
        return PathBuf::from(base);
    }
    let p = Path::new(base);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
    let ext = p.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    p.with_file_name(format!("{stem}_{index}.{ext}"))
}

fn cmd_ensemble(path: &Path) -> Result<(), CliError> {
    let cfg = config::load(path)?;
    let model = config::build_model(&cfg)?;
    let grid = build_grid(&cfg, &model)?;
    let pairing = pairing_for(&cfg, &model)?;
    let ecfg = EnsembleConfig {
        n_traj: cfg.ensemble.n_traj,
        master_seed: cfg.ensemble.master_seed,
        worker_count: cfg.ensemble.workers,
        checkpoints: cfg.ensemble.checkpoints.clone(),
    };
    let result = run_ensemble(
        &grid,
        &model.sys,
        &model.bath,
        pairing.as_ref(),
        cfg.unraveling.into(),
        &ecfg,
    )
    .map_err(CliError::from_model)?;

    let echo = serde_json::to_value(&cfg)
        .map_err(|e| CliError::Usage(format!("config echo serialization: {e}")))?;
    let out = output::ensemble_output(&result, echo, &model.observables);
    let out_path = cfg
        .outputs
        .as_ref()
        .and_then(|o| o.ensemble.clone())
        .unwrap_or_else(|| "ensemble.json".into());
    write_json(&out_path, &out)?;
    eprintln!("wrote {out_path}");
    if let EnsembleStatus::Failed(msg) = &result.status {
        return Err(CliError::Physics(msg.clone()));
    }
    Ok(())
}

fn cmd_verify(
    suite: &str,
    full: bool,
    report: Option<&Path>,
    corrupt_velocity_sign: bool,
) -> Result<(), CliError> {
    let scale = if full { Scale::Full } else { Scale::Quick };
    let checks = run_suite(suite, scale, corrupt_velocity_sign).map_err(CliError::from_model)?;
    for c in &checks {
        println!(
            "[{}] {}: measured {:.6e} vs threshold {:.3e} — {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.threshold,
            c.detail
        );
    }
    let rep = output::verify_report(suite, if full { "full" } else { "quick" }, &checks);
    if let Some(path) = report {
        write_json(&path.display().to_string(), &rep)?;
        eprintln!("wrote {}", path.display());
    }
    if !rep.all_pass {
        return Err(CliError::Verification(format!(
            "{} of {} checks failed",
            checks.iter().filter(|c| !c.pass).count(),
            checks.len()
        )));
    }
    Ok(())
}

fn cmd_bell(path: &Path) -> Result<(), CliError> {
    let cfg = config::load(path)?;
    let Some(bcfg) = cfg.bell.clone() else {
        return Err(CliError::Usage(
            "config has no \"bell\" section; the bell subcommand needs one".into(),
        ));
    };
    let h = config::to_matrix(&bcfg.hamiltonian, "bell.hamiltonian")?;
    SystemOperator::hermitian(h.clone()).map_err(CliError::from_model)?;
    let psi0 = config::to_ket(&bcfg.initial_state);
    if (psi0.norm() - 1.0).abs() > 1e-12 {
        return Err(CliError::Usage("bell.initial_state must be normalized".into()));
    }
    let dec = match (&bcfg.projectors, &bcfg.values) {
        (Some(projs), values) => {
            let mats = projs
                .iter()
                .enumerate()
                .map(|(n, p)| config::to_matrix(p, &format!("bell.projectors[{n}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let vals = values
                .clone()
                .unwrap_or_else(|| (0..mats.len()).map(|n| n as f64).collect());
            bell::Decomposition::new(mats, vals).map_err(CliError::from_model)?
        }
        (None, _) => bell::Decomposition::computational_basis(psi0.len()),
    };
    if !(bcfg.dt > 0.0) || !(bcfg.t_final > 0.0) || bcfg.runs == 0 {
        return Err(CliError::Usage(
            "bell.dt, bell.t_final and bell.runs must be positive".into(),
        ));
    }
    let n_steps = (bcfg.t_final / bcfg.dt).round().max(1.0) as usize;
    let grid = bell::evolve_dense(&h, &psi0, bcfg.dt, n_steps).map_err(CliError::from_model)?;
    let process = bell::prepare_jump_process(&grid, &dec, &h).map_err(CliError::from_model)?;

    // Checkpoints snap to the nearest lattice step; the snapped times are
    // what the table reports.
    let steps: Vec<usize> = bcfg
        .checkpoints
        .iter()
        .map(|t| ((t / bcfg.dt).round() as usize).min(n_steps))
        .collect();
    let mut counts = vec![vec![0usize; dec.len()]; steps.len()];
    for run in 0..bcfg.runs {
        let path = bell::simulate_jump_process(
            &process,
            RngStream {
                master_seed: bcfg.master_seed,
                trajectory_index: run as u64,
            },
            None,
        );
        for (slot, step) in steps.iter().enumerate() {
            counts[slot][path[*step]] += 1;
        }
    }
    let out = output::BellOutput {
        version: env!("CARGO_PKG_VERSION").to_string(),
        runs: bcfg.runs,
        master_seed: bcfg.master_seed,
        dt: bcfg.dt,
        times: steps.iter().map(|s| *s as f64 * bcfg.dt).collect(),
        empirical: counts
            .iter()
            .map(|row| row.iter().map(|c| *c as f64 / bcfg.runs as f64).collect())
            .collect(),
        exact: steps
            .iter()
            .map(|s| bell::probabilities(&grid.states[*s], &dec))
            .collect(),
        values: dec.values().to_vec(),
    };
    let out_path = cfg
        .outputs
        .as_ref()
        .and_then(|o| o.bell.clone())
        .unwrap_or_else(|| "bell.json".into());
    write_json(&out_path, &out)?;
    eprintln!("wrote {out_path}");
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &str, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Usage(format!("serialization: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {path}: {e}")))
}
