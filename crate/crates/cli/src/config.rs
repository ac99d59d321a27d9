//! Run configuration: a strict JSON schema (unknown keys rejected) mapped
//! onto the library's model types. Complex numbers are [re, im] pairs;
//! matrices are row-major lists of rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use modaltraj::bath::{BathSpec, ModeSpec, SystemSpec};
use modaltraj::linalg::basis::BasisDescriptor;
use modaltraj::linalg::state::SystemOperator;
use modaltraj::unraveling::Unraveling;
use modaltraj::C64;

use crate::CliError;

pub type Cx = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub backend: BackendConfig,
    pub unraveling: UnravelingConfig,
    pub integrator: IntegratorSection,
    pub ensemble: EnsembleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bell: Option<BellSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub system: SystemSection,
    pub bath: BathSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub h_int: Vec<Vec<Cx>>,
    pub lowering: Vec<Vec<Cx>>,
    pub initial_state: Vec<Cx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub modes: Vec<ModeSection>,
    #[serde(default = "default_vacuum")]
    pub initial: String,
}

fn default_vacuum() -> String {
    "vacuum".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub detuning: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    DenseFock { n_max: usize },
    SingleExcitation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnravelingConfig {
    Position,
    Quadrature,
    Coherent,
}

impl From<UnravelingConfig> for Unraveling {
    fn from(u: UnravelingConfig) -> Self {
        match u {
            UnravelingConfig::Position => Unraveling::Position,
            UnravelingConfig::Quadrature => Unraveling::Quadrature,
            UnravelingConfig::Coherent => Unraveling::Coherent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub checkpoint_stride: usize,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub observables: Vec<ObservableSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSection {
    pub name: String,
    pub matrix: Vec<Vec<Cx>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bell: Option<String>,
}

/// Discrete jump-process model: Hamiltonian, initial ket, and either an
/// explicit projector list (a Naimark extension when realizing a POM) or the
/// computational basis by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellSection {
    pub hamiltonian: Vec<Vec<Cx>>,
    pub initial_state: Vec<Cx>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projectors: Option<Vec<Vec<Vec<Cx>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    pub dt: f64,
    pub t_final: f64,
    pub runs: usize,
    pub master_seed: u64,
    pub checkpoints: Vec<f64>,
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Deserialize with field-path diagnostics, so a typo'd key reports where it
/// sits in the tree (e.g. `model.bath.modes[0]`).
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        CliError::Usage(format!(
            "config schema violation at `{}`: {}",
            e.path(),
            e.inner()
        ))
    })
}

pub fn to_matrix(rows: &[Vec<Cx>], what: &str) -> Result<DMatrix<C64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Usage(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

pub fn to_ket(entries: &[Cx]) -> DVector<C64> {
    DVector::from_iterator(entries.len(), entries.iter().map(|c| C64::new(c[0], c[1])))
}

pub struct BuiltModel {
    pub sys: SystemSpec,
    pub bath: BathSpec,
    pub basis: BasisDescriptor,
    pub observables: Vec<(String, DMatrix<C64>)>,
}

pub fn build_model(cfg: &RunConfig) -> Result<BuiltModel, CliError> {
    if cfg.model.bath.initial != "vacuum" {
        return Err(CliError::Usage(format!(
            "bath.initial must be \"vacuum\" (got \"{}\")",
            cfg.model.bath.initial
        )));
    }
    let h_int = SystemOperator::hermitian(to_matrix(&cfg.model.system.h_int, "system.h_int")?)
        .map_err(CliError::from_model)?;
    let lowering = SystemOperator::general(to_matrix(&cfg.model.system.lowering, "system.lowering")?)
        .map_err(CliError::from_model)?;
    let initial = to_ket(&cfg.model.system.initial_state);
    let sys = SystemSpec::new(h_int, lowering, initial).map_err(CliError::from_model)?;
    let modes: Vec<ModeSpec> = cfg
        .model
        .bath
        .modes
        .iter()
        .map(|m| ModeSpec {
            detuning: m.detuning,
            coupling: m.coupling,
        })
        .collect();
    let bath = BathSpec::new(modes).map_err(CliError::from_model)?;
    let basis = match cfg.backend {
        BackendConfig::DenseFock { n_max } => {
            BasisDescriptor::dense_fock(sys.dim, bath.len(), n_max)
        }
        BackendConfig::SingleExcitation => BasisDescriptor::single_excitation(sys.dim, bath.len()),
    }
    .map_err(CliError::from_model)?;
    let mut observables = Vec::new();
    for obs in &cfg.ensemble.observables {
        if obs.name.contains(',') || obs.name.contains('\n') {
            return Err(CliError::Usage(format!(
                "observable name {:?} may not contain commas or newlines",
                obs.name
            )));
        }
        let m = to_matrix(&obs.matrix, &format!("observable {}", obs.name))?;
        SystemOperator::hermitian(m.clone()).map_err(CliError::from_model)?;
        if m.nrows() != sys.dim {
            return Err(CliError::Usage(format!(
                "observable {} has dimension {}, system has {}",
                obs.name,
                m.nrows(),
                sys.dim
            )));
        }
        observables.push((obs.name.clone(), m));
    }
    Ok(BuiltModel {
        sys,
        bath,
        basis,
        observables,
    })
}
