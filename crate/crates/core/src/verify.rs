//! Verification batteries over canned reference models: velocity-oracle
//! equality, propagator validity, ensemble reconstruction and equivariance,
//! the Markovian limit, Bell-jump equivariance, and determinism. Each check
//! reports a measured value against its threshold so reports are
//! machine-readable.

use nalgebra::{DMatrix, DVector};

use crate::bath::{
    check_symmetric_pairs, sigma_minus, BathSpec, ModeSpec, SystemSpec,
    UniverseHamiltonian,
};
use crate::bell;
use crate::conditioning::condition;
use crate::ensemble::{
    lindblad_oracle, run_ensemble, trace_distance, EnsembleConfig, EnsembleResult,
};
use crate::error::Result;
use crate::linalg::basis::BasisDescriptor;
use crate::linalg::state::{StateVector, SystemOperator};
use crate::propagator::{evolve, GuidingStateGrid, IntegratorConfig};
use crate::unraveling::{
    sample_initial, velocity_closed, velocity_general, RngStream, Unraveling,
};
use crate::C64;

/// One verification check: measured value, threshold, verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn bounded(name: impl Into<String>, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            pass: measured <= threshold && measured.is_finite(),
            detail: detail.into(),
        }
    }
}

/// Reduced-size models for the CLI battery vs the full reference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Two-level system, L̂ = σ₋, Ĥ_int = 0, starting in the excited state.
pub fn decaying_two_level() -> SystemSpec {
    SystemSpec::new(
        SystemOperator::hermitian(DMatrix::zeros(2, 2)).unwrap(),
        SystemOperator::general(sigma_minus()).unwrap(),
        DVector::from_row_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
    )
    .unwrap()
}

/// The standard two-mode reference bath: detunings ±1, couplings 0.4.
pub fn standard_two_mode_bath() -> BathSpec {
    BathSpec::new(vec![
        ModeSpec { detuning: 1.0, coupling: 0.4 },
        ModeSpec { detuning: -1.0, coupling: 0.4 },
    ])
    .unwrap()
}

/// Flat-band decay bath with rate `gamma`: couplings g = √(γΔ/2π) on a
/// uniform detuning grid of spacing Δ = 0.2 over [-10, 10]. The symmetric
/// variant (needed for quadrature pairing) offsets the grid by Δ/2 so no mode
/// sits at zero detuning; the plain variant includes the zero mode (K = 101).
pub fn flat_band_bath(gamma: f64, symmetric_pairs: bool) -> BathSpec {
    let delta = 0.2f64;
    let g = (gamma * delta / (2.0 * std::f64::consts::PI)).sqrt();
    let modes = if symmetric_pairs {
        let mut v = Vec::with_capacity(100);
        for j in 0..50 {
            let d = 0.1 + delta * j as f64;
            v.push(ModeSpec { detuning: d, coupling: g });
            v.push(ModeSpec { detuning: -d, coupling: g });
        }
        v
    } else {
        (0..101)
            .map(|j| ModeSpec { detuning: -10.0 + delta * j as f64, coupling: g })
            .collect()
    };
    BathSpec::new(modes).unwrap()
}

/// Guiding grid for a system ⊗ vacuum start.
pub fn build_grid(
    sys: &SystemSpec,
    bath: &BathSpec,
    basis: BasisDescriptor,
    cfg: &IntegratorConfig,
) -> Result<GuidingStateGrid> {
    cfg.validate(bath.max_abs_detuning())?;
    let h = UniverseHamiltonian::new(sys, bath, basis)?;
    let initial = StateVector::from_system_and_vacuum(basis, sys.initial.as_slice(), 0.0)?;
    evolve(&initial, &h, cfg)
}

/// Velocity-field dual-route check: the closed-form drift against the
/// commutator-form drift on random (state, hidden values, t) probes, for all
/// three unravelings. `corrupt_closed_sign` is a negative-control hook that
/// flips the closed-form sign so the check must fail.
pub fn velocity_battery(probes_per_unraveling: usize, corrupt_closed_sign: bool) -> Result<Vec<CheckResult>> {
    let basis = BasisDescriptor::dense_fock(2, 2, 4)?;
    let sys = decaying_two_level();
    let bath = standard_two_mode_bath();
    let pairing = check_symmetric_pairs(&bath)?;
    let h = UniverseHamiltonian::new(&sys, &bath, basis)?;
    let mut out = Vec::new();
    for (name, unr) in [
        ("position", Unraveling::Position),
        ("quadrature", Unraveling::Quadrature),
        ("coherent", Unraveling::Coherent),
    ] {
        let mut rng = RngStream { master_seed: 0xC0FFEE, trajectory_index: 7 }.rng();
        let mut max_rel = 0.0f64;
        for probe in 0..probes_per_unraveling {
            let state = random_state_below_edge(basis, 5000 + probe as u64);
            let t = rand::Rng::random::<f64>(&mut rng) * 4.0;
            let hv = sample_initial(unr, &bath, Some(&pairing), &mut rng)?;
            let cs = condition(&state, &hv, Some(&pairing))?;
            let l_exp = sys.lowering.expectation(&cs.ket);
            let mut closed = velocity_closed(unr, l_exp, &bath, Some(&pairing), t);
            if corrupt_closed_sign {
                for v in &mut closed {
                    *v = -*v;
                }
            }
            let general = velocity_general(&state, &hv, t, &h, Some(&pairing))?;
            for (a, b) in closed.iter().zip(&general) {
                max_rel = max_rel.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        out.push(CheckResult::bounded(
            format!("velocity-oracle equality ({name})"),
            max_rel,
            1e-8,
            format!("{probes_per_unraveling} probes, max relative deviation"),
        ));
    }
    Ok(out)
}

fn random_state_below_edge(basis: BasisDescriptor, seed: u64) -> StateVector {
    let mut rng = RngStream { master_seed: seed, trajectory_index: 0 }.rng();
    let n_max = basis.n_max().unwrap();
    let mut amps = vec![C64::ZERO; basis.total_dim()];
    for (idx, a) in amps.iter_mut().enumerate() {
        let b = idx % basis.bath_dim();
        let ok = (0..basis.modes()).all(|m| basis.fock_level(b, m) + 2 <= n_max);
        if ok {
            *a = c(
                rand::Rng::random::<f64>(&mut rng) - 0.5,
                rand::Rng::random::<f64>(&mut rng) - 0.5,
            );
        }
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    StateVector::new(basis, amps, 0.0).unwrap()
}

/// Propagator validity: vacuum-Rabi analytic oracle, norm drift, RK4 order,
/// and dense-Fock vs single-excitation agreement.
pub fn propagator_battery() -> Result<Vec<CheckResult>> {
    let sys = decaying_two_level();
    let bath = BathSpec::new(vec![ModeSpec { detuning: 0.0, coupling: 1.0 }])?;
    let basis = BasisDescriptor::dense_fock(2, 1, 2)?;
    let mut out = Vec::new();

    let grid = build_grid(&sys, &bath, basis, &IntegratorConfig::new(1e-3, 3.0, 1))?;
    let mut max_err = 0.0f64;
    for i in 0..=30 {
        let t = i as f64 * 0.1;
        let pe = grid.reduced_state(t)?.entries[(0, 0)].re;
        max_err = max_err.max((pe - t.cos().powi(2)).abs());
    }
    out.push(CheckResult::bounded(
        "propagator vacuum-Rabi oracle",
        max_err,
        1e-8,
        "max |P_e - cos² t| over t in [0, 3], dt = 1e-3",
    ));
    out.push(CheckResult::bounded(
        "propagator norm drift per unit time",
        grid.max_norm_drift / 3.0,
        1e-8,
        "max |‖Ψ‖ - 1| / t_final",
    ));

    let mut errs = Vec::new();
    for dt in [0.02, 0.01] {
        let g = build_grid(&sys, &bath, basis, &IntegratorConfig::new(dt, 1.0, 1))?;
        let pe = g.reduced_state(1.0)?.entries[(0, 0)].re;
        errs.push((pe - 1.0f64.cos().powi(2)).abs());
    }
    let ratio = errs[0] / errs[1];
    out.push(CheckResult {
        name: "propagator RK4 dt-halving ratio".into(),
        measured: ratio,
        threshold: 20.0,
        pass: (12.0..=20.0).contains(&ratio),
        detail: "expected within [12, 20] (nominal 16)".into(),
    });

    let se_basis = BasisDescriptor::single_excitation(2, 1)?;
    let se_grid = build_grid(&sys, &bath, se_basis, &IntegratorConfig::new(1e-2, 1.0, 1))?;
    let df_grid = build_grid(&sys, &bath, basis, &IntegratorConfig::new(1e-2, 1.0, 1))?;
    let mut max_dev = 0.0f64;
    for i in 0..=10 {
        let t = i as f64 * 0.1;
        let a = se_grid.reduced_state(t)?.entries[(0, 0)].re;
        let b = df_grid.reduced_state(t)?.entries[(0, 0)].re;
        max_dev = max_dev.max((a - b).abs());
    }
    out.push(CheckResult::bounded(
        "propagator backend agreement",
        max_dev,
        1e-6,
        "dense-Fock vs single-excitation P_e over shared model",
    ));
    Ok(out)
}

/// The three standard-model ensembles and every check that hangs off them:
/// fixed-time reconstruction, equivariance transport, cross-unraveling
/// agreement, and the node-failure budget.
pub struct StandardModelReport {
    pub checks: Vec<CheckResult>,
    pub results: Vec<(Unraveling, EnsembleResult)>,
}

pub fn standard_model_battery(scale: Scale, master_seed: u64) -> Result<StandardModelReport> {
    let (n_traj, dt, t_final, checkpoints): (usize, f64, f64, Vec<f64>) = match scale {
        Scale::Full => (2000, 1e-3, 3.0, vec![1.0, 2.0, 3.0]),
        Scale::Quick => (300, 5e-3, 1.5, vec![0.75, 1.5]),
    };
    let sys = decaying_two_level();
    let bath = standard_two_mode_bath();
    let pairing = check_symmetric_pairs(&bath)?;
    let basis = BasisDescriptor::dense_fock(2, 2, 3)?;
    let grid = build_grid(&sys, &bath, basis, &IntegratorConfig::new(dt, t_final, 1))?;

    let mut checks = Vec::new();
    let mut results = Vec::new();
    for (name, unr) in [
        ("position", Unraveling::Position),
        ("quadrature", Unraveling::Quadrature),
        ("coherent", Unraveling::Coherent),
    ] {
        let cfg = EnsembleConfig {
            n_traj,
            master_seed,
            worker_count: 8,
            checkpoints: checkpoints.clone(),
        };
        let res = run_ensemble(&grid, &sys, &bath, Some(&pairing), unr, &cfg)?;
        // The reference configuration pins the bound at 0.05; reduced runs
        // widen it by the Monte Carlo scale 3/√M.
        let bound = match scale {
            Scale::Full => 0.05,
            Scale::Quick => (0.05f64).max(3.0 / (n_traj as f64).sqrt()),
        };
        checks.push(CheckResult::bounded(
            format!("reconstruction trace distance ({name})"),
            res.max_trace_distance(),
            bound,
            format!("max over checkpoints {checkpoints:?}, M = {n_traj}"),
        ));
        let mut max_sigma = 0.0f64;
        for cp in &res.checkpoints {
            let h = &cp.hidden;
            for k in 0..h.mean.len() {
                let se = h.mean_std_err[k].max(1e-12);
                max_sigma = max_sigma.max((h.mean[k] - h.ref_mean[k]).abs() / se);
                if let Some(rv) = h.ref_variance[k] {
                    let se = h.variance_std_err[k].max(1e-12);
                    max_sigma = max_sigma.max((h.variance[k] - rv).abs() / se);
                }
            }
        }
        checks.push(CheckResult::bounded(
            format!("equivariance transport ({name})"),
            max_sigma,
            3.0,
            "max |empirical - quantum reference| in standard errors, means and variances",
        ));
        checks.push(CheckResult::bounded(
            format!("node-failure rate ({name})"),
            res.failure_rate(),
            0.005,
            format!("{} of {} trajectories", res.failures, res.n_traj),
        ));
        results.push((unr, res));
    }

    let mut max_pairwise = 0.0f64;
    for i in 0..results.len() {
        for j in 0..i {
            for (ca, cb) in results[i].1.checkpoints.iter().zip(&results[j].1.checkpoints) {
                max_pairwise = max_pairwise.max(trace_distance(&ca.rho, &cb.rho));
            }
        }
    }
    let pair_bound = match scale {
        Scale::Full => 0.10,
        Scale::Quick => 2.0 * (0.05f64).max(3.0 / (n_traj as f64).sqrt()),
    };
    checks.push(CheckResult::bounded(
        "cross-unraveling agreement",
        max_pairwise,
        pair_bound,
        "pairwise trace distance between the three estimates",
    ));
    Ok(StandardModelReport { checks, results })
}

/// Markovian-limit check on the flat-band decay model: the ensemble's excited
/// population against e^{-γt} and the Lindblad reference, for the quadrature
/// and coherent unravelings (the position unraveling has no Markovian limit).
///
/// `include_onset_window` adds the t = 0.2 point. That point lies two bath
/// correlation times (1/W = 0.1) into the evolution, where the finite band
/// delays the decay onset: the exact universe dynamics itself sits ≈ 0.07
/// above the exponential there, so the 0.05 band cannot hold — the check
/// documents that physical limitation rather than hiding it.
pub fn markovian_battery(
    scale: Scale,
    master_seed: u64,
    include_onset_window: bool,
) -> Result<Vec<CheckResult>> {
    let gamma = 1.0;
    let n_traj = match scale {
        Scale::Full => 1000,
        Scale::Quick => 200,
    };
    let mut checkpoints = vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    if include_onset_window {
        checkpoints.insert(0, 0.2);
    }
    let sys = decaying_two_level();
    let mut out = Vec::new();
    for (name, unr) in [
        ("quadrature", Unraveling::Quadrature),
        ("coherent", Unraveling::Coherent),
    ] {
        let bath = flat_band_bath(gamma, unr == Unraveling::Quadrature);
        let pairing = if unr == Unraveling::Quadrature {
            Some(check_symmetric_pairs(&bath)?)
        } else {
            None
        };
        let basis = BasisDescriptor::single_excitation(2, bath.len())?;
        let grid = build_grid(&sys, &bath, basis, &IntegratorConfig::new(0.01, 3.0, 1))?;
        let cfg = EnsembleConfig {
            n_traj,
            master_seed,
            worker_count: 8,
            checkpoints: checkpoints.clone(),
        };
        let res = run_ensemble(&grid, &sys, &bath, pairing.as_ref(), unr, &cfg)?;
        // Cross-check the target curve against the Lindblad integrator.
        let oracle = lindblad_oracle(
            &DMatrix::zeros(2, 2),
            &sigma_minus(),
            gamma,
            &DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), C64::ZERO, C64::ZERO, C64::ZERO]),
            0.01,
            300,
        )?;
        let mut max_dev = 0.0f64;
        let mut details = String::new();
        for cp in &res.checkpoints {
            let pe = cp.rho.entries[(0, 0)].re;
            let target = (-gamma * cp.t).exp();
            let oracle_pe = oracle[(cp.t / 0.01).round() as usize].1.entries[(0, 0)].re;
            debug_assert!((oracle_pe - target).abs() < 1e-9);
            let dev = (pe - target).abs().max((pe - oracle_pe).abs());
            max_dev = max_dev.max(dev);
            details.push_str(&format!("t={}: P_e={:.4} vs e^-γt={:.4}; ", cp.t, pe, target));
        }
        out.push(CheckResult::bounded(
            format!("markovian limit ({name})"),
            max_dev,
            0.05,
            details.trim_end_matches("; ").to_string(),
        ));
        out.push(CheckResult::bounded(
            format!("node-failure rate (markovian {name})"),
            res.failure_rate(),
            0.005,
            format!("{} of {} trajectories", res.failures, res.n_traj),
        ));
    }
    Ok(out)
}

/// Bell-jump equivariance on the two-level Rabi model (Ĥ = σ_x/2, σ_z
/// decomposition) plus the exact rate identities.
pub fn bell_battery(scale: Scale, master_seed: u64) -> Result<Vec<CheckResult>> {
    let runs = match scale {
        Scale::Full => 10_000,
        Scale::Quick => 2_000,
    };
    let h = DMatrix::from_row_slice(2, 2, &[C64::ZERO, c(0.5, 0.0), c(0.5, 0.0), C64::ZERO]);
    let dec = bell::Decomposition::computational_basis(2);
    let psi0 = DVector::from_row_slice(&[c(1.0, 0.0), C64::ZERO]);
    let dt = 1e-3;
    let t_final = std::f64::consts::PI;
    let n_steps = (t_final / dt).round() as usize;
    let grid = bell::evolve_dense(&h, &psi0, dt, n_steps)?;
    let process = bell::prepare_jump_process(&grid, &dec, &h)?;

    let targets: Vec<usize> = [0.25, 0.5, 1.0]
        .iter()
        .map(|f| ((f * t_final) / dt).round() as usize)
        .collect();
    let mut counts = vec![0usize; targets.len()];
    for idx in 0..runs {
        let path = bell::simulate_jump_process(
            &process,
            RngStream { master_seed, trajectory_index: idx as u64 },
            None,
        );
        for (slot, step) in targets.iter().enumerate() {
            if path[*step] == 1 {
                counts[slot] += 1;
            }
        }
    }
    let mut max_dev = 0.0f64;
    let mut detail = String::new();
    for (slot, step) in targets.iter().enumerate() {
        let empirical = counts[slot] as f64 / runs as f64;
        let exact = bell::probabilities(&grid.states[*step], &dec)[1];
        max_dev = max_dev.max((empirical - exact).abs());
        detail.push_str(&format!(
            "t={:.3}: empirical {:.4} vs exact {:.4}; ",
            *step as f64 * dt,
            empirical,
            exact
        ));
    }
    let mut out = vec![CheckResult::bounded(
        "bell jump equivariance",
        max_dev,
        0.02,
        detail.trim_end_matches("; ").to_string(),
    )];

    // Exact identities on random models.
    let mut rng = RngStream { master_seed: 17, trajectory_index: 0 }.rng();
    let mut recon_dev = 0.0f64;
    let mut antisym_ok = true;
    let mut rates_nonneg = true;
    for _ in 0..25 {
        let dim = 4;
        let raw = DMatrix::from_fn(dim, dim, |_, _| {
            c(
                rand::Rng::random::<f64>(&mut rng) - 0.5,
                rand::Rng::random::<f64>(&mut rng) - 0.5,
            )
        });
        let hr = (&raw + raw.adjoint()) * c(0.5, 0.0);
        let mut ket = DVector::from_fn(dim, |_, _| {
            c(
                rand::Rng::random::<f64>(&mut rng) + 0.05,
                rand::Rng::random::<f64>(&mut rng) - 0.5,
            )
        });
        let norm = ket.norm();
        ket /= c(norm, 0.0);
        let decomp = bell::Decomposition::computational_basis(dim);
        let p = bell::probabilities(&ket, &decomp);
        let j = bell::current_matrix(&ket, &decomp, &hr);
        for a in 0..dim {
            for b in 0..dim {
                if a != b && j[(a, b)].to_bits() != (-j[(b, a)]).to_bits() {
                    antisym_ok = false;
                }
            }
        }
        let t = bell::bell_rates(&j, &p)?;
        if t.iter().any(|v| *v < 0.0) {
            rates_nonneg = false;
        }
        for a in 0..dim {
            for b in 0..dim {
                if a != b {
                    recon_dev = recon_dev.max((t[(a, b)] * p[b] - t[(b, a)] * p[a] - j[(a, b)]).abs());
                }
            }
        }
    }
    out.push(CheckResult {
        name: "bell current antisymmetry (bitwise)".into(),
        measured: if antisym_ok { 0.0 } else { 1.0 },
        threshold: 0.0,
        pass: antisym_ok,
        detail: "J_nm = -J_mn by construction".into(),
    });
    out.push(CheckResult {
        name: "bell rates nonnegative".into(),
        measured: if rates_nonneg { 0.0 } else { 1.0 },
        threshold: 0.0,
        pass: rates_nonneg,
        detail: "T ≥ 0 entrywise".into(),
    });
    out.push(CheckResult::bounded(
        "bell current reconstruction",
        recon_dev,
        1e-12,
        "max |T_nm P_m - T_mn P_n - J_nm| over random models",
    ));
    Ok(out)
}

/// Determinism: identical results for worker counts 1 and 8 under a fixed
/// master seed, for each unraveling.
pub fn determinism_battery(master_seed: u64) -> Result<Vec<CheckResult>> {
    let sys = decaying_two_level();
    let bath = standard_two_mode_bath();
    let pairing = check_symmetric_pairs(&bath)?;
    let basis = BasisDescriptor::dense_fock(2, 2, 3)?;
    let grid = build_grid(&sys, &bath, basis, &IntegratorConfig::new(5e-3, 1.0, 1))?;
    let mut out = Vec::new();
    for (name, unr) in [
        ("position", Unraveling::Position),
        ("quadrature", Unraveling::Quadrature),
        ("coherent", Unraveling::Coherent),
    ] {
        let mut pair = Vec::new();
        for workers in [1usize, 8] {
            let cfg = EnsembleConfig {
                n_traj: 100,
                master_seed,
                worker_count: workers,
                checkpoints: vec![0.5, 1.0],
            };
            let mut res = run_ensemble(&grid, &sys, &bath, Some(&pairing), unr, &cfg)?;
            res.worker_count = 0; // echoed config field, not part of the data
            pair.push(res);
        }
        let identical = pair[0] == pair[1];
        out.push(CheckResult {
            name: format!("determinism across worker counts ({name})"),
            measured: if identical { 0.0 } else { 1.0 },
            threshold: 0.0,
            pass: identical,
            detail: "bitwise-equal ensemble results for 1 vs 8 workers".into(),
        });
    }
    Ok(out)
}

/// Named suites for the command-line battery.
pub fn run_suite(name: &str, scale: Scale, corrupt_velocity_sign: bool) -> Result<Vec<CheckResult>> {
    let probes = match scale {
        Scale::Full => 100,
        Scale::Quick => 30,
    };
    let seed = 0x5EED_2024u64;
    let mut checks = Vec::new();
    let all = name == "all";
    if all || name == "velocity" {
        checks.extend(velocity_battery(probes, corrupt_velocity_sign)?);
    }
    if all || name == "propagator" {
        checks.extend(propagator_battery()?);
    }
    if all || name == "reconstruction" || name == "equivariance" {
        checks.extend(standard_model_battery(scale, seed)?.checks);
    }
    if all || name == "markovian" {
        checks.extend(markovian_battery(scale, seed, false)?);
    }
    if all || name == "bell" {
        checks.extend(bell_battery(scale, seed)?);
    }
    if all || name == "determinism" {
        checks.extend(determinism_battery(seed)?);
    }
    if checks.is_empty() {
        return Err(crate::error::Error::InvalidConfig(format!(
            "unknown verification suite '{name}' (expected one of: all, velocity, propagator, reconstruction, equivariance, markovian, bell, determinism)"
        )));
    }
    Ok(checks)
}
