//! Command-line experiments: configuration, execution and artifact emission.

mod config;
mod output;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde_json::json;
use thiserror::Error;

pub use config::{
    parse_config, preset_config, CollapseFamily, ConfigError, CqParams, DpParams, Experiment, JzParams,
    LindbladParams, Parameters, QsdParams, RunConfig, SweepParams, SystemParams,
};
pub use output::Artifact;

use crate::constants::{au_to_fs, FS_PER_AU};
use crate::cq::{ClassicalState, CqToyConfig};
use crate::ensemble::{median, poisson_chi_square, run_cq_ensemble, run_qsd_ensemble, trace_distance, EnsembleConfig};
use crate::hilbert::{DensityOperator, HermitianOperator, StateVector, C64};
use crate::lindblad::{propagate_series, MasterEquationModel};
use crate::qsd::{
    make_hamiltonian_model, make_number_model, make_position_model, site_number_operators, CollapseModel, QsdConfig,
};
use crate::timescales::{
    coherence_decay, dp_evaluate, dp_mass_sweep_with, joos_zeh_localization_rate, joos_zeh_tau, GasParameters,
    MassDistribution, SphereLattice,
};
use output::{fmt_f64, Csv, Outputs};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    /// 2 for configuration errors, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

/// Command-line overrides. Worker count never affects outputs.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
    /// One-line human summary.
    pub summary: String,
}

/// Runs an experiment and writes its artifacts plus `manifest.json`.
pub fn execute(config: &RunConfig, options: &Options) -> Result<RunReport, RunError> {
    let seed = options.seed.or(config.seed);
    let workers = options.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(ConfigError::Validation { key: "workers".into(), message: "must be at least 1".into() }.into());
    }
    let output_dir = options
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(config.experiment.name()));
    let need_seed = || {
        seed.ok_or_else(|| RunError::Config(ConfigError::Validation { key: "seed".into(), message: "missing".into() }))
    };
    let mut out = Outputs::default();
    let summary = match &config.parameters {
        Parameters::Qsd(p) => run_qsd(p, need_seed()?, workers, &mut out)?,
        Parameters::Cq(p) => run_cq(p, need_seed()?, workers, &mut out)?,
        Parameters::Lindblad(p) => run_lindblad(p, &mut out)?,
        Parameters::Jz(p) => run_jz(p, &mut out)?,
        Parameters::Dp(p) => run_dp(p, &mut out)?,
        Parameters::Sweep(p) => run_sweep(p, &mut out)?,
    };
    let manifest = json!({
        "tool": "collapse-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": config.experiment,
        "seed": seed,
        "parameters": config.parameters,
    });
    let artifacts = out.write(&output_dir, manifest).map_err(|e| RunError::Io(e.to_string()))?;
    Ok(RunReport { output_dir, artifacts, summary })
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// H with `energies` on the diagonal and `-tunneling` between neighbours.
pub fn build_hamiltonian(system: &SystemParams) -> Result<HermitianOperator, RunError> {
    let n = system.energies.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(system.energies[i], 0.0)
        } else if i.abs_diff(j) == 1 {
            C64::new(-system.tunneling, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    HermitianOperator::new(m).map_err(numerical)
}

pub fn build_collapse_model(system: &SystemParams, eta: f64) -> Result<CollapseModel, RunError> {
    let h = build_hamiltonian(system)?;
    let n = system.energies.len();
    let model = match system.collapse {
        CollapseFamily::Hamiltonian => make_hamiltonian_model(h, eta),
        CollapseFamily::Position => {
            let default: Vec<f64> = (0..n).map(|i| i as f64).collect();
            make_position_model(h, system.positions.as_deref().unwrap_or(&default), eta)
        }
        CollapseFamily::Number => make_number_model(h, site_number_operators(n).map_err(numerical)?, eta),
    };
    model.map_err(numerical)
}

fn initial_state(system: &SystemParams) -> Result<StateVector, RunError> {
    StateVector::from_real(&system.psi0).and_then(|s| s.normalize()).map_err(numerical)
}

fn run_qsd(p: &QsdParams, seed: u64, workers: usize, out: &mut Outputs) -> Result<String, RunError> {
    let model = build_collapse_model(&p.system, p.eta)?;
    let psi0 = initial_state(&p.system)?;
    let config = QsdConfig { dt: p.dt, t_max: p.t_max, record_stride: p.record_stride, collapse_epsilon: p.collapse_epsilon };
    let ens = EnsembleConfig {
        n_trajectories: p.n_trajectories,
        master_seed: seed,
        workers,
        keep: p.keep_trajectories,
        histogram_bins: p.histogram_bins,
    };
    let e = run_qsd_ensemble(&model, &psi0, &config, &ens).map_err(numerical)?;
    let dim = model.dim();

    let mut traj = Csv::new();
    let mut header = vec!["trajectory".to_string(), "t_au".into(), "t_fs".into()];
    header.extend((0..dim).map(|k| format!("pop_{k}")));
    header.push("pre_norm".into());
    traj.row(header);
    for (i, rec) in e.kept.iter().enumerate() {
        for s in 0..rec.times.len() {
            let mut row = vec![i.to_string(), fmt_f64(rec.times[s]), fmt_f64(au_to_fs(rec.times[s]))];
            row.extend(rec.populations[s].iter().map(|&x| fmt_f64(x)));
            row.push(fmt_f64(rec.norms[s]));
            traj.row(row);
        }
    }
    out.add("trajectories.csv", traj.finish());

    let mut ct = Csv::new();
    ct.row(["trajectory", "outcome", "collapse_time_au", "collapse_time_fs"]);
    for (i, (o, t)) in e.outcomes.iter().zip(&e.collapse_times).enumerate() {
        ct.row([
            i.to_string(),
            o.map_or(String::new(), |k| k.to_string()),
            t.map_or(String::new(), fmt_f64),
            t.map_or(String::new(), |t| fmt_f64(au_to_fs(t))),
        ]);
    }
    out.add("collapse_times.csv", ct.finish());

    // deterministic comparison against the master equation
    let lindblad = MasterEquationModel::from_collapse_model(&model).map_err(numerical)?;
    let oracle_dt = p.oracle_dt.unwrap_or_else(|| lindblad.default_step());
    let rho0 = DensityOperator::from_pure(&psi0).map_err(numerical)?;
    let oracle = propagate_series(&rho0, &lindblad, &e.times, oracle_dt).map_err(numerical)?;
    let basis = model.reference_basis().map_err(numerical)?.basis_vectors();
    let mut dens = Csv::new();
    let mut header = vec!["t_au".to_string(), "t_fs".into()];
    header.extend((0..dim).map(|k| format!("mean_pop_{k}")));
    header.extend((0..dim).map(|k| format!("lindblad_pop_{k}")));
    header.push("trace_distance".into());
    dens.row(header);
    let mut max_td = 0.0_f64;
    for (s, t) in e.times.iter().enumerate() {
        let td = trace_distance(&e.mean_density[s], &oracle[s]).map_err(numerical)?;
        max_td = max_td.max(td);
        let mut row = vec![fmt_f64(*t), fmt_f64(au_to_fs(*t))];
        row.extend(e.mean_populations[s].iter().map(|&x| fmt_f64(x)));
        row.extend(basis.iter().map(|v| fmt_f64(expectation(&oracle[s], v))));
        row.push(fmt_f64(td));
        dens.row(row);
    }
    out.add("ensemble_density.csv", dens.finish());

    let n = p.n_trajectories as f64;
    let resolved: Vec<f64> = e.collapse_times.iter().flatten().copied().collect();
    let median_au = median(&resolved);
    let three_sigma: Vec<f64> = e.stats.expected.iter().map(|q| 3.0 * (q * (1.0 - q) / n).sqrt()).collect();
    let initial = &e.mean_populations[0];
    let final_pops = e.mean_populations.last().expect("at least one record");
    let max_drift: Vec<f64> = (0..dim)
        .map(|k| e.mean_populations.iter().map(|row| (row[k] - initial[k]).abs()).fold(0.0, f64::max))
        .collect();
    let stats = json!({
        "stats": e.stats,
        "unresolved_fraction": e.stats.unresolved as f64 / n,
        "binomial_3sigma": three_sigma,
        "median_collapse_time_au": median_au,
        "median_collapse_time_fs": median_au.map(au_to_fs),
        "fs_per_au": FS_PER_AU,
        "max_pre_norm_drift": e.max_norm_drift,
        "mean_populations_initial": initial,
        "mean_populations_final": final_pops,
        "mean_population_max_drift": max_drift,
        "max_trace_distance_to_lindblad": max_td,
    });
    out.add_json("outcome_stats.json", &stats);

    Ok(format!(
        "frequencies {:?} (expected {:?}), unresolved {}, median collapse {} fs, max trace distance {:.4}",
        e.stats.frequencies,
        e.stats.expected,
        e.stats.unresolved,
        median_au.map_or("n/a".into(), |t| format!("{:.3}", au_to_fs(t))),
        max_td
    ))
}

fn expectation(rho: &DensityOperator, v: &StateVector) -> f64 {
    let a = v.amplitudes();
    (a.adjoint() * rho.matrix() * a)[(0, 0)].re
}

fn run_cq(p: &CqParams, seed: u64, workers: usize, out: &mut Outputs) -> Result<String, RunError> {
    let config = CqToyConfig {
        coupling: p.coupling,
        mass: p.mass,
        omega: p.omega,
        tau: p.tau,
        dt: p.dt,
        t_max: p.t_max,
        record_stride: p.record_stride,
    };
    let qubit0 = StateVector::from_real(&[p.weights[0].sqrt(), p.weights[1].sqrt()]).map_err(numerical)?;
    let classical0 = ClassicalState { q: p.q0, p: p.p0 };
    let ens = EnsembleConfig {
        n_trajectories: p.n_trajectories,
        master_seed: seed,
        workers,
        keep: p.keep_trajectories,
        histogram_bins: p.histogram_bins,
    };
    let e = run_cq_ensemble(&qubit0, classical0, &config, &ens).map_err(numerical)?;

    // kept trajectories stacked in index order; each restarts at t_s = 0
    let mut hyb = Csv::new();
    hyb.row(["t_s", "pop0", "pop1", "q_m", "p_kgms", "jump_flag"]);
    for traj in &e.kept {
        for s in 0..traj.times.len() {
            hyb.row([
                fmt_f64(traj.times[s]),
                fmt_f64(traj.populations[s][0]),
                fmt_f64(traj.populations[s][1]),
                fmt_f64(traj.classical[s].q),
                fmt_f64(traj.classical[s].p),
                u8::from(traj.jump_flags[s]).to_string(),
            ]);
        }
    }
    out.add("hybrid_trajectories.csv", hyb.finish());

    let mut jumps = Csv::new();
    jumps.row(["trajectory", "outcome", "jumps"]);
    for (i, (o, j)) in e.outcomes.iter().zip(&e.jump_counts).enumerate() {
        jumps.row([i.to_string(), o.map_or(String::new(), |k| k.to_string()), j.to_string()]);
    }
    out.add("jump_counts.csv", jumps.finish());

    let mean_jumps = p.t_max / p.tau;
    let poisson = poisson_chi_square(&e.jump_counts, mean_jumps).map_err(numerical)?;
    let n = p.n_trajectories as f64;
    let stats = json!({
        "stats": e.stats,
        "binomial_3sigma": e.stats.expected.iter().map(|q| 3.0 * (q * (1.0 - q) / n).sqrt()).collect::<Vec<_>>(),
        "expected_jumps": mean_jumps,
        "observed_mean_jumps": e.jump_counts.iter().sum::<usize>() as f64 / n,
        "jump_count_chi_square": poisson,
        "max_final_population_error": e.max_final_population_error,
    });
    out.add_json("cq_stats.json", &stats);
    Ok(format!(
        "collapse frequencies {:?} (expected {:?}), jump-count Poisson p = {:.3}",
        e.stats.frequencies, e.stats.expected, poisson.p_value
    ))
}

fn run_lindblad(p: &LindbladParams, out: &mut Outputs) -> Result<String, RunError> {
    let h = build_hamiltonian(&p.system)?;
    let n = h.dim();
    let ops: Vec<HermitianOperator> = match p.system.collapse {
        CollapseFamily::Hamiltonian => vec![h.clone()],
        CollapseFamily::Position => {
            let default: Vec<f64> = (0..n).map(|i| i as f64).collect();
            vec![HermitianOperator::from_real_diagonal(p.system.positions.as_deref().unwrap_or(&default)).map_err(numerical)?]
        }
        CollapseFamily::Number => site_number_operators(n).map_err(numerical)?,
    };
    let model = MasterEquationModel::dephasing(h, &ops, p.rate).map_err(numerical)?;
    let dt = p.dt.unwrap_or_else(|| model.default_step());
    let rho0 = DensityOperator::from_pure(&initial_state(&p.system)?).map_err(numerical)?;
    let times: Vec<f64> = if p.n_samples == 1 {
        vec![p.t_max]
    } else {
        (0..p.n_samples).map(|k| p.t_max * k as f64 / (p.n_samples - 1) as f64).collect()
    };
    let series = propagate_series(&rho0, &model, &times, dt).map_err(numerical)?;
    let mut csv = Csv::new();
    let mut header = vec!["t_au".to_string()];
    for r in 0..n {
        for c in 0..n {
            header.push(format!("rho_{r}_{c}_re"));
            header.push(format!("rho_{r}_{c}_im"));
        }
    }
    header.extend(["trace".to_string(), "purity".into()]);
    csv.row(header);
    for (t, rho) in times.iter().zip(&series) {
        let mut row = vec![fmt_f64(*t)];
        for r in 0..n {
            for c in 0..n {
                let z = rho.matrix()[(r, c)];
                row.push(fmt_f64(z.re));
                row.push(fmt_f64(z.im));
            }
        }
        row.push(fmt_f64(rho.trace()));
        row.push(fmt_f64(rho.purity()));
        csv.row(row);
    }
    out.add("lindblad_density.csv", csv.finish());
    let last = series.last().expect("non-empty");
    Ok(format!("purity {} -> {} over {} au", fmt_f64(series[0].purity()), fmt_f64(last.purity()), p.t_max))
}

fn run_jz(p: &JzParams, out: &mut Outputs) -> Result<String, RunError> {
    let gas = GasParameters {
        number_density: p.number_density,
        temperature: p.temperature,
        molecular_mass: p.molecular_mass,
        size: p.size,
        displacement: p.displacement,
    };
    let tau = joos_zeh_tau(&gas).map_err(numerical)?;
    let rate = joos_zeh_localization_rate(&gas).map_err(numerical)?;
    let mut csv = Csv::new();
    csv.row(["t_s", "coherence_ratio"]);
    if tau.is_finite() {
        let n = p.decay_samples.max(2);
        for k in 0..n {
            let t = p.decay_span * tau * k as f64 / (n - 1) as f64;
            let c = coherence_decay(C64::new(1.0, 0.0), t, tau).map_err(numerical)?;
            csv.row([fmt_f64(t), fmt_f64(c.re)]);
        }
    }
    out.add("coherence_decay.csv", csv.finish());
    out.add_json("jz.json", &json!({ "tau_d_s": tau, "localization_rate_m2_s": rate }));
    Ok(format!("tau_D = {} s", fmt_f64(tau)))
}

fn distribution(rows: &[[f64; 4]], sigma: f64) -> Result<MassDistribution, RunError> {
    MassDistribution::new(rows.iter().map(|r| ([r[0], r[1], r[2]], r[3])).collect(), sigma).map_err(numerical)
}

fn run_dp(p: &DpParams, out: &mut Outputs) -> Result<String, RunError> {
    let up = distribution(&p.up, p.smear_sigma)?;
    let down = distribution(&p.down, p.smear_sigma)?;
    let r = dp_evaluate(&up, &down).map_err(numerical)?;
    out.add_json("dp.json", &json!({ "e_delta_J": r.self_energy, "tau_c_s": r.collapse_time }));
    Ok(format!("E = {} J, tau_c = {} s", fmt_f64(r.self_energy), fmt_f64(r.collapse_time)))
}

fn run_sweep(p: &SweepParams, out: &mut Outputs) -> Result<String, RunError> {
    let (lo, hi) = (p.mass_min.log10(), p.mass_max.log10());
    let masses: Vec<f64> = (0..p.n_masses)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (p.n_masses - 1) as f64))
        .collect();
    let lattice = SphereLattice { points_per_diameter: p.lattice_points_per_diameter };
    let sweep = dp_mass_sweep_with(p.material_density, &masses, p.displacement, p.smear_sigma, lattice).map_err(numerical)?;
    let mut csv = Csv::new();
    csv.row(["mass_kg", "e_delta_J", "tau_c_s"]);
    for s in &sweep {
        csv.row([fmt_f64(s.mass), fmt_f64(s.self_energy), fmt_f64(s.collapse_time)]);
    }
    out.add("mass_sweep.csv", csv.finish());
    let (first, last) = (sweep[0], sweep[sweep.len() - 1]);
    Ok(format!(
        "tau_c from {} s at {} kg to {} s at {} kg",
        fmt_f64(first.collapse_time),
        fmt_f64(first.mass),
        fmt_f64(last.collapse_time),
        fmt_f64(last.mass)
    ))
}
