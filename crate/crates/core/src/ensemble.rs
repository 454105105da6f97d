//! Reproducible trajectory ensembles and their statistics.
//!
//! Trajectory `i` always draws from stream `(master_seed, i)`. Trajectories
//! are grouped into fixed blocks of [`BLOCK`] indices; each block is summed
//! on its own and the block sums are combined in index order, so every
//! floating-point result is the same for any number of workers.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::cq::{run_cq_trajectory, ClassicalState, CqError, CqToyConfig, HybridTrajectory};
use crate::hilbert::{DensityOperator, HermitianOperator, HilbertError, StateVector, C64};
use crate::lindblad::PROPAGATED;
use crate::noise::RngStream;
use crate::qsd::{integrate, CollapseModel, QsdConfig, QsdError, TrajectoryRecord};

pub const BLOCK: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Qsd(#[from] QsdError),
    #[error(transparent)]
    Cq(#[from] CqError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("trajectory {index}: {source}")]
    Trajectory { index: usize, source: EngineError },
    #[error("bad ensemble parameter {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("expected probability of outcome {0} is zero but it was observed")]
    DegenerateExpected(usize),
    #[error("expected probabilities must be non-negative and sum to 1 (sum {0})")]
    BadExpected(f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub workers: usize,
    /// Full records are retained for trajectories `0..keep`.
    pub keep: usize,
    pub histogram_bins: usize,
}

impl EnsembleConfig {
    pub fn new(n_trajectories: usize, master_seed: u64) -> Self {
        Self { n_trajectories, master_seed, workers: 1, keep: 0, histogram_bins: 50 }
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_trajectories == 0 {
            return Err(EnsembleError::BadParameter { name: "n_trajectories", value: 0.0 });
        }
        if self.workers == 0 {
            return Err(EnsembleError::BadParameter { name: "workers", value: 0.0 });
        }
        if self.histogram_bins == 0 {
            return Err(EnsembleError::BadParameter { name: "histogram_bins", value: 0.0 });
        }
        Ok(())
    }
}

/// What each trajectory runs.
#[derive(Debug, Clone)]
pub enum Engine {
    Qsd { model: CollapseModel, psi0: StateVector, config: QsdConfig },
    Cq { qubit0: StateVector, classical0: ClassicalState, config: CqToyConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeStats {
    pub n_trajectories: usize,
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    pub unresolved: u64,
    pub expected: Vec<f64>,
    pub chi_square: Option<ChiSquare>,
    pub collapse_time_histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsdEnsemble {
    pub stats: OutcomeStats,
    pub times: Vec<f64>,
    /// Mean of `|psi_i><psi_i|` at each recorded time.
    pub mean_density: Vec<DensityOperator>,
    /// Mean reference-basis populations at each recorded time.
    pub mean_populations: Vec<Vec<f64>>,
    pub outcomes: Vec<Option<usize>>,
    pub collapse_times: Vec<Option<f64>>,
    pub max_norm_drift: f64,
    pub kept: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CqEnsemble {
    pub stats: OutcomeStats,
    pub times: Vec<f64>,
    pub mean_populations: Vec<Vec<f64>>,
    pub outcomes: Vec<Option<usize>>,
    pub jump_counts: Vec<usize>,
    /// Largest deviation of a collapsed trajectory's final state from its basis state.
    pub max_final_population_error: f64,
    pub kept: Vec<HybridTrajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleOutput {
    Qsd(QsdEnsemble),
    Cq(CqEnsemble),
}

impl EnsembleOutput {
    pub fn stats(&self) -> &OutcomeStats {
        match self {
            EnsembleOutput::Qsd(e) => &e.stats,
            EnsembleOutput::Cq(e) => &e.stats,
        }
    }
}

pub fn run_ensemble(engine: &Engine, ens: &EnsembleConfig) -> Result<EnsembleOutput, EnsembleError> {
    match engine {
        Engine::Qsd { model, psi0, config } => run_qsd_ensemble(model, psi0, config, ens).map(EnsembleOutput::Qsd),
        Engine::Cq { qubit0, classical0, config } => {
            run_cq_ensemble(qubit0, *classical0, config, ens).map(EnsembleOutput::Cq)
        }
    }
}

/// Runs `f` over every block, in parallel when enabled, returning results in block order.
fn map_blocks<T, F>(ens: &EnsembleConfig, f: F) -> Result<Vec<T>, EnsembleError>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Result<T, EnsembleError> + Sync,
{
    let n = ens.n_trajectories;
    let blocks: Vec<std::ops::Range<usize>> = (0..n.div_ceil(BLOCK)).map(|b| b * BLOCK..((b + 1) * BLOCK).min(n)).collect();
    #[cfg(feature = "parallel")]
    {
        if ens.workers > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(ens.workers)
                .build()
                .map_err(|e| EnsembleError::Pool(e.to_string()))?;
            return pool.install(|| blocks.into_par_iter().map(&f).collect());
        }
    }
    blocks.into_iter().map(f).collect()
}

struct QsdBlock {
    density: Vec<DMatrix<C64>>,
    populations: Vec<Vec<f64>>,
    outcomes: Vec<Option<usize>>,
    collapse_times: Vec<Option<f64>>,
    max_norm_drift: f64,
    kept: Vec<TrajectoryRecord>,
}

pub fn run_qsd_ensemble(
    model: &CollapseModel,
    psi0: &StateVector,
    config: &QsdConfig,
    ens: &EnsembleConfig,
) -> Result<QsdEnsemble, EnsembleError> {
    ens.validate()?;
    let tag = |index: usize| move |e: QsdError| EnsembleError::Trajectory { index, source: e.into() };
    config.validate().map_err(tag(0))?;
    let basis = model.reference_basis().map_err(tag(0))?;
    let times = config.record_times();
    let n_rec = times.len();
    let dim = model.dim();

    let blocks = map_blocks(ens, |range| {
        let mut block = QsdBlock {
            density: vec![DMatrix::zeros(dim, dim); n_rec],
            populations: vec![vec![0.0; dim]; n_rec],
            outcomes: Vec::with_capacity(range.len()),
            collapse_times: Vec::with_capacity(range.len()),
            max_norm_drift: 0.0,
            kept: Vec::new(),
        };
        for index in range {
            let mut stream = RngStream::new(ens.master_seed, index as u64);
            let keep = index < ens.keep;
            let mut record = TrajectoryRecord {
                times: Vec::new(),
                populations: Vec::new(),
                norms: Vec::new(),
                outcome: None,
                collapse_time: None,
            };
            let summary = integrate(psi0, model, config, &mut stream, |k, t, psi, norm, pops| {
                let rho = &mut block.density[k];
                for c in 0..dim {
                    let pc = psi[c].conj();
                    for r in 0..dim {
                        rho[(r, c)] += psi[r] * pc;
                    }
                }
                for (acc, p) in block.populations[k].iter_mut().zip(pops) {
                    *acc += p;
                }
                if keep {
                    record.times.push(t);
                    record.populations.push(pops.to_vec());
                    record.norms.push(norm);
                }
            })
            .map_err(tag(index))?;
            block.outcomes.push(summary.outcome);
            block.collapse_times.push(summary.collapse_time);
            block.max_norm_drift = block.max_norm_drift.max(summary.max_norm_drift);
            if keep {
                record.outcome = summary.outcome;
                record.collapse_time = summary.collapse_time;
                block.kept.push(record);
            }
        }
        Ok(block)
    })?;

    let n = ens.n_trajectories;
    let mut density = vec![DMatrix::<C64>::zeros(dim, dim); n_rec];
    let mut populations = vec![vec![0.0; dim]; n_rec];
    let mut outcomes = Vec::with_capacity(n);
    let mut collapse_times = Vec::with_capacity(n);
    let mut kept = Vec::new();
    let mut max_norm_drift = 0.0_f64;
    for block in blocks {
        for (acc, b) in density.iter_mut().zip(&block.density) {
            *acc += b;
        }
        for (acc, b) in populations.iter_mut().zip(&block.populations) {
            for (x, y) in acc.iter_mut().zip(b) {
                *x += y;
            }
        }
        outcomes.extend(block.outcomes);
        collapse_times.extend(block.collapse_times);
        kept.extend(block.kept);
        max_norm_drift = max_norm_drift.max(block.max_norm_drift);
    }
    let inv = 1.0 / n as f64;
    let mean_density = density
        .into_iter()
        .map(|m| DensityOperator::with_tolerance(m.scale(inv), PROPAGATED))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_populations = populations
        .into_iter()
        .map(|p| p.into_iter().map(|x| x * inv).collect())
        .collect();

    let mut expected = vec![0.0; dim];
    basis.populations(psi0.amplitudes().as_slice(), &mut expected);
    let stats = outcome_stats(&outcomes, &collapse_times, expected, config.t_max, ens.histogram_bins)?;
    Ok(QsdEnsemble { stats, times, mean_density, mean_populations, outcomes, collapse_times, max_norm_drift, kept })
}

struct CqBlock {
    populations: Vec<Vec<f64>>,
    outcomes: Vec<Option<usize>>,
    first_jumps: Vec<Option<f64>>,
    jump_counts: Vec<usize>,
    max_error: f64,
    kept: Vec<HybridTrajectory>,
}

pub fn run_cq_ensemble(
    qubit0: &StateVector,
    classical0: ClassicalState,
    config: &CqToyConfig,
    ens: &EnsembleConfig,
) -> Result<CqEnsemble, EnsembleError> {
    ens.validate()?;
    let tag = |index: usize| move |e: CqError| EnsembleError::Trajectory { index, source: e.into() };
    config.validate().map_err(tag(0))?;
    let blocks = map_blocks(ens, |range| {
        let mut block = CqBlock {
            populations: Vec::new(),
            outcomes: Vec::with_capacity(range.len()),
            first_jumps: Vec::with_capacity(range.len()),
            jump_counts: Vec::with_capacity(range.len()),
            max_error: 0.0,
            kept: Vec::new(),
        };
        for index in range {
            let mut stream = RngStream::new(ens.master_seed, index as u64);
            let traj = run_cq_trajectory(qubit0, classical0, config, &mut stream).map_err(tag(index))?;
            if block.populations.is_empty() {
                block.populations = vec![vec![0.0; 2]; traj.times.len()];
            }
            for (acc, p) in block.populations.iter_mut().zip(&traj.populations) {
                acc[0] += p[0];
                acc[1] += p[1];
            }
            if let Some(k) = traj.outcome {
                let last = traj.populations.last().map_or(0.0, |p| p[k]);
                block.max_error = block.max_error.max((1.0 - last).abs());
            }
            block.outcomes.push(traj.outcome);
            block.first_jumps.push(traj.jump_times.first().copied());
            block.jump_counts.push(traj.jump_times.len());
            if index < ens.keep {
                block.kept.push(traj);
            }
        }
        Ok(block)
    })?;

    let n = ens.n_trajectories;
    let mut populations: Vec<Vec<f64>> = Vec::new();
    let mut outcomes = Vec::with_capacity(n);
    let mut first_jumps = Vec::with_capacity(n);
    let mut jump_counts = Vec::with_capacity(n);
    let mut kept = Vec::new();
    let mut max_error = 0.0_f64;
    for block in blocks {
        if populations.is_empty() {
            populations = vec![vec![0.0; 2]; block.populations.len()];
        }
        for (acc, b) in populations.iter_mut().zip(&block.populations) {
            acc[0] += b[0];
            acc[1] += b[1];
        }
        outcomes.extend(block.outcomes);
        first_jumps.extend(block.first_jumps);
        jump_counts.extend(block.jump_counts);
        kept.extend(block.kept);
        max_error = max_error.max(block.max_error);
    }
    let inv = 1.0 / n as f64;
    let mean_populations = populations.into_iter().map(|p| vec![p[0] * inv, p[1] * inv]).collect();
    let n_steps = config.n_steps();
    let mut times: Vec<f64> = (0..=n_steps).step_by(config.record_stride).map(|k| k as f64 * config.dt).collect();
    if !n_steps.is_multiple_of(config.record_stride) {
        times.push(n_steps as f64 * config.dt);
    }
    let expected = qubit0.populations();
    let stats = outcome_stats(&outcomes, &first_jumps, expected, config.t_max, ens.histogram_bins)?;
    Ok(CqEnsemble { stats, times, mean_populations, outcomes, jump_counts, max_final_population_error: max_error, kept })
}

fn outcome_stats(
    outcomes: &[Option<usize>],
    collapse_times: &[Option<f64>],
    expected: Vec<f64>,
    t_max: f64,
    bins: usize,
) -> Result<OutcomeStats, EnsembleError> {
    let n = outcomes.len();
    let mut counts = vec![0u64; expected.len()];
    let mut unresolved = 0;
    for o in outcomes {
        match o {
            Some(k) => counts[*k] += 1,
            None => unresolved += 1,
        }
    }
    let frequencies = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let resolved: u64 = counts.iter().sum();
    // a Hamiltonian that does not commute with the collapse operators can
    // populate outcomes absent from the initial state
    let chi_square = match chi_square_born(&counts, &expected) {
        _ if resolved == 0 => None,
        Err(EnsembleError::DegenerateExpected(_)) => None,
        r => Some(r?),
    };
    Ok(OutcomeStats {
        n_trajectories: n,
        counts,
        frequencies,
        unresolved,
        expected,
        chi_square,
        collapse_time_histogram: histogram(collapse_times.iter().flatten().copied(), 0.0, t_max, bins),
    })
}

/// Equal-width bins on `[lo, hi]`; values outside are dropped.
pub fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Histogram {
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for v in values {
        if v >= lo && v <= hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    Histogram { edges, counts }
}

/// Pearson chi-square of `counts` against `expected * N`.
///
/// Categories with zero expectation and zero count are dropped from the
/// degrees of freedom.
pub fn chi_square_born(counts: &[u64], expected: &[f64]) -> Result<ChiSquare, EnsembleError> {
    if counts.len() != expected.len() {
        return Err(EnsembleError::BadParameter { name: "expected length", value: expected.len() as f64 });
    }
    let sum: f64 = expected.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || expected.iter().any(|&p| !(p >= 0.0)) {
        return Err(EnsembleError::BadExpected(sum));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(EnsembleError::BadParameter { name: "total count", value: 0.0 });
    }
    let mut statistic = 0.0;
    let mut categories = 0;
    for (k, (&c, &p)) in counts.iter().zip(expected).enumerate() {
        if p == 0.0 {
            if c > 0 {
                return Err(EnsembleError::DegenerateExpected(k));
            }
            continue;
        }
        categories += 1;
        let e = p * n as f64;
        statistic += (c as f64 - e).powi(2) / e;
    }
    let dof = categories - 1;
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(f64::NAN)
    };
    Ok(ChiSquare { statistic, p_value, dof })
}

/// Goodness of fit of event counts to Poisson(`mean`).
///
/// Adjacent counts are pooled from the left until each bin expects at least
/// five events; the last bin collects the upper tail.
pub fn poisson_chi_square(samples: &[usize], mean: f64) -> Result<ChiSquare, EnsembleError> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(EnsembleError::BadParameter { name: "mean", value: mean });
    }
    if samples.is_empty() {
        return Err(EnsembleError::BadParameter { name: "total count", value: 0.0 });
    }
    let n = samples.len() as f64;
    let kmax = samples.iter().copied().max().unwrap_or(0).max(mean.ceil() as usize * 3 + 10);
    let mut observed = vec![0u64; kmax + 1];
    for &k in samples {
        observed[k] += 1;
    }
    let mut pmf = Vec::with_capacity(kmax + 1);
    let mut p = (-mean).exp();
    for k in 0..=kmax {
        pmf.push(p);
        p *= mean / (k + 1) as f64;
    }
    // bins as (observed, probability)
    let mut bins: Vec<(u64, f64)> = Vec::new();
    let mut acc = (0u64, 0.0);
    let mut cumulative = 0.0;
    for k in 0..=kmax {
        acc.0 += observed[k];
        acc.1 += pmf[k];
        cumulative += pmf[k];
        if acc.1 * n >= 5.0 && (1.0 - cumulative) * n >= 5.0 {
            bins.push(acc);
            acc = (0, 0.0);
        }
    }
    acc.1 = 1.0 - bins.iter().map(|b| b.1).sum::<f64>();
    acc.0 = samples.len() as u64 - bins.iter().map(|b| b.0).sum::<u64>();
    bins.push(acc);
    let counts: Vec<u64> = bins.iter().map(|b| b.0).collect();
    let expected: Vec<f64> = bins.iter().map(|b| b.1).collect();
    chi_square_born(&counts, &expected)
}

/// Middle value (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// `1/2 sum |eigenvalues(rho1 - rho2)|`.
pub fn trace_distance(rho1: &DensityOperator, rho2: &DensityOperator) -> Result<f64, EnsembleError> {
    if rho1.dim() != rho2.dim() {
        return Err(HilbertError::DimMismatch { expected: rho1.dim(), found: rho2.dim() }.into());
    }
    let diff = rho1.matrix() - rho2.matrix();
    let values = HermitianOperator::new(diff)?.eigendecompose()?.values;
    Ok(0.5 * values.iter().map(|x| x.abs()).sum::<f64>())
}
