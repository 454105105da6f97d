//! Quantum-state diffusion trajectories.
//!
//! The state obeys the Ito equation
//!
//! ```text
//! d|psi> = -i H |psi> dt + sum_n (A_n - <A_n>) |psi> dW_n
//!          - 1/2 sum_mn Q_mn (A_m - <A_m>)(A_n - <A_n>) |psi> dt
//! ```
//!
//! with `dW_m dW_n = Q_mn dt`. Independent channels have `Q = eta I`, which
//! gives the familiar `-(eta/2) sum_n (A_n - <A_n>)^2` drift; the
//! mass-density model uses a spatially correlated `Q`. Time is in atomic
//! units (hbar = 1).
//!
//! Integration is explicit Euler-Maruyama followed by renormalization; the
//! norm before renormalization is recorded so step-size effects stay visible.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::constants::AU_TIME_S;
use crate::hilbert::{HermitianOperator, HilbertError, StateVector, C64, ZERO_NORM};
use crate::noise::{CorrelatedFieldNoise, NoiseError, RngStream};
use crate::timescales::MassDistribution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsdError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("bad parameter {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("bad model: {0}")]
    BadModel(String),
    #[error("initial state is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("state norm vanished at t = {t} (time step too large?)")]
    ZeroNorm { t: f64 },
}

/// Which operator family a model's collapse operators belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Hamiltonian,
    Position,
    Number,
    MassDensity,
    Custom,
}

impl ModelFamily {
    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Hamiltonian => "hamiltonian",
            ModelFamily::Position => "position",
            ModelFamily::Number => "number",
            ModelFamily::MassDensity => "mass_density",
            ModelFamily::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// `dW_m dW_n = delta_mn eta dt`.
    Independent { eta: f64 },
    /// One field value per collapse operator.
    Correlated(CorrelatedFieldNoise),
}

/// Hamiltonian, Hermitian collapse operators and their noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseModel {
    hamiltonian: HermitianOperator,
    collapse_ops: Vec<HermitianOperator>,
    noise: NoiseSpec,
    family: ModelFamily,
}

impl CollapseModel {
    pub fn new(
        hamiltonian: HermitianOperator,
        collapse_ops: Vec<HermitianOperator>,
        eta: f64,
        family: ModelFamily,
    ) -> Result<Self, QsdError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(QsdError::BadParameter { name: "eta", value: eta });
        }
        Self::build(hamiltonian, collapse_ops, NoiseSpec::Independent { eta }, family)
    }

    pub fn with_correlated_noise(
        hamiltonian: HermitianOperator,
        collapse_ops: Vec<HermitianOperator>,
        noise: CorrelatedFieldNoise,
        family: ModelFamily,
    ) -> Result<Self, QsdError> {
        if noise.len() != collapse_ops.len() {
            return Err(QsdError::BadModel(format!(
                "{} noise channels for {} collapse operators",
                noise.len(),
                collapse_ops.len()
            )));
        }
        Self::build(hamiltonian, collapse_ops, NoiseSpec::Correlated(noise), family)
    }

    fn build(
        hamiltonian: HermitianOperator,
        collapse_ops: Vec<HermitianOperator>,
        noise: NoiseSpec,
        family: ModelFamily,
    ) -> Result<Self, QsdError> {
        if collapse_ops.is_empty() {
            return Err(QsdError::BadModel("no collapse operators".into()));
        }
        let dim = hamiltonian.dim();
        for op in &collapse_ops {
            if op.dim() != dim {
                return Err(HilbertError::DimMismatch { expected: dim, found: op.dim() }.into());
            }
        }
        Ok(Self { hamiltonian, collapse_ops, noise, family })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.hamiltonian
    }

    pub fn collapse_ops(&self) -> &[HermitianOperator] {
        &self.collapse_ops
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    /// Noise strength for independent-channel models.
    pub fn eta(&self) -> Option<f64> {
        match self.noise {
            NoiseSpec::Independent { eta } => Some(eta),
            NoiseSpec::Correlated(_) => None,
        }
    }

    /// Orthonormal basis in which populations and outcomes are reported:
    /// the eigenbasis of the first collapse operator (the computational
    /// basis, unreordered, when that operator is diagonal).
    pub fn reference_basis(&self) -> Result<ReferenceBasis, QsdError> {
        let first = &self.collapse_ops[0];
        if first.is_diagonal() {
            return Ok(ReferenceBasis::Computational(first.dim()));
        }
        let eig = first.eigendecompose()?;
        Ok(ReferenceBasis::Rotated(eig.vectors.adjoint()))
    }
}

/// Basis used for populations; `Rotated` stores `V^dagger`.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceBasis {
    Computational(usize),
    Rotated(DMatrix<C64>),
}

impl ReferenceBasis {
    pub fn populations(&self, psi: &[C64], out: &mut [f64]) {
        match self {
            ReferenceBasis::Computational(_) => {
                for (p, z) in out.iter_mut().zip(psi) {
                    *p = z.norm_sqr();
                }
            }
            ReferenceBasis::Rotated(vh) => {
                let n = vh.nrows();
                for (i, p) in out.iter_mut().enumerate().take(n) {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, z) in psi.iter().enumerate() {
                        acc += vh[(i, j)] * z;
                    }
                    *p = acc.norm_sqr();
                }
            }
        }
    }

    pub fn basis_vectors(&self) -> Vec<StateVector> {
        match self {
            ReferenceBasis::Computational(n) => (0..*n).map(|k| StateVector::basis(*n, k).expect("k < n")).collect(),
            ReferenceBasis::Rotated(vh) => {
                let v = vh.adjoint();
                (0..v.ncols())
                    .map(|k| StateVector::from_amplitudes(v.column(k).iter().copied().collect()).expect("non-empty"))
                    .collect()
            }
        }
    }
}

/// `A_n = H`.
pub fn make_hamiltonian_model(hamiltonian: HermitianOperator, eta: f64) -> Result<CollapseModel, QsdError> {
    let ops = vec![hamiltonian.clone()];
    CollapseModel::new(hamiltonian, ops, eta, ModelFamily::Hamiltonian)
}

/// A single position operator `diag(x_1, ..., x_n)` on a grid basis.
pub fn make_position_model(hamiltonian: HermitianOperator, positions: &[f64], eta: f64) -> Result<CollapseModel, QsdError> {
    if positions.len() != hamiltonian.dim() {
        return Err(HilbertError::DimMismatch { expected: hamiltonian.dim(), found: positions.len() }.into());
    }
    let x = HermitianOperator::from_real_diagonal(positions)?;
    CollapseModel::new(hamiltonian, vec![x], eta, ModelFamily::Position)
}

/// One collapse channel per supplied number operator.
pub fn make_number_model(
    hamiltonian: HermitianOperator,
    number_ops: Vec<HermitianOperator>,
    eta: f64,
) -> Result<CollapseModel, QsdError> {
    CollapseModel::new(hamiltonian, number_ops, eta, ModelFamily::Number)
}

/// Site occupation projectors `|i><i|` of a single particle on `n` sites.
pub fn site_number_operators(n: usize) -> Result<Vec<HermitianOperator>, QsdError> {
    (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            HermitianOperator::from_real_diagonal(&d).map_err(QsdError::from)
        })
        .collect()
}

/// Mass-density localization model.
///
/// Basis state `s` is the mass configuration `configurations[s]`. The
/// collapse operator of grid cell `c` is diagonal, `A_c = sum_s m_s(c) |s><s|`
/// where `m_s(c)` is the mass of configuration `s` assigned to cell `c` by
/// normalized Gaussian weights of width `smear_sigma`; the weights of each
/// point mass sum to one over the grid, so `sum_c A_c` is the total mass.
/// Field noise follows the `kappa G / (2 hbar |r - r'|)` kernel with
/// `sigma_noise` on the diagonal, with time in atomic units.
pub fn make_mass_density_model(
    hamiltonian: HermitianOperator,
    configurations: &[MassDistribution],
    grid: &[[f64; 3]],
    sigma_noise: f64,
    kappa: f64,
) -> Result<CollapseModel, QsdError> {
    let dim = hamiltonian.dim();
    if configurations.len() != dim {
        return Err(HilbertError::DimMismatch { expected: dim, found: configurations.len() }.into());
    }
    if grid.is_empty() {
        return Err(QsdError::BadModel("empty grid".into()));
    }
    let ops = mass_density_operators(configurations, grid)?;
    let noise = CorrelatedFieldNoise::mass_density_kernel(grid.to_vec(), kappa, sigma_noise, AU_TIME_S)?;
    CollapseModel::with_correlated_noise(hamiltonian, ops, noise, ModelFamily::MassDensity)
}

/// Diagonal cell mass operators, one per grid point (kg).
pub fn mass_density_operators(
    configurations: &[MassDistribution],
    grid: &[[f64; 3]],
) -> Result<Vec<HermitianOperator>, QsdError> {
    let n_cells = grid.len();
    let dim = configurations.len();
    let mut cell_mass = vec![vec![0.0; dim]; n_cells];
    for (s, config) in configurations.iter().enumerate() {
        let sigma = config.smear_sigma();
        for &(pos, mass) in config.points() {
            let d2: Vec<f64> = grid
                .iter()
                .map(|g| (g[0] - pos[0]).powi(2) + (g[1] - pos[1]).powi(2) + (g[2] - pos[2]).powi(2))
                .collect();
            let nearest = d2.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = d2.iter().map(|&x| (-(x - nearest) / (2.0 * sigma * sigma)).exp()).collect();
            let total: f64 = w.iter().sum();
            for c in 0..n_cells {
                cell_mass[c][s] += mass * w[c] / total;
            }
        }
    }
    cell_mass
        .iter()
        .map(|diag| HermitianOperator::from_real_diagonal(diag).map_err(QsdError::from))
        .collect()
}

/// Integration settings; times in atomic units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsdConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    /// Collapse is declared once a population reaches `1 - collapse_epsilon`.
    pub collapse_epsilon: f64,
}

impl QsdConfig {
    pub fn validate(&self) -> Result<(), QsdError> {
        if !(self.dt > 0.0 && self.dt < self.t_max && self.t_max.is_finite()) {
            return Err(QsdError::BadParameter { name: "dt", value: self.dt });
        }
        if self.record_stride == 0 {
            return Err(QsdError::BadParameter { name: "record_stride", value: 0.0 });
        }
        if !(self.collapse_epsilon > 0.0 && self.collapse_epsilon < 0.5) {
            return Err(QsdError::BadParameter { name: "collapse_epsilon", value: self.collapse_epsilon });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Step indices at which samples are recorded: every stride and the last step.
    pub fn record_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_stride).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        steps
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps().into_iter().map(|n| n as f64 * self.dt).collect()
    }
}

/// One stochastic realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Populations in the model's reference basis at each recorded time.
    pub populations: Vec<Vec<f64>>,
    /// Norm before renormalization of the step ending at each recorded time
    /// (1 at `t = 0`).
    pub norms: Vec<f64>,
    /// Reference-basis index holding at least `1 - epsilon` at `t_max`.
    pub outcome: Option<usize>,
    /// First time any population reached `1 - epsilon`.
    pub collapse_time: Option<f64>,
}

enum OpRepr {
    Diagonal(Vec<f64>),
    Dense(DMatrix<C64>),
}

impl OpRepr {
    fn from_op(op: &HermitianOperator) -> Self {
        match op.as_real_diagonal() {
            Some(d) => OpRepr::Diagonal(d),
            None => OpRepr::Dense(op.matrix().clone()),
        }
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        match self {
            OpRepr::Diagonal(d) => {
                for ((o, &a), z) in out.iter_mut().zip(d).zip(x) {
                    *o = z * a;
                }
            }
            OpRepr::Dense(m) => {
                let n = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..n {
                        acc += m[(i, j)] * x[j];
                    }
                    *o = acc;
                }
            }
        }
    }
}

/// Preallocated buffers for repeated increments of one model.
pub(crate) struct Stepper<'m> {
    model: &'m CollapseModel,
    hamiltonian: OpRepr,
    ops: Vec<OpRepr>,
    /// `(A_n - <A_n>) psi`, one row per channel.
    centered: Vec<Vec<C64>>,
    scratch: Vec<C64>,
    mixed: Vec<C64>,
    means: Vec<f64>,
    dw: Vec<f64>,
    z: Vec<f64>,
    next: Vec<C64>,
}

impl<'m> Stepper<'m> {
    pub(crate) fn new(model: &'m CollapseModel) -> Self {
        let dim = model.dim();
        let n = model.collapse_ops.len();
        Self {
            model,
            hamiltonian: OpRepr::from_op(&model.hamiltonian),
            ops: model.collapse_ops.iter().map(OpRepr::from_op).collect(),
            centered: vec![vec![C64::new(0.0, 0.0); dim]; n],
            scratch: vec![C64::new(0.0, 0.0); dim],
            mixed: vec![C64::new(0.0, 0.0); dim],
            means: vec![0.0; n],
            dw: vec![0.0; n],
            z: vec![0.0; n],
            next: vec![C64::new(0.0, 0.0); dim],
        }
    }

    /// Writes the raw increment `d|psi>` for noise `dw` into `out`.
    fn increment(&mut self, psi: &[C64], dw: &[f64], dt: f64, out: &mut [C64]) {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        self.hamiltonian.apply(psi, &mut self.scratch);
        let minus_i_dt = C64::new(0.0, -dt);
        for (o, h) in out.iter_mut().zip(&self.scratch) {
            *o = h * minus_i_dt;
        }
        for (k, op) in self.ops.iter().enumerate() {
            op.apply(psi, &mut self.scratch);
            let mean = psi.iter().zip(&self.scratch).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / norm2;
            self.means[k] = mean;
            let row = &mut self.centered[k];
            for ((c, a), z) in row.iter_mut().zip(&self.scratch).zip(psi) {
                *c = a - z * mean;
            }
            for (o, c) in out.iter_mut().zip(row.iter()) {
                *o += c * dw[k];
            }
        }
        match &self.model.noise {
            NoiseSpec::Independent { eta } => {
                let coef = -0.5 * eta * dt;
                for (k, op) in self.ops.iter().enumerate() {
                    op.apply(&self.centered[k], &mut self.scratch);
                    for ((o, a), c) in out.iter_mut().zip(&self.scratch).zip(&self.centered[k]) {
                        *o += (a - c * self.means[k]) * coef;
                    }
                }
            }
            NoiseSpec::Correlated(field) => {
                let q = field.rate();
                let coef = -0.5 * dt;
                for (k, op) in self.ops.iter().enumerate() {
                    for m in self.mixed.iter_mut() {
                        *m = C64::new(0.0, 0.0);
                    }
                    for (j, row) in self.centered.iter().enumerate() {
                        let qkj = q[(k, j)];
                        for (m, c) in self.mixed.iter_mut().zip(row) {
                            *m += c * qkj;
                        }
                    }
                    op.apply(&self.mixed, &mut self.scratch);
                    for ((o, a), m) in out.iter_mut().zip(&self.scratch).zip(&self.mixed) {
                        *o += (a - m * self.means[k]) * coef;
                    }
                }
            }
        }
    }

    fn draw_noise(&mut self, stream: &mut RngStream, dt: f64) {
        match &self.model.noise {
            NoiseSpec::Independent { eta } => {
                let sd = (eta * dt).sqrt();
                for w in self.dw.iter_mut() {
                    *w = sd * stream.standard_normal();
                }
            }
            NoiseSpec::Correlated(field) => field.sample_into(stream, dt, &mut self.z, &mut self.dw),
        }
    }

    /// Advances `psi` in place by one step; returns the pre-renormalization norm.
    pub(crate) fn advance(&mut self, psi: &mut [C64], dt: f64, stream: &mut RngStream) -> Option<f64> {
        self.draw_noise(stream, dt);
        let dw = std::mem::take(&mut self.dw);
        let mut next = std::mem::take(&mut self.next);
        self.increment(psi, &dw, dt, &mut next);
        self.dw = dw;
        for (n, p) in next.iter_mut().zip(psi.iter()) {
            *n += p;
        }
        let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ok = norm >= ZERO_NORM && norm.is_finite();
        if ok {
            let inv = 1.0 / norm;
            for (p, n) in psi.iter_mut().zip(&next) {
                *p = n * inv;
            }
        }
        self.next = next;
        ok.then_some(norm)
    }
}

/// Raw increment `d|psi>` for given noise values `dw` (one per channel).
pub fn qsd_increment(psi: &StateVector, model: &CollapseModel, dw: &[f64], dt: f64) -> Result<DVector<C64>, QsdError> {
    psi.check_dim(model.dim())?;
    if dw.len() != model.collapse_ops.len() {
        return Err(HilbertError::DimMismatch { expected: model.collapse_ops.len(), found: dw.len() }.into());
    }
    let mut stepper = Stepper::new(model);
    let mut out = vec![C64::new(0.0, 0.0); model.dim()];
    stepper.increment(psi.amplitudes().as_slice(), dw, dt, &mut out);
    Ok(DVector::from_vec(out))
}

/// One Euler-Maruyama step followed by renormalization.
pub fn step(
    psi: &StateVector,
    model: &CollapseModel,
    config: &QsdConfig,
    stream: &mut RngStream,
) -> Result<(StateVector, f64), QsdError> {
    psi.check_dim(model.dim())?;
    let mut stepper = Stepper::new(model);
    let mut amps: Vec<C64> = psi.amplitudes().iter().copied().collect();
    let norm = stepper.advance(&mut amps, config.dt, stream).ok_or(QsdError::ZeroNorm { t: config.dt })?;
    Ok((StateVector::from_dvector(DVector::from_vec(amps)), norm))
}

/// Per-trajectory summary produced alongside the recorded samples.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RunSummary {
    pub outcome: Option<usize>,
    pub collapse_time: Option<f64>,
    pub final_populations: Vec<f64>,
    pub max_norm_drift: f64,
}

/// Integrates to `t_max`, calling `observe(sample_index, t, psi, pre_norm, populations)`
/// at every recorded step.
pub(crate) fn integrate<F>(
    psi0: &StateVector,
    model: &CollapseModel,
    config: &QsdConfig,
    stream: &mut RngStream,
    mut observe: F,
) -> Result<RunSummary, QsdError>
where
    F: FnMut(usize, f64, &[C64], f64, &[f64]),
{
    config.validate()?;
    psi0.check_dim(model.dim())?;
    let n0 = psi0.norm();
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(QsdError::NotNormalized(n0));
    }
    let basis = model.reference_basis()?;
    let dim = model.dim();
    let threshold = 1.0 - config.collapse_epsilon;
    let mut stepper = Stepper::new(model);
    let mut psi: Vec<C64> = psi0.amplitudes().iter().copied().collect();
    let mut pops = vec![0.0; dim];
    let n_steps = config.n_steps();
    let stride = config.record_stride;

    basis.populations(&psi, &mut pops);
    let mut collapse_time = (max_of(&pops) >= threshold).then_some(0.0);
    observe(0, 0.0, &psi, 1.0, &pops);
    let mut sample = 1;
    let mut max_drift = 0.0_f64;

    for n in 1..=n_steps {
        let t = n as f64 * config.dt;
        let norm = stepper.advance(&mut psi, config.dt, stream).ok_or(QsdError::ZeroNorm { t })?;
        max_drift = max_drift.max((norm - 1.0).abs());
        let recorded = n % stride == 0 || n == n_steps;
        if collapse_time.is_none() || recorded {
            basis.populations(&psi, &mut pops);
            if collapse_time.is_none() && max_of(&pops) >= threshold {
                collapse_time = Some(t);
            }
        }
        if recorded {
            observe(sample, t, &psi, norm, &pops);
            sample += 1;
        }
    }

    basis.populations(&psi, &mut pops);
    let (arg, max) = argmax(&pops);
    Ok(RunSummary {
        outcome: (max >= threshold).then_some(arg),
        collapse_time,
        final_populations: pops,
        max_norm_drift: max_drift,
    })
}

fn max_of(p: &[f64]) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn argmax(p: &[f64]) -> (usize, f64) {
    p.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

/// Integrates one trajectory to `t_max`.
pub fn run_trajectory(
    psi0: &StateVector,
    model: &CollapseModel,
    config: &QsdConfig,
    stream: &mut RngStream,
) -> Result<TrajectoryRecord, QsdError> {
    let n_samples = config.record_steps().len();
    let mut times = Vec::with_capacity(n_samples);
    let mut populations = Vec::with_capacity(n_samples);
    let mut norms = Vec::with_capacity(n_samples);
    let summary = integrate(psi0, model, config, stream, |_, t, _, norm, pops| {
        times.push(t);
        populations.push(pops.to_vec());
        norms.push(norm);
    })?;
    Ok(TrajectoryRecord { times, populations, norms, outcome: summary.outcome, collapse_time: summary.collapse_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig4_model() -> CollapseModel {
        make_hamiltonian_model(HermitianOperator::harmonic_oscillator(3, 1.0).unwrap(), 0.25).unwrap()
    }

    fn fig4_state() -> StateVector {
        StateVector::from_real(&[(1.0f64 / 6.0).sqrt(), (2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt()]).unwrap()
    }

    fn config(dt: f64, t_max: f64) -> QsdConfig {
        QsdConfig { dt, t_max, record_stride: 100, collapse_epsilon: 1e-3 }
    }

    #[test]
    fn eigenstate_increment_is_pure_phase() {
        let model = fig4_model();
        let psi = StateVector::basis(3, 1).unwrap();
        let dt = 1e-3;
        let inc = qsd_increment(&psi, &model, &[0.37], dt).unwrap();
        assert!((inc[1] - C64::new(0.0, -1.5 * dt)).norm() < 1e-15);
        assert_eq!(inc[0], C64::new(0.0, 0.0));
        assert_eq!(inc[2], C64::new(0.0, 0.0));
        let zero_noise = qsd_increment(&psi, &model, &[0.0], dt).unwrap();
        assert_eq!(inc, zero_noise);
    }

    #[test]
    fn sigma_z_increment_matches_term_by_term_oracle() {
        let h = HermitianOperator::from_real_diagonal(&[0.3, -0.3]).unwrap();
        let model = CollapseModel::new(h.clone(), vec![HermitianOperator::pauli_z()], 0.4, ModelFamily::Custom).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = StateVector::from_real(&[s, s]).unwrap();
        let (w, dt) = (0.05, 1e-2);
        let inc = qsd_increment(&psi, &model, &[w], dt).unwrap();

        // oracle: explicit matrices for every term
        let a = HermitianOperator::pauli_z().matrix().clone();
        let v = psi.amplitudes().clone();
        let mean = (v.adjoint() * &a * &v)[(0, 0)].re;
        let centered = &a - DMatrix::<C64>::identity(2, 2).scale(mean);
        let unitary = (h.matrix() * &v) * C64::new(0.0, -dt);
        let diffusion = (&centered * &v).scale(w);
        let drift = (&centered * &centered * &v).scale(-0.5 * 0.4 * dt);
        let oracle = unitary + diffusion.clone() + drift;
        for i in 0..2 {
            assert!((inc[i] - oracle[i]).norm() < 1e-15);
        }
        // <sigma_z> = 0, so the diffusion term is (w psi_up, -w psi_down)
        assert_abs_diff_eq!(diffusion[0].re, w * s, epsilon = 1e-15);
        assert_abs_diff_eq!(diffusion[1].re, -w * s, epsilon = 1e-15);
    }

    #[test]
    fn vanishing_noise_is_unitary_euler() {
        let model = make_hamiltonian_model(HermitianOperator::harmonic_oscillator(3, 1.0).unwrap(), 1e-300).unwrap();
        let cfg = config(1e-3, 1.0);
        let mut stream = RngStream::new(1, 0);
        let mut psi = fig4_state();
        for _ in 0..1000 {
            psi = step(&psi, &model, &cfg, &mut stream).unwrap().0;
        }
        // Euler multiplies each energy component by (1 - i E dt); after
        // renormalization the populations follow the product of |1 - i E dt|^2
        let raw: Vec<f64> = [(1.0 / 6.0, 0.5), (2.0 / 3.0, 1.5), (1.0 / 6.0, 2.5)]
            .iter()
            .map(|&(p, e): &(f64, f64)| p * (1.0 + e * e * 1e-6).powi(1000))
            .collect();
        let total: f64 = raw.iter().sum();
        for (p, want) in psi.populations().iter().zip(&raw) {
            assert_abs_diff_eq!(*p, want / total, epsilon = 1e-12);
        }
    }

    #[test]
    fn step_is_deterministic_and_normalized() {
        let model = fig4_model();
        let cfg = config(1e-3, 1.0);
        let (a, na) = step(&fig4_state(), &model, &cfg, &mut RngStream::new(5, 3)).unwrap();
        let (b, nb) = step(&fig4_state(), &model, &cfg, &mut RngStream::new(5, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(na.to_bits(), nb.to_bits());
        assert!((a.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pre_norm_stays_close_at_fig4_step() {
        let model = fig4_model();
        let cfg = config(1e-3, 50.0);
        let mut stream = RngStream::new(8, 0);
        let summary = integrate(&fig4_state(), &model, &cfg, &mut stream, |_, _, _, _, _| {}).unwrap();
        assert!(summary.max_norm_drift < 0.05);
    }

    #[test]
    fn eigenstate_collapses_immediately() {
        let model = fig4_model();
        let rec = run_trajectory(&StateVector::basis(3, 2).unwrap(), &model, &config(1e-3, 1.0), &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(rec.outcome, Some(2));
        assert_eq!(rec.collapse_time, Some(0.0));
    }

    #[test]
    fn fig4_trajectory_collapses_within_femtoseconds() {
        let model = fig4_model();
        let cfg = QsdConfig { dt: 1e-3, t_max: 200.0, record_stride: 1000, collapse_epsilon: 1e-3 };
        let rec = run_trajectory(&fig4_state(), &model, &cfg, &mut RngStream::new(42, 0)).unwrap();
        assert!(rec.outcome.is_some());
        let t = rec.collapse_time.unwrap();
        assert!(crate::constants::au_to_fs(t) < 5.0, "{t}");
        assert_eq!(rec.times.len(), 201);
        for p in &rec.populations {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn absorbed_eigenstate_stays() {
        let model = fig4_model();
        let eps: f64 = 1e-9;
        let psi = StateVector::from_real(&[(eps / 2.0).sqrt(), (1.0 - eps).sqrt(), (eps / 2.0).sqrt()]).unwrap();
        let cfg = QsdConfig { dt: 1e-3, t_max: 10.0, record_stride: 1000, collapse_epsilon: 1e-3 };
        let rec = run_trajectory(&psi, &model, &cfg, &mut RngStream::new(2, 9)).unwrap();
        for p in &rec.populations {
            assert!((p[1] - (1.0 - eps)).abs() < 1e-6);
        }
    }

    #[test]
    fn model_constructors() {
        let h = HermitianOperator::harmonic_oscillator(3, 1.0).unwrap();
        let m = make_hamiltonian_model(h.clone(), 0.25).unwrap();
        assert_eq!(m.collapse_ops(), std::slice::from_ref(&h));
        assert_eq!(m.eta(), Some(0.25));

        let h2 = HermitianOperator::zeros(2).unwrap();
        let pos = make_position_model(h2.clone(), &[-1.0, 2.0], 0.1).unwrap();
        assert_eq!(pos.collapse_ops()[0].as_real_diagonal(), Some(vec![-1.0, 2.0]));
        assert!(make_position_model(h2.clone(), &[1.0], 0.1).is_err());

        let num = make_number_model(h2.clone(), site_number_operators(2).unwrap(), 0.1).unwrap();
        assert_eq!(num.collapse_ops().len(), 2);

        assert!(matches!(make_hamiltonian_model(h, 0.0), Err(QsdError::BadParameter { name: "eta", .. })));
    }

    #[test]
    fn mass_density_model_on_four_cells() {
        let sigma = 0.5e-10;
        let grid: Vec<[f64; 3]> = (0..4).map(|i| [i as f64 * 1e-10, 0.0, 0.0]).collect();
        let m1 = 2.0e-26;
        let m2 = 1.0e-26;
        // basis state 0: masses at cells 0 and 1; basis state 1: shifted by one cell
        let up = MassDistribution::new(vec![([0.0, 0.0, 0.0], m1), ([1e-10, 0.0, 0.0], m2)], sigma).unwrap();
        let down = MassDistribution::new(vec![([1e-10, 0.0, 0.0], m1), ([2e-10, 0.0, 0.0], m2)], sigma).unwrap();
        let h = HermitianOperator::zeros(2).unwrap();
        let model = make_mass_density_model(h, &[up, down], &grid, 1e-10, 1.0).unwrap();
        assert_eq!(model.collapse_ops().len(), 4);
        assert_eq!(model.family(), ModelFamily::MassDensity);

        // hand computation: weights exp(-k^2 / (2 * 0.25)) = exp(-2 k^2) for k cells away
        let w = |k: i32| (-2.0 * (k * k) as f64).exp();
        let weights_at = |centre: i32| {
            let raw: Vec<f64> = (0..4).map(|c| w(c - centre)).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / t).collect::<Vec<_>>()
        };
        let (w0, w1, w2) = (weights_at(0), weights_at(1), weights_at(2));
        let mut total = [0.0; 2];
        for (c, op) in model.collapse_ops().iter().enumerate() {
            assert!(crate::hilbert::hermitian_defect(op.matrix()) == 0.0);
            let d = op.as_real_diagonal().unwrap();
            let want_up = m1 * w0[c] + m2 * w1[c];
            let want_down = m1 * w1[c] + m2 * w2[c];
            assert!((d[0] - want_up).abs() < 1e-12 * m1);
            assert!((d[1] - want_down).abs() < 1e-12 * m1);
            total[0] += d[0];
            total[1] += d[1];
        }
        for t in total {
            assert!((t - (m1 + m2)).abs() < 1e-12 * m1);
        }
    }

    #[test]
    fn correlated_drift_matches_independent_when_diagonal() {
        let h = HermitianOperator::harmonic_oscillator(3, 1.0).unwrap();
        let ops = vec![h.clone(), HermitianOperator::from_real_diagonal(&[0.0, 1.0, 0.0]).unwrap()];
        let eta = 0.3;
        let indep = CollapseModel::new(h.clone(), ops.clone(), eta, ModelFamily::Custom).unwrap();
        let field = CorrelatedFieldNoise::from_rate_matrix(vec![[0.0; 3]; 2], DMatrix::identity(2, 2).scale(eta)).unwrap();
        let corr = CollapseModel::with_correlated_noise(h, ops, field, ModelFamily::Custom).unwrap();
        let psi = fig4_state();
        let a = qsd_increment(&psi, &indep, &[0.1, -0.2], 1e-2).unwrap();
        let b = qsd_increment(&psi, &corr, &[0.1, -0.2], 1e-2).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).norm() < 1e-16);
        }
    }

    #[test]
    fn record_times_include_endpoint() {
        let cfg = QsdConfig { dt: 0.1, t_max: 1.05, record_stride: 4, collapse_epsilon: 1e-3 };
        assert_eq!(cfg.n_steps(), 11);
        assert_eq!(cfg.record_steps(), vec![0, 4, 8, 11]);
        assert!(QsdConfig { dt: -1.0, ..cfg }.validate().is_err());
        assert!(QsdConfig { collapse_epsilon: 0.6, ..cfg }.validate().is_err());
    }
}
