//! Deterministic master-equation propagation (atomic units).
//!
//! `drho/dt = -i[H, rho] + sum_k rate_k (L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho})`
//!
//! A QSD model with Hermitian operators `A_m` and noise rate `Q` averages to
//! `sum_mn Q_mn (A_m rho A_n - 1/2 {A_n A_m, rho})`; diagonalizing `Q` turns
//! that into the form above.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::hilbert::{DensityOperator, DensityTolerance, HermitianOperator, HilbertError, C64};
use crate::qsd::{CollapseModel, NoiseSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("rate {index} is {rate}; rates must be finite and non-negative")]
    BadRate { index: usize, rate: f64 },
    #[error("bad parameter {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("trace drifted to {trace} at t = {t}; reduce the step")]
    StepTooLarge { t: f64, trace: f64 },
}

/// Tolerances for densities produced by RK4 propagation.
pub const PROPAGATED: DensityTolerance = DensityTolerance { hermitian: 1e-10, trace: 1e-8, min_eigenvalue: -1e-8 };

const TRACE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquationModel {
    hamiltonian: HermitianOperator,
    lindblad_ops: Vec<(DMatrix<C64>, f64)>,
    // L^dag L per operator, premultiplied by rate / 2
    half_damping: Vec<DMatrix<C64>>,
}

impl MasterEquationModel {
    pub fn new(hamiltonian: HermitianOperator, lindblad_ops: Vec<(DMatrix<C64>, f64)>) -> Result<Self, LindbladError> {
        let dim = hamiltonian.dim();
        for (index, (l, rate)) in lindblad_ops.iter().enumerate() {
            if !(*rate >= 0.0 && rate.is_finite()) {
                return Err(LindbladError::BadRate { index, rate: *rate });
            }
            if l.nrows() != dim || l.ncols() != dim {
                return Err(HilbertError::DimMismatch { expected: dim, found: l.nrows() }.into());
            }
        }
        let half_damping = lindblad_ops
            .iter()
            .map(|(l, rate)| (l.adjoint() * l).scale(0.5 * rate))
            .collect();
        Ok(Self { hamiltonian, lindblad_ops, half_damping })
    }

    /// Hermitian operators sharing one rate.
    pub fn dephasing(hamiltonian: HermitianOperator, ops: &[HermitianOperator], rate: f64) -> Result<Self, LindbladError> {
        Self::new(hamiltonian, ops.iter().map(|a| (a.matrix().clone(), rate)).collect())
    }

    /// Ensemble image of a QSD model.
    pub fn from_collapse_model(model: &CollapseModel) -> Result<Self, LindbladError> {
        let ops = model.collapse_ops();
        let h = model.hamiltonian().clone();
        match model.noise() {
            NoiseSpec::Independent { eta } => Self::dephasing(h, ops, *eta),
            NoiseSpec::Correlated(field) => {
                let eig = SymmetricEigen::new(field.rate().clone());
                let dim = model.dim();
                let mut lindblad_ops = Vec::with_capacity(ops.len());
                for (k, &q) in eig.eigenvalues.iter().enumerate() {
                    let mut l = DMatrix::<C64>::zeros(dim, dim);
                    for (m, a) in ops.iter().enumerate() {
                        l += a.matrix().scale(eig.eigenvectors[(m, k)]);
                    }
                    // a positive-definite rate matrix has no negative modes beyond rounding
                    lindblad_ops.push((l, q.max(0.0)));
                }
                Self::new(h, lindblad_ops)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.hamiltonian
    }

    pub fn lindblad_ops(&self) -> &[(DMatrix<C64>, f64)] {
        &self.lindblad_ops
    }

    pub fn max_rate(&self) -> f64 {
        self.lindblad_ops.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    /// `min(1e-3, 0.01 / max rate)`.
    pub fn default_step(&self) -> f64 {
        let r = self.max_rate();
        if r > 0.0 {
            (0.01 / r).min(1e-3)
        } else {
            1e-3
        }
    }

    fn rhs_matrix(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let h = self.hamiltonian.matrix();
        let i = C64::new(0.0, 1.0);
        let mut out = (h * rho - rho * h) * (-i);
        for ((l, rate), damp) in self.lindblad_ops.iter().zip(&self.half_damping) {
            if *rate == 0.0 {
                continue;
            }
            out += (l * rho * l.adjoint()).scale(*rate);
            out -= damp * rho + rho * damp;
        }
        out
    }
}

pub fn rhs(rho: &DensityOperator, model: &MasterEquationModel) -> Result<DMatrix<C64>, LindbladError> {
    check_dim(rho, model)?;
    Ok(model.rhs_matrix(rho.matrix()))
}

fn check_dim(rho: &DensityOperator, model: &MasterEquationModel) -> Result<(), LindbladError> {
    if rho.dim() != model.dim() {
        return Err(HilbertError::DimMismatch { expected: model.dim(), found: rho.dim() }.into());
    }
    Ok(())
}

fn rk4_step(model: &MasterEquationModel, rho: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
    let k1 = model.rhs_matrix(rho);
    let k2 = model.rhs_matrix(&(rho + k1.scale(0.5 * h)));
    let k3 = model.rhs_matrix(&(rho + k2.scale(0.5 * h)));
    let k4 = model.rhs_matrix(&(rho + k3.scale(h)));
    rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h / 6.0)
}

/// Advances `rho` by `span` in equal substeps no longer than `dt`.
fn advance(
    model: &MasterEquationModel,
    rho: &mut DMatrix<C64>,
    t0: f64,
    span: f64,
    dt: f64,
) -> Result<(), LindbladError> {
    if span == 0.0 {
        return Ok(());
    }
    let n = (span / dt).ceil().max(1.0) as usize;
    let h = span / n as f64;
    for k in 1..=n {
        *rho = rk4_step(model, rho, h);
        let tr = rho.trace();
        if !((tr.re - 1.0).abs() <= TRACE_GUARD && tr.im.abs() <= TRACE_GUARD) {
            return Err(LindbladError::StepTooLarge { t: t0 + k as f64 * h, trace: tr.re });
        }
    }
    Ok(())
}

fn check_step(t: f64, dt: f64) -> Result<(), LindbladError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LindbladError::BadParameter { name: "t", value: t });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LindbladError::BadParameter { name: "dt", value: dt });
    }
    Ok(())
}

/// Classic RK4 from 0 to `t` with steps of at most `dt`.
pub fn propagate(
    rho0: &DensityOperator,
    model: &MasterEquationModel,
    t: f64,
    dt: f64,
) -> Result<DensityOperator, LindbladError> {
    check_dim(rho0, model)?;
    check_step(t, dt)?;
    let mut rho = rho0.matrix().clone();
    advance(model, &mut rho, 0.0, t, dt)?;
    Ok(DensityOperator::with_tolerance(rho, PROPAGATED)?)
}

/// Densities at each of `times` (non-decreasing, starting at or after 0).
pub fn propagate_series(
    rho0: &DensityOperator,
    model: &MasterEquationModel,
    times: &[f64],
    dt: f64,
) -> Result<Vec<DensityOperator>, LindbladError> {
    check_dim(rho0, model)?;
    let mut rho = rho0.matrix().clone();
    let mut t_prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        check_step(t, dt)?;
        if t < t_prev {
            return Err(LindbladError::BadParameter { name: "times", value: t });
        }
        advance(model, &mut rho, t_prev, t - t_prev, dt)?;
        out.push(DensityOperator::with_tolerance(rho.clone(), PROPAGATED)?);
        t_prev = t;
    }
    Ok(out)
}

/// Two-level reduced density `[[|a|^2, a b* e^{-rt}], [a* b e^{-rt}, |b|^2]]`.
pub fn decoherence_demo(a: C64, b: C64, overlap_decay_rate: f64, t: f64) -> Result<DensityOperator, LindbladError> {
    let norm = a.norm_sqr() + b.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(LindbladError::BadParameter { name: "|a|^2 + |b|^2", value: norm });
    }
    if !(overlap_decay_rate >= 0.0 && overlap_decay_rate.is_finite()) {
        return Err(LindbladError::BadParameter { name: "overlap_decay_rate", value: overlap_decay_rate });
    }
    check_step(t, 1.0)?;
    let decay = if overlap_decay_rate == 0.0 { 1.0 } else { (-t * overlap_decay_rate).exp() };
    let c = a * b.conj() * decay;
    let m = DMatrix::from_row_slice(2, 2, &[C64::new(a.norm_sqr(), 0.0), c, c.conj(), C64::new(b.norm_sqr(), 0.0)]);
    Ok(DensityOperator::with_tolerance(m, PROPAGATED)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::StateVector;
    use crate::qsd::{make_hamiltonian_model, ModelFamily};
    use approx::assert_abs_diff_eq;

    fn plus_state() -> DensityOperator {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DensityOperator::from_pure(&StateVector::from_real(&[s, s]).unwrap()).unwrap()
    }

    fn dephasing_qubit(rate: f64) -> MasterEquationModel {
        MasterEquationModel::dephasing(HermitianOperator::zeros(2).unwrap(), &[HermitianOperator::pauli_z()], rate).unwrap()
    }

    #[test]
    fn zero_rate_is_von_neumann() {
        let h = HermitianOperator::pauli_x().scale(0.7);
        let model = MasterEquationModel::dephasing(h.clone(), &[HermitianOperator::pauli_z()], 0.0).unwrap();
        let rho = plus_state();
        let d = rhs(&rho, &model).unwrap();
        let comm = (h.matrix() * rho.matrix() - rho.matrix() * h.matrix()) * C64::new(0.0, -1.0);
        assert_eq!(d, comm);
    }

    #[test]
    fn dephasing_rhs_matches_entrywise_expansion() {
        let eta = 0.3;
        let model = dephasing_qubit(eta);
        let rho = DensityOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.4, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.6, 0.0)],
        ))
        .unwrap();
        let d = rhs(&rho, &model).unwrap();
        // sigma_z rho sigma_z flips the off-diagonal sign: eta (s rho s - rho) = -2 eta c
        assert_abs_diff_eq!(d[(0, 1)].re, -2.0 * eta * 0.1, epsilon = 1e-16);
        assert_abs_diff_eq!(d[(0, 1)].im, -2.0 * eta * 0.2, epsilon = 1e-16);
        assert_eq!(d[(0, 0)], C64::new(0.0, 0.0));
        assert_eq!(d[(1, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn common_eigenprojector_is_stationary() {
        let h = HermitianOperator::harmonic_oscillator(3, 1.0).unwrap();
        let model = MasterEquationModel::dephasing(h.clone(), &[h], 0.25).unwrap();
        let rho = DensityOperator::from_pure(&StateVector::basis(3, 2).unwrap()).unwrap();
        let d = rhs(&rho, &model).unwrap();
        assert!(d.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_time_returns_input() {
        let rho = plus_state();
        let out = propagate(&rho, &dephasing_qubit(0.25), 0.0, 1e-3).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn dephasing_decays_by_e_at_two_au() {
        let model = dephasing_qubit(0.25);
        let rho = plus_state();
        let out = propagate(&rho, &model, 2.0, model.default_step()).unwrap();
        assert_abs_diff_eq!(out.matrix()[(0, 1)].norm(), 0.5 / std::f64::consts::E, epsilon = 1e-6);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fig4_lindblad_keeps_diagonal() {
        let h = HermitianOperator::harmonic_oscillator(3, 1.0).unwrap();
        let model = MasterEquationModel::dephasing(h.clone(), &[h], 0.25).unwrap();
        let psi = StateVector::from_real(&[(1.0f64 / 6.0).sqrt(), (2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt()]).unwrap();
        let rho = DensityOperator::from_pure(&psi).unwrap();
        let times = [0.5, 1.0, 4.0, 10.0];
        let series = propagate_series(&rho, &model, &times, 1e-3).unwrap();
        for (r, t) in series.iter().zip(times) {
            for (p, want) in r.populations().iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
                assert_abs_diff_eq!(*p, want, epsilon = 1e-12);
            }
            // coherences between levels j, k decay as exp(-eta (E_j - E_k)^2 t / 2)
            let c01 = (1.0f64 / 6.0 * 2.0 / 3.0).sqrt() * (-0.125 * t).exp();
            assert_abs_diff_eq!(r.matrix()[(0, 1)].norm(), c01, epsilon = 1e-9);
        }
    }

    #[test]
    fn series_matches_single_propagation() {
        let model = MasterEquationModel::dephasing(HermitianOperator::pauli_x().scale(0.5), &[HermitianOperator::pauli_z()], 0.25)
            .unwrap();
        let rho = plus_state();
        let series = propagate_series(&rho, &model, &[0.0, 0.7, 1.5], 1e-3).unwrap();
        assert_eq!(series[0], rho);
        let direct = propagate(&rho, &model, 1.5, 1e-3).unwrap();
        assert!(crate::hilbert::max_abs(&(series[2].matrix() - direct.matrix())) < 1e-12);
    }

    #[test]
    fn huge_step_is_rejected() {
        let model = dephasing_qubit(50.0);
        let err = propagate(&plus_state(), &model, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, LindbladError::StepTooLarge { .. } | LindbladError::Hilbert(_)), "{err:?}");
    }

    #[test]
    fn rejects_negative_rate_and_dims() {
        let h = HermitianOperator::zeros(2).unwrap();
        assert!(matches!(
            MasterEquationModel::new(h.clone(), vec![(DMatrix::identity(2, 2), -0.1)]),
            Err(LindbladError::BadRate { index: 0, .. })
        ));
        assert!(MasterEquationModel::new(h, vec![(DMatrix::identity(3, 3), 0.1)]).is_err());
        let rho3 = DensityOperator::from_pure(&StateVector::basis(3, 0).unwrap()).unwrap();
        assert!(rhs(&rho3, &dephasing_qubit(0.1)).is_err());
    }

    #[test]
    fn default_step_rule() {
        assert_eq!(dephasing_qubit(0.25).default_step(), 1e-3);
        assert_abs_diff_eq!(dephasing_qubit(100.0).default_step(), 1e-4, epsilon = 1e-18);
        assert_eq!(dephasing_qubit(0.0).default_step(), 1e-3);
    }

    #[test]
    fn from_collapse_model_independent() {
        let h = HermitianOperator::harmonic_oscillator(3, 1.0).unwrap();
        let qsd = make_hamiltonian_model(h.clone(), 0.25).unwrap();
        let me = MasterEquationModel::from_collapse_model(&qsd).unwrap();
        assert_eq!(me.lindblad_ops().len(), 1);
        assert_eq!(me.lindblad_ops()[0].1, 0.25);
        assert_eq!(&me.lindblad_ops()[0].0, h.matrix());
    }

    #[test]
    fn from_collapse_model_correlated_matches_double_sum() {
        use crate::noise::CorrelatedFieldNoise;
        let h = HermitianOperator::zeros(2).unwrap();
        let ops = vec![HermitianOperator::pauli_z(), HermitianOperator::pauli_x()];
        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.3]);
        let field = CorrelatedFieldNoise::from_rate_matrix(vec![[0.0; 3]; 2], q.clone()).unwrap();
        let model = CollapseModel::with_correlated_noise(h, ops.clone(), field, ModelFamily::Custom).unwrap();
        let me = MasterEquationModel::from_collapse_model(&model).unwrap();
        let rho = DensityOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.7, 0.0), C64::new(0.2, 0.1), C64::new(0.2, -0.1), C64::new(0.3, 0.0)],
        ))
        .unwrap();
        let got = rhs(&rho, &me).unwrap();
        let r = rho.matrix();
        let mut want = DMatrix::<C64>::zeros(2, 2);
        for m in 0..2 {
            for n in 0..2 {
                let (am, an) = (ops[m].matrix(), ops[n].matrix());
                let anam = an * am;
                want += (am * r * an - (&anam * r + r * &anam).scale(0.5)).scale(q[(m, n)]);
            }
        }
        assert!(crate::hilbert::max_abs(&(got - want)) < 1e-14);
    }

    #[test]
    fn decoherence_demo_limits() {
        let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let r0 = decoherence_demo(a, b, 2.0, 0.0).unwrap();
        assert_eq!(r0.matrix()[(0, 1)], a * b.conj());
        let r1 = decoherence_demo(a, b, 2.0, 0.5).unwrap();
        assert_abs_diff_eq!(r1.matrix()[(0, 1)].norm(), 0.48 / std::f64::consts::E, epsilon = 1e-15);
        let rinf = decoherence_demo(a, b, 2.0, 1e6).unwrap();
        assert_eq!(rinf.matrix()[(0, 1)].norm(), 0.0);
        assert_abs_diff_eq!(rinf.matrix()[(1, 1)].re, 0.64, epsilon = 1e-15);
        assert!(decoherence_demo(a, a, 1.0, 1.0).is_err());
    }
}
