//! Finite-dimensional states, densities and Hermitian operators.
//!
//! Tensor products use lexicographic ordering with the leftmost factor
//! varying slowest: for factors of dims `(d0, d1)` the joint index of
//! `(i0, i1)` is `i0 * d1 + i1`. Every module relies on this convention.
//!
//! Validation (Hermiticity, unit trace, positivity) happens at construction
//! and is never repaired silently.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-14;

const HERMITIAN_TOL: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("dimension must be at least 1")]
    EmptyState,
    #[error("invalid ensemble weights: {0}")]
    BadWeights(String),
    #[error("basis is not orthonormal (overlap error {0:.3e})")]
    NonOrthonormalBasis(f64),
    #[error("matrix is not unitary (error {0:.3e})")]
    NonUnitary(f64),
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("not a valid density operator: {0}")]
    NotDensity(String),
    #[error("eigendecomposition did not converge")]
    ConvergenceFailure,
    #[error("factor index {index} out of range for {factors} factors")]
    BadFactor { index: usize, factors: usize },
}

pub type Result<T, E = HilbertError> = std::result::Result<T, E>;

/// Largest entry modulus, used to scale tolerances.
pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest `|m_ij - conj(m_ji)|`.
pub(crate) fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_square(m: &DMatrix<C64>) -> Result<usize> {
    if m.nrows() == 0 {
        return Err(HilbertError::EmptyState);
    }
    if m.nrows() != m.ncols() {
        return Err(HilbertError::DimMismatch { expected: m.nrows(), found: m.ncols() });
    }
    Ok(m.nrows())
}

/// A pure state `|psi>` as a dense amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    /// Wraps amplitudes as given; no normalization is applied.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(HilbertError::EmptyState);
        }
        Ok(Self { amps: DVector::from_vec(amps) })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub(crate) fn from_dvector(amps: DVector<C64>) -> Self {
        debug_assert!(!amps.is_empty());
        Self { amps }
    }

    /// Computational basis vector `|k>` of dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if dim == 0 {
            return Err(HilbertError::EmptyState);
        }
        if k >= dim {
            return Err(HilbertError::DimMismatch { expected: dim, found: k + 1 });
        }
        let mut amps = DVector::zeros(dim);
        amps[k] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// Returns `v / ||v||`.
    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !(n >= ZERO_NORM) {
            return Err(HilbertError::ZeroNorm);
        }
        Ok(Self { amps: self.amps.unscale(n) })
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.check_dim(other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    /// `|self> (x) |other>` in lexicographic order.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let (da, db) = (self.dim(), other.dim());
        let mut amps = DVector::zeros(da * db);
        for i in 0..da {
            for j in 0..db {
                amps[i * db + j] = self.amps[i] * other.amps[j];
            }
        }
        StateVector { amps }
    }

    /// `|c_n|^2` in the computational basis.
    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `|psi><psi|`.
    pub fn projector(&self) -> DMatrix<C64> {
        &self.amps * self.amps.adjoint()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(HilbertError::DimMismatch { expected: dim, found: self.dim() });
        }
        Ok(())
    }
}

/// A self-adjoint matrix. Units depend on use (Hartree for Hamiltonians).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl SpectralDecomposition {
    pub fn eigenvector(&self, k: usize) -> StateVector {
        StateVector::from_dvector(self.vectors.column(k).into_owned())
    }

    pub fn eigenbasis(&self) -> Vec<StateVector> {
        (0..self.values.len()).map(|k| self.eigenvector(k)).collect()
    }

    /// `sum_k lambda_k v_k v_k^dagger`.
    pub fn reconstruct(&self) -> DMatrix<C64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.column(k);
            out += (v * v.adjoint()).scale(lambda);
        }
        out
    }
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        check_square(&matrix)?;
        let defect = hermitian_defect(&matrix);
        if defect > HERMITIAN_TOL * max_abs(&matrix).max(1.0) {
            return Err(HilbertError::NotHermitian(defect));
        }
        Ok(Self { matrix })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(HilbertError::EmptyState);
        }
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Ok(Self { matrix: DMatrix::from_diagonal(&d) })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_real_diagonal(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_real_diagonal(&vec![0.0; dim])
    }

    pub fn pauli_x() -> Self {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 0.0);
        m[(1, 0)] = C64::new(1.0, 0.0);
        Self { matrix: m }
    }

    pub fn pauli_z() -> Self {
        Self::from_real_diagonal(&[1.0, -1.0]).expect("non-empty")
    }

    /// Lowest `levels` eigenstates of a harmonic oscillator, energies
    /// `(n + 1/2) omega` in atomic units (hbar = 1). The mass does not
    /// enter the spectrum.
    pub fn harmonic_oscillator(levels: usize, omega: f64) -> Result<Self> {
        let e: Vec<f64> = (0..levels).map(|n| (n as f64 + 0.5) * omega).collect();
        Self::from_real_diagonal(&e)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { matrix: self.matrix.scale(s) }
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(HilbertError::DimMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(Self { matrix: &self.matrix + &other.matrix })
    }

    /// Real diagonal entries if every off-diagonal entry is exactly zero.
    pub fn as_real_diagonal(&self) -> Option<Vec<f64>> {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.matrix[(i, j)] != C64::new(0.0, 0.0) {
                    return None;
                }
            }
        }
        Some((0..n).map(|i| self.matrix[(i, i)].re).collect())
    }

    pub fn is_diagonal(&self) -> bool {
        self.as_real_diagonal().is_some()
    }

    /// `<psi|A|psi> / <psi|psi>`.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        psi.check_dim(self.dim())?;
        let norm2 = psi.amps.norm_squared();
        if norm2 < ZERO_NORM * ZERO_NORM {
            return Err(HilbertError::ZeroNorm);
        }
        let a_psi = &self.matrix * &psi.amps;
        Ok(psi.amps.dotc(&a_psi).re / norm2)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        psi.check_dim(self.dim())?;
        Ok(&self.matrix * &psi.amps)
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &HermitianOperator) -> Result<DMatrix<C64>> {
        if other.dim() != self.dim() {
            return Err(HilbertError::DimMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(&self.matrix * &other.matrix - &other.matrix * &self.matrix)
    }

    /// Ascending eigenvalues with orthonormal eigenvectors.
    pub fn eigendecompose(&self) -> Result<SpectralDecomposition> {
        if let Some(diag) = self.as_real_diagonal() {
            let mut order: Vec<usize> = (0..diag.len()).collect();
            order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
            let n = diag.len();
            let mut vectors = DMatrix::zeros(n, n);
            for (col, &row) in order.iter().enumerate() {
                vectors[(row, col)] = C64::new(1.0, 0.0);
            }
            return Ok(SpectralDecomposition {
                values: order.iter().map(|&k| diag[k]).collect(),
                vectors,
            });
        }
        let eig = SymmetricEigen::try_new(self.matrix.clone(), f64::EPSILON, 10_000)
            .ok_or(HilbertError::ConvergenceFailure)?;
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(k));
        }
        Ok(SpectralDecomposition { values: order.iter().map(|&k| eig.eigenvalues[k]).collect(), vectors })
    }
}

/// Tolerances applied when validating a density matrix.
#[derive(Debug, Clone, Copy)]
pub struct DensityTolerance {
    pub hermitian: f64,
    pub trace: f64,
    /// Lowest admissible eigenvalue (negative).
    pub min_eigenvalue: f64,
}

impl DensityTolerance {
    pub const STRICT: Self = Self { hermitian: 1e-12, trace: 1e-12, min_eigenvalue: -1e-10 };
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        Self::with_tolerance(matrix, DensityTolerance::STRICT)
    }

    pub fn with_tolerance(matrix: DMatrix<C64>, tol: DensityTolerance) -> Result<Self> {
        check_square(&matrix)?;
        let defect = hermitian_defect(&matrix);
        if defect > tol.hermitian {
            return Err(HilbertError::NotDensity(format!("Hermiticity defect {defect:.3e}")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(HilbertError::NotDensity(format!("trace {tr}")));
        }
        let min_eig = min_eigenvalue(&matrix)?;
        if min_eig < tol.min_eigenvalue {
            return Err(HilbertError::NotDensity(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &StateVector) -> Result<Self> {
        Self::new(psi.projector())
    }

    /// `rho = sum_i p_i |psi_i><psi_i|`.
    pub fn from_ensemble(pairs: &[(f64, StateVector)]) -> Result<Self> {
        let (_, first) = pairs
            .first()
            .ok_or_else(|| HilbertError::BadWeights("empty ensemble".into()))?;
        let dim = first.dim();
        let mut total = 0.0;
        let mut rho = DMatrix::zeros(dim, dim);
        for (p, psi) in pairs {
            if !(*p >= 0.0) {
                return Err(HilbertError::BadWeights(format!("negative weight {p}")));
            }
            psi.check_dim(dim)?;
            if (psi.norm() - 1.0).abs() > 1e-10 {
                return Err(HilbertError::BadWeights("member state not normalized".into()));
            }
            total += p;
            rho += psi.projector().scale(*p);
        }
        if (total - 1.0).abs() > 1e-10 {
            return Err(HilbertError::BadWeights(format!("weights sum to {total}")));
        }
        Self::new(rho)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `Tr(rho^2)`; equals the squared Frobenius norm for Hermitian `rho`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        HermitianOperator { matrix: self.matrix.clone() }
            .eigendecompose()
            .map(|s| s.values)
    }

    /// Reduces onto factor `keep` of `space`, tracing out all other factors.
    pub fn partial_trace(&self, space: &CompositeSpace, keep: usize) -> Result<DensityOperator> {
        if space.total_dim() != self.dim() {
            return Err(HilbertError::DimMismatch { expected: space.total_dim(), found: self.dim() });
        }
        let dims = space.factor_dims();
        if keep >= dims.len() {
            return Err(HilbertError::BadFactor { index: keep, factors: dims.len() });
        }
        let d_keep = dims[keep];
        let stride: usize = dims[keep + 1..].iter().product();
        let total = self.dim();
        // joint index -> (kept digit, index of the remaining factors)
        let split = |i: usize| {
            let digit = (i / stride) % d_keep;
            let rest = (i / (stride * d_keep)) * stride + i % stride;
            (digit, rest)
        };
        let keys: Vec<(usize, usize)> = (0..total).map(split).collect();
        let mut out = DMatrix::zeros(d_keep, d_keep);
        for i in 0..total {
            let (a, ri) = keys[i];
            for j in 0..total {
                let (b, rj) = keys[j];
                if ri == rj {
                    out[(a, b)] += self.matrix[(i, j)];
                }
            }
        }
        Ok(DensityOperator { matrix: out })
    }

    /// Kronecker product `self (x) other`.
    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator { matrix: self.matrix.kronecker(&other.matrix) }
    }
}

fn min_eigenvalue(m: &DMatrix<C64>) -> Result<f64> {
    let herm = HermitianOperator { matrix: m.clone() };
    let vals = herm.eigendecompose()?.values;
    Ok(vals.first().copied().unwrap_or(0.0))
}

/// Ordered list of factor dimensions of a tensor-product space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeSpace {
    factor_dims: Vec<usize>,
}

impl CompositeSpace {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() || factor_dims.contains(&0) {
            return Err(HilbertError::EmptyState);
        }
        Ok(Self { factor_dims })
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn total_dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    /// Joint index of per-factor indices.
    pub fn joint_index(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.factor_dims.len() {
            return Err(HilbertError::DimMismatch { expected: self.factor_dims.len(), found: digits.len() });
        }
        let mut idx = 0;
        for (&d, &i) in self.factor_dims.iter().zip(digits) {
            if i >= d {
                return Err(HilbertError::DimMismatch { expected: d, found: i + 1 });
            }
            idx = idx * d + i;
        }
        Ok(idx)
    }
}

/// `p_n = |<o_n|psi>|^2` over an orthonormal (possibly incomplete) basis.
pub fn born_probabilities(psi: &StateVector, basis: &[StateVector]) -> Result<Vec<f64>> {
    for b in basis {
        psi.check_dim(b.dim())?;
    }
    let mut worst = 0.0_f64;
    for (i, bi) in basis.iter().enumerate() {
        for (j, bj) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((bi.amps.dotc(&bj.amps) - C64::new(target, 0.0)).norm());
        }
    }
    if worst > ORTHONORMAL_TOL {
        return Err(HilbertError::NonOrthonormalBasis(worst));
    }
    let norm2 = psi.amps.norm_squared();
    if norm2 < ZERO_NORM * ZERO_NORM {
        return Err(HilbertError::ZeroNorm);
    }
    Ok(basis.iter().map(|b| b.amps.dotc(&psi.amps).norm_sqr() / norm2).collect())
}

/// `U |psi>` for unitary `U`.
pub fn basis_transform(psi: &StateVector, u: &DMatrix<C64>) -> Result<StateVector> {
    let n = check_square(u)?;
    psi.check_dim(n)?;
    let defect = max_abs(&(u.adjoint() * u - DMatrix::identity(n, n)));
    if defect > UNITARY_TOL {
        return Err(HilbertError::NonUnitary(defect));
    }
    Ok(StateVector { amps: u * &psi.amps })
}

/// The Hadamard matrix, mapping `|up>, |down>` to `|+>, |->`.
pub fn hadamard() -> DMatrix<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(2, 2, &[C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn fig4_state() -> StateVector {
        StateVector::from_real(&[(1.0f64 / 6.0).sqrt(), (2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt()]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let v = StateVector::from_real(&[2.0, 0.0]).unwrap().normalize().unwrap();
        assert_eq!(v.amplitudes()[0], c(1.0));
        let v = StateVector::from_real(&[1.0, 1.0]).unwrap().normalize().unwrap();
        assert_abs_diff_eq!(v.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(v.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let z = StateVector::from_real(&[0.0, 0.0]).unwrap();
        assert_eq!(z.normalize(), Err(HilbertError::ZeroNorm));
        assert_eq!(StateVector::from_real(&[]), Err(HilbertError::EmptyState));
    }

    #[test]
    fn expectation_examples() {
        let psi = StateVector::from_real(&[0.3, -0.4, 0.5]).unwrap();
        let id = HermitianOperator::identity(3).unwrap();
        assert_abs_diff_eq!(id.expectation(&psi).unwrap(), 1.0, epsilon = 1e-14);

        let h = HermitianOperator::harmonic_oscillator(3, 1.0).unwrap();
        let ground = StateVector::basis(3, 0).unwrap();
        assert_abs_diff_eq!(h.expectation(&ground).unwrap(), 0.5, epsilon = 1e-14);

        // brute-force <psi|H|psi> by explicit index sums
        let psi = fig4_state();
        let m = h.matrix();
        let a = psi.amplitudes();
        let mut brute = C64::new(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                brute += a[i].conj() * m[(i, j)] * a[j];
            }
        }
        assert_abs_diff_eq!(brute.re, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(h.expectation(&psi).unwrap(), 1.5, epsilon = 1e-14);

        let short = StateVector::basis(2, 0).unwrap();
        assert!(matches!(h.expectation(&short), Err(HilbertError::DimMismatch { .. })));
    }

    #[test]
    fn ensemble_examples() {
        let up = StateVector::basis(2, 0).unwrap();
        let down = StateVector::basis(2, 1).unwrap();
        let rho = DensityOperator::from_ensemble(&[(1.0, up.clone())]).unwrap();
        assert_eq!(rho.populations(), vec![1.0, 0.0]);

        let rho = DensityOperator::from_ensemble(&[(0.5, up.clone()), (0.5, down.clone())]).unwrap();
        assert_eq!(rho.populations(), vec![0.5, 0.5]);

        let plus = StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        let minus = StateVector::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).unwrap();
        let rho = DensityOperator::from_ensemble(&[(0.5, plus), (0.5, minus)]).unwrap();
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.matrix()[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-15);

        assert!(matches!(
            DensityOperator::from_ensemble(&[(0.7, up.clone()), (0.7, down)]),
            Err(HilbertError::BadWeights(_))
        ));
        assert!(matches!(DensityOperator::from_ensemble(&[(-0.5, up.clone()), (1.5, up)]), Err(HilbertError::BadWeights(_))));
    }

    #[test]
    fn purity_examples() {
        let up = StateVector::basis(2, 0).unwrap();
        let down = StateVector::basis(2, 1).unwrap();
        assert_abs_diff_eq!(DensityOperator::from_pure(&up).unwrap().purity(), 1.0);
        let mixed = DensityOperator::from_ensemble(&[(0.5, up), (0.5, down)]).unwrap();
        assert_abs_diff_eq!(mixed.purity(), 0.5);
        let pairs: Vec<_> = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, StateVector::basis(3, k).unwrap()))
            .collect();
        let rho = DensityOperator::from_ensemble(&pairs).unwrap();
        assert_abs_diff_eq!(rho.purity(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn tensor_examples() {
        let up = StateVector::basis(2, 0).unwrap();
        let e0 = StateVector::basis(2, 0).unwrap();
        let j = up.tensor(&e0);
        assert_eq!(j, StateVector::basis(4, 0).unwrap());

        let (a, b) = (0.6, 0.8);
        let ab = StateVector::from_real(&[a, b]).unwrap().tensor(&e0);
        assert_eq!(ab.amplitudes().as_slice(), &[c(a), c(0.0), c(b), c(0.0)]);

        let h = StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap();
        for z in h.tensor(&h).amplitudes().iter() {
            assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn partial_trace_examples() {
        let space = CompositeSpace::new(vec![2, 2]).unwrap();
        // a|up>|e1> + b|down>|e2>, orthogonal environment states
        let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
        let mut amps = vec![C64::new(0.0, 0.0); 4];
        amps[space.joint_index(&[0, 0]).unwrap()] = a;
        amps[space.joint_index(&[1, 1]).unwrap()] = b;
        let psi = StateVector::from_amplitudes(amps).unwrap();
        let red = DensityOperator::from_pure(&psi).unwrap().partial_trace(&space, 0).unwrap();
        assert_abs_diff_eq!(red.matrix()[(0, 0)].re, 0.36, epsilon = 1e-15);
        assert_abs_diff_eq!(red.matrix()[(1, 1)].re, 0.64, epsilon = 1e-15);
        assert_eq!(red.matrix()[(0, 1)], C64::new(0.0, 0.0));

        // overlapping environments keep a coherence a b* <e2|e1>
        let e1 = StateVector::basis(2, 0).unwrap();
        let e2 = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let up = StateVector::basis(2, 0).unwrap();
        let down = StateVector::basis(2, 1).unwrap();
        let mut joint = up.tensor(&e1).amplitudes().scale(0.6);
        joint += down.tensor(&e2).amplitudes().scale(0.8);
        let psi = StateVector::from_dvector(joint);
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-15);
        let red = DensityOperator::from_pure(&psi).unwrap().partial_trace(&space, 0).unwrap();
        assert_abs_diff_eq!(red.matrix()[(0, 1)].re, 0.6 * 0.8 * 0.6, epsilon = 1e-14);

        let bell = StateVector::from_real(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap();
        let red = DensityOperator::from_pure(&bell).unwrap().partial_trace(&space, 1).unwrap();
        assert_abs_diff_eq!(red.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(red.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-15);

        let rho_a = DensityOperator::from_ensemble(&[(0.25, up.clone()), (0.75, down.clone())]).unwrap();
        let rho_b = DensityOperator::from_pure(&StateVector::from_real(&[0.6, 0.8]).unwrap()).unwrap();
        let three = CompositeSpace::new(vec![2, 2]).unwrap();
        let prod = rho_a.tensor(&rho_b);
        let back = prod.partial_trace(&three, 0).unwrap();
        assert!(max_abs(&(back.matrix() - rho_a.matrix())) < 1e-15);

        assert!(matches!(
            rho_a.partial_trace(&space, 0),
            Err(HilbertError::DimMismatch { .. })
        ));
    }

    #[test]
    fn partial_trace_middle_factor() {
        // |0>|1>|0> on dims (2,3,2): keeping factor 1 gives |1><1|
        let space = CompositeSpace::new(vec![2, 3, 2]).unwrap();
        let idx = space.joint_index(&[0, 1, 0]).unwrap();
        let psi = StateVector::basis(12, idx).unwrap();
        let red = DensityOperator::from_pure(&psi).unwrap().partial_trace(&space, 1).unwrap();
        assert_eq!(red.populations(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn born_examples() {
        let basis: Vec<_> = (0..3).map(|k| StateVector::basis(3, k).unwrap()).collect();
        assert_eq!(born_probabilities(&basis[1], &basis).unwrap(), vec![0.0, 1.0, 0.0]);
        let p = born_probabilities(&fig4_state(), &basis).unwrap();
        for (got, want) in p.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let pm = vec![
            StateVector::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap(),
            StateVector::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).unwrap(),
        ];
        let p = born_probabilities(&StateVector::basis(2, 0).unwrap(), &pm).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);

        let skew = vec![StateVector::basis(2, 0).unwrap(), StateVector::from_real(&[0.6, 0.8]).unwrap()];
        assert!(matches!(
            born_probabilities(&pm[0], &skew),
            Err(HilbertError::NonOrthonormalBasis(_))
        ));
    }

    #[test]
    fn basis_transform_examples() {
        let psi = StateVector::from_amplitudes(vec![C64::new(0.6, 0.1), C64::new(0.0, -0.79)]).unwrap();
        let id = DMatrix::identity(2, 2);
        assert_eq!(basis_transform(&psi, &id).unwrap(), psi);

        let up = StateVector::basis(2, 0).unwrap();
        let plus = basis_transform(&up, &hadamard()).unwrap();
        assert_abs_diff_eq!(plus.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(plus.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);

        let theta: f64 = 0.37;
        let u = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(theta.cos(), 0.0),
                C64::new(0.0, theta.sin()),
                C64::new(0.0, theta.sin()),
                C64::new(theta.cos(), 0.0),
            ],
        );
        let there = basis_transform(&psi, &u).unwrap();
        let back = basis_transform(&there, &u.adjoint()).unwrap();
        for (x, y) in back.amplitudes().iter().zip(psi.amplitudes().iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        let bad = DMatrix::from_element(2, 2, c(1.0));
        assert!(matches!(basis_transform(&psi, &bad), Err(HilbertError::NonUnitary(_))));
    }

    #[test]
    fn eigendecompose_examples() {
        let d = HermitianOperator::from_real_diagonal(&[2.0, 1.0]).unwrap();
        let s = d.eigendecompose().unwrap();
        assert_eq!(s.values, vec![1.0, 2.0]);
        assert_eq!(s.eigenvector(0), StateVector::basis(2, 1).unwrap());

        let x = HermitianOperator::pauli_x();
        let s = x.eigendecompose().unwrap();
        assert_abs_diff_eq!(s.values[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[1], 1.0, epsilon = 1e-12);
        let v0 = s.eigenvector(0);
        // (1, -1)/sqrt2 up to a global phase
        let ratio = v0.amplitudes()[1] / v0.amplitudes()[0];
        assert!((ratio + c(1.0)).norm() < 1e-10);
        assert!((s.reconstruct() - x.matrix()).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn rejects_non_hermitian_and_bad_densities() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.0), c(1.0)]);
        assert!(matches!(HermitianOperator::new(m), Err(HilbertError::NotHermitian(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(matches!(DensityOperator::new(neg), Err(HilbertError::NotDensity(_))));
        let tr2 = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(1.0)]);
        assert!(matches!(DensityOperator::new(tr2), Err(HilbertError::NotDensity(_))));
    }
}
