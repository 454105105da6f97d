//! Decoherence and gravitational collapse timescales (SI units).
//!
//! Point masses are smeared into normalized Gaussians of width `sigma`. For
//! two such Gaussians a distance `d` apart,
//!
//! ```text
//! int int g_i(r) g_j(r') / |r - r'| = erf(d / (2 sigma)) / d
//! ```
//!
//! which tends to `1 / (sigma sqrt(pi))` as `d -> 0`, so the gravitational
//! self-energy of a mass difference reduces to a signed pair sum.

use num_complex::Complex64;
use statrs::function::erf::erf;
use thiserror::Error;

use crate::constants::{G, HBAR, K_B};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimescaleError {
    #[error("bad parameter {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("smearing widths must be positive and equal ({0} vs {1})")]
    BadSigma(f64, f64),
    #[error("mass distribution is empty")]
    EmptyDistribution,
}

fn positive(name: &'static str, value: f64) -> Result<f64, TimescaleError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(TimescaleError::BadParameter { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, TimescaleError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(TimescaleError::BadParameter { name, value })
    }
}

/// A dielectric sphere superposed over `displacement` in a thermal gas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParameters {
    /// N/V, m^-3.
    pub number_density: f64,
    /// K.
    pub temperature: f64,
    /// Mass of a gas molecule, kg.
    pub molecular_mass: f64,
    /// Radius of the scattering sphere, m.
    pub size: f64,
    /// Separation of the superposed geometries, m.
    pub displacement: f64,
}

impl GasParameters {
    /// Ammonia at room temperature and pressure with molecular-scale size
    /// and inversion displacement.
    pub const NH3_ROOM: GasParameters = GasParameters {
        number_density: 2.5e25,
        temperature: 300.0,
        molecular_mass: 2.82e-26,
        size: 2e-10,
        displacement: 7.6e-11,
    };
}

/// Scattering localization rate `Lambda = 8/(3 hbar^2) (N/V) sqrt(2 pi M) a^2 (k_B T)^{3/2}`,
/// in m^-2 s^-1.
pub fn joos_zeh_localization_rate(p: &GasParameters) -> Result<f64, TimescaleError> {
    let n = positive("number_density", p.number_density)?;
    let t = non_negative("temperature", p.temperature)?;
    let m = positive("molecular_mass", p.molecular_mass)?;
    let a = positive("size", p.size)?;
    Ok(8.0 / (3.0 * HBAR * HBAR) * n * (2.0 * std::f64::consts::PI * m).sqrt() * a * a * (K_B * t).powf(1.5))
}

/// Decoherence time `1 / (Lambda dx^2)`; infinite when `dx = 0` or `T = 0`.
pub fn joos_zeh_tau(p: &GasParameters) -> Result<f64, TimescaleError> {
    let dx = non_negative("displacement", p.displacement)?;
    let rate = joos_zeh_localization_rate(p)? * dx * dx;
    Ok(if rate > 0.0 { 1.0 / rate } else { f64::INFINITY })
}

/// `c0 exp(-t / tau_d)`.
pub fn coherence_decay(c0: Complex64, t: f64, tau_d: f64) -> Result<Complex64, TimescaleError> {
    non_negative("t", t)?;
    positive("tau_d", tau_d)?;
    Ok(c0 * (-t / tau_d).exp())
}

/// Gaussian-smeared point masses (positions in m, masses in kg).
#[derive(Debug, Clone, PartialEq)]
pub struct MassDistribution {
    points: Vec<([f64; 3], f64)>,
    smear_sigma: f64,
}

impl MassDistribution {
    pub fn new(points: Vec<([f64; 3], f64)>, smear_sigma: f64) -> Result<Self, TimescaleError> {
        positive("smear_sigma", smear_sigma).map_err(|_| TimescaleError::BadSigma(smear_sigma, smear_sigma))?;
        if points.is_empty() {
            return Err(TimescaleError::EmptyDistribution);
        }
        for (pos, m) in &points {
            positive("mass", *m)?;
            if pos.iter().any(|x| !x.is_finite()) {
                return Err(TimescaleError::BadParameter { name: "position", value: f64::NAN });
            }
        }
        Ok(Self { points, smear_sigma })
    }

    pub fn points(&self) -> &[([f64; 3], f64)] {
        &self.points
    }

    pub fn smear_sigma(&self) -> f64 {
        self.smear_sigma
    }

    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let points = self
            .points
            .iter()
            .map(|(p, m)| ([p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]], *m))
            .collect();
        Self { points, smear_sigma: self.smear_sigma }
    }

    pub fn scaled_mass(&self, factor: f64) -> Self {
        let points = self.points.iter().map(|(p, m)| (*p, m * factor)).collect();
        Self { points, smear_sigma: self.smear_sigma }
    }
}

/// Self-energy and collapse time of one superposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpResult {
    /// J.
    pub self_energy: f64,
    /// s; infinite when the self-energy vanishes.
    pub collapse_time: f64,
}

/// `int int g(r) g'(r') / |r - r'|` for unit Gaussians of width `sigma` whose
/// centres are `d` apart (m^-1).
pub fn gaussian_pair_kernel(d: f64, sigma: f64) -> f64 {
    let x = d / (2.0 * sigma);
    if x < 1e-4 {
        // erf(x)/d series; exact to double precision for x < 1e-4
        1.0 / (sigma * std::f64::consts::PI.sqrt()) * (1.0 - x * x / 3.0)
    } else {
        erf(x) / d
    }
}

/// Signed point list of `mu_up - mu_down`, with coincident points merged.
fn mass_difference(up: &MassDistribution, down: &MassDistribution) -> Vec<([f64; 3], f64)> {
    use std::collections::BTreeMap;
    let key = |p: &[f64; 3]| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()];
    let mut net: BTreeMap<[u64; 3], ([f64; 3], f64)> = BTreeMap::new();
    for (p, m) in up.points() {
        net.entry(key(p)).or_insert((*p, 0.0)).1 += m;
    }
    for (p, m) in down.points() {
        net.entry(key(p)).or_insert((*p, 0.0)).1 -= m;
    }
    net.into_values().filter(|(_, m)| *m != 0.0).collect()
}

fn signed_pair_sum(points: &[([f64; 3], f64)], sigma: f64) -> f64 {
    let row = |i: usize| {
        let (pi, mi) = points[i];
        let mut acc = 0.5 * mi * mi * gaussian_pair_kernel(0.0, sigma);
        for &(pj, mj) in &points[i + 1..] {
            let d = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2) + (pi[2] - pj[2]).powi(2)).sqrt();
            acc += mi * mj * gaussian_pair_kernel(d, sigma);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<f64> = {
        use rayon::prelude::*;
        (0..points.len()).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<f64> = (0..points.len()).map(row).collect();
    // ordered reduction keeps the result independent of thread count
    2.0 * rows.iter().sum::<f64>()
}

/// `E = 4 pi G int int dmu(r) dmu(r') / |r - r'|` with `dmu = mu_up - mu_down`.
pub fn dp_self_energy(up: &MassDistribution, down: &MassDistribution) -> Result<f64, TimescaleError> {
    let sigma = up.smear_sigma();
    if sigma != down.smear_sigma() {
        return Err(TimescaleError::BadSigma(sigma, down.smear_sigma()));
    }
    let diff = mass_difference(up, down);
    if diff.is_empty() {
        return Ok(0.0);
    }
    let e = 4.0 * std::f64::consts::PI * G * signed_pair_sum(&diff, sigma);
    // the kernel is positive definite; anything below zero is rounding
    Ok(e.max(0.0))
}

/// `hbar / E`, infinite for `E <= 0`.
pub fn dp_collapse_time(self_energy: f64) -> f64 {
    if self_energy > 0.0 {
        HBAR / self_energy
    } else {
        f64::INFINITY
    }
}

pub fn dp_evaluate(up: &MassDistribution, down: &MassDistribution) -> Result<DpResult, TimescaleError> {
    let self_energy = dp_self_energy(up, down)?;
    Ok(DpResult { self_energy, collapse_time: dp_collapse_time(self_energy) })
}

/// Cubic-lattice discretization of a homogeneous sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereLattice {
    /// Lattice sites across one diameter.
    pub points_per_diameter: usize,
}

impl Default for SphereLattice {
    /// 13 sites per diameter, about 1150 lattice points.
    fn default() -> Self {
        Self { points_per_diameter: 13 }
    }
}

pub fn sphere_radius(mass: f64, material_density: f64) -> f64 {
    (3.0 * mass / (4.0 * std::f64::consts::PI * material_density)).cbrt()
}

/// Homogeneous sphere centred at the origin.
///
/// Each lattice cell of side `h` carries an equal share of the mass as a
/// Gaussian whose width adds the cell's own second moment (`h^2 / 12` per
/// axis) to `smear_sigma` in quadrature.
pub fn homogeneous_sphere(
    mass: f64,
    material_density: f64,
    smear_sigma: f64,
    lattice: SphereLattice,
) -> Result<MassDistribution, TimescaleError> {
    positive("mass", mass)?;
    positive("material_density", material_density)?;
    positive("smear_sigma", smear_sigma)?;
    let n = lattice.points_per_diameter;
    if n < 2 {
        return Err(TimescaleError::BadParameter { name: "points_per_diameter", value: n as f64 });
    }
    let radius = sphere_radius(mass, material_density);
    let h = 2.0 * radius / n as f64;
    let coord = |i: usize| (i as f64 + 0.5 - n as f64 / 2.0) * h;
    let mut sites = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = [coord(i), coord(j), coord(k)];
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= radius * radius {
                    sites.push(p);
                }
            }
        }
    }
    let m = mass / sites.len() as f64;
    let sigma = (smear_sigma * smear_sigma + h * h / 12.0).sqrt();
    MassDistribution::new(sites.into_iter().map(|p| (p, m)).collect(), sigma)
}

/// One row of a mass sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub mass: f64,
    pub radius: f64,
    pub self_energy: f64,
    pub collapse_time: f64,
}

/// Collapse time of homogeneous spheres displaced rigidly by `displacement`
/// along x, one entry per mass.
pub fn dp_mass_sweep(
    material_density: f64,
    masses: &[f64],
    displacement: f64,
    smear_sigma: f64,
) -> Result<Vec<SweepPoint>, TimescaleError> {
    dp_mass_sweep_with(material_density, masses, displacement, smear_sigma, SphereLattice::default())
}

pub fn dp_mass_sweep_with(
    material_density: f64,
    masses: &[f64],
    displacement: f64,
    smear_sigma: f64,
    lattice: SphereLattice,
) -> Result<Vec<SweepPoint>, TimescaleError> {
    positive("displacement", displacement)?;
    masses
        .iter()
        .map(|&mass| {
            let up = homogeneous_sphere(mass, material_density, smear_sigma, lattice)?;
            let down = up.translated([displacement, 0.0, 0.0]);
            let r = dp_evaluate(&up, &down)?;
            Ok(SweepPoint {
                mass,
                radius: sphere_radius(mass, material_density),
                self_energy: r.self_energy,
                collapse_time: r.collapse_time,
            })
        })
        .collect()
}
