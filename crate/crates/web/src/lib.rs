//! Browser bindings: one collapsing trajectory, a gravitational mass sweep
//! and one hybrid qubit-oscillator trajectory. Results are flat `f64`
//! arrays with a fixed number of columns per row.

use wasm_bindgen::prelude::*;

use collapse_lab::constants::au_to_fs;
use collapse_lab::cq::{run_cq_trajectory, ClassicalState, CqToyConfig};
use collapse_lab::hilbert::{HermitianOperator, StateVector};
use collapse_lab::noise::RngStream;
use collapse_lab::qsd::{make_hamiltonian_model, run_trajectory, QsdConfig};
use collapse_lab::timescales::{dp_mass_sweep_with, SphereLattice};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Three-level oscillator collapsing onto energy eigenstates.
///
/// Rows of `[t_fs, pop0, pop1, pop2]`.
#[wasm_bindgen]
pub fn qsd_trajectory(eta: f64, seed: u64, t_max_au: f64) -> Result<Vec<f64>, JsValue> {
    let h = HermitianOperator::harmonic_oscillator(3, 1.0).map_err(js_err)?;
    let model = make_hamiltonian_model(h, eta).map_err(js_err)?;
    let psi0 = StateVector::from_real(&[(1.0f64 / 6.0).sqrt(), (2.0f64 / 3.0).sqrt(), (1.0f64 / 6.0).sqrt()])
        .map_err(js_err)?;
    let config = QsdConfig { dt: 1e-3, t_max: t_max_au, record_stride: 100, collapse_epsilon: 1e-3 };
    let rec = run_trajectory(&psi0, &model, &config, &mut RngStream::new(seed, 0)).map_err(js_err)?;
    let mut out = Vec::with_capacity(rec.times.len() * 4);
    for (t, p) in rec.times.iter().zip(&rec.populations) {
        out.push(au_to_fs(*t));
        out.extend_from_slice(p);
    }
    Ok(out)
}

/// Rows of `[mass_kg, tau_c_s]` for log-spaced masses.
#[wasm_bindgen]
pub fn dp_sweep(displacement: f64, smear_sigma: f64, mass_min: f64, mass_max: f64, n_masses: usize) -> Result<Vec<f64>, JsValue> {
    if n_masses < 2 || !(mass_max > mass_min && mass_min > 0.0) {
        return Err(JsValue::from_str("need n_masses >= 2 and 0 < mass_min < mass_max"));
    }
    let (lo, hi) = (mass_min.log10(), mass_max.log10());
    let masses: Vec<f64> = (0..n_masses)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n_masses - 1) as f64))
        .collect();
    let lattice = SphereLattice { points_per_diameter: 9 };
    let sweep = dp_mass_sweep_with(2260.0, &masses, displacement, smear_sigma, lattice).map_err(js_err)?;
    Ok(sweep.iter().flat_map(|s| [s.mass, s.collapse_time]).collect())
}

/// Qubit with weight `p0` on `|0>` kicking a classical oscillator.
///
/// Rows of `[t_s, pop0, pop1, q_m, p_kgms, jump_flag]`.
#[wasm_bindgen]
pub fn cq_trajectory(p0: f64, tau: f64, seed: u64) -> Result<Vec<f64>, JsValue> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(JsValue::from_str("p0 must lie in [0, 1]"));
    }
    let qubit = StateVector::from_real(&[p0.sqrt(), (1.0 - p0).sqrt()]).map_err(js_err)?;
    let config = CqToyConfig { tau, record_stride: 4, ..CqToyConfig::FIG6 };
    let traj = run_cq_trajectory(&qubit, ClassicalState::ORIGIN, &config, &mut RngStream::new(seed, 0)).map_err(js_err)?;
    let mut out = Vec::with_capacity(traj.times.len() * 6);
    for i in 0..traj.times.len() {
        let (pop, c) = (traj.populations[i], traj.classical[i]);
        out.extend_from_slice(&[traj.times[i], pop[0], pop[1], c.q, c.p, f64::from(u8::from(traj.jump_flags[i]))]);
    }
    Ok(out)
}
