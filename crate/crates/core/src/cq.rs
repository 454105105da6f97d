//! Classical-quantum hybrid toy model: a qubit whose projective jumps kick a
//! classical harmonic oscillator (SI units).
//!
//! Jumps arrive at constant rate `1 / tau`. A jump projects the qubit onto
//! `|0>` or `|1>` with Born weights and kicks the momentum by `s_k B` with
//! `s_0 = -1`, `s_1 = +1`. Later jumps re-project onto the same state and
//! kick again. Between jumps the oscillator feels `f = s_k B omega` once the
//! qubit has collapsed, and no extra force before.

use num_complex::Complex64;
use thiserror::Error;

use crate::hilbert::{HilbertError, StateVector};
use crate::noise::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CqError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("qubit must have dimension 2, got {0}")]
    BadDim(usize),
    #[error("bad parameter {name}: {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("classical state is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalState {
    /// m.
    pub q: f64,
    /// kg m/s.
    pub p: f64,
}

impl ClassicalState {
    pub const ORIGIN: ClassicalState = ClassicalState { q: 0.0, p: 0.0 };

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqToyConfig {
    /// B, J s m^-1.
    pub coupling: f64,
    /// kg.
    pub mass: f64,
    /// s^-1.
    pub omega: f64,
    /// Mean time between jumps, s. May be infinite (no jumps).
    pub tau: f64,
    /// s.
    pub dt: f64,
    /// s.
    pub t_max: f64,
    /// Steps between recorded samples.
    pub record_stride: usize,
}

impl CqToyConfig {
    pub const FIG6: CqToyConfig = CqToyConfig {
        coupling: 1.0,
        mass: 1.0,
        omega: 1.0,
        tau: 0.01,
        dt: 2.5e-5,
        t_max: 0.05,
        record_stride: 1,
    };

    pub fn validate(&self) -> Result<(), CqError> {
        let finite_positive = [
            ("coupling", self.coupling),
            ("mass", self.mass),
            ("omega", self.omega),
            ("dt", self.dt),
            ("t_max", self.t_max),
        ];
        for (name, value) in finite_positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CqError::BadParameter { name, value });
            }
        }
        if !(self.tau > 0.0) {
            return Err(CqError::BadParameter { name: "tau", value: self.tau });
        }
        if self.dt > self.tau / 10.0 {
            return Err(CqError::BadParameter { name: "dt", value: self.dt });
        }
        if self.t_max < self.dt {
            return Err(CqError::BadParameter { name: "t_max", value: self.t_max });
        }
        if self.record_stride == 0 {
            return Err(CqError::BadParameter { name: "record_stride", value: 0.0 });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn jump_probability(&self) -> f64 {
        self.dt / self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub times: Vec<f64>,
    pub populations: Vec<[f64; 2]>,
    pub classical: Vec<ClassicalState>,
    /// True when at least one jump fired since the previous sample.
    pub jump_flags: Vec<bool>,
    pub jump_times: Vec<f64>,
    pub outcome: Option<usize>,
}

fn sign(label: usize) -> f64 {
    if label == 0 {
        -1.0
    } else {
        1.0
    }
}

fn check_qubit(qubit: &StateVector) -> Result<(), CqError> {
    if qubit.dim() != 2 {
        return Err(CqError::BadDim(qubit.dim()));
    }
    Ok(())
}

/// Projects onto `|label>`, keeping the phase of the surviving amplitude.
fn project(qubit: &StateVector, label: usize) -> Result<StateVector, CqError> {
    let a = qubit.amplitudes()[label];
    let mut amps = vec![Complex64::new(0.0, 0.0); 2];
    amps[label] = a / a.norm();
    Ok(StateVector::from_amplitudes(amps)?)
}

/// Draws whether a jump fires in one step and applies it.
pub fn cq_jump(
    qubit: &StateVector,
    classical: ClassicalState,
    config: &CqToyConfig,
    stream: &mut RngStream,
) -> Result<(StateVector, ClassicalState, bool), CqError> {
    check_qubit(qubit)?;
    if !(stream.uniform() < config.jump_probability()) {
        return Ok((qubit.clone(), classical, false));
    }
    let (q, k) = fire(qubit, classical, config, stream)?;
    Ok((q, k, true))
}

fn fire(
    qubit: &StateVector,
    classical: ClassicalState,
    config: &CqToyConfig,
    stream: &mut RngStream,
) -> Result<(StateVector, ClassicalState), CqError> {
    let p0 = qubit.amplitudes()[0].norm_sqr() / qubit.amplitudes().norm_squared();
    let label = if stream.uniform() < p0 { 0 } else { 1 };
    let projected = project(qubit, label)?;
    let kicked = ClassicalState { q: classical.q, p: classical.p + sign(label) * config.coupling };
    Ok((projected, kicked))
}

/// Force felt by the oscillator for a collapsed label (zero if uncollapsed).
pub fn outcome_force(label: Option<usize>, config: &CqToyConfig) -> f64 {
    label.map_or(0.0, |k| sign(k) * config.coupling * config.omega)
}

/// One symplectic Euler step of `m q'' = -m omega^2 q + force`.
pub fn classical_drift(classical: ClassicalState, force: f64, config: &CqToyConfig, dt: f64) -> ClassicalState {
    let k = config.mass * config.omega * config.omega;
    let p = classical.p + (-k * classical.q + force) * dt;
    let q = classical.q + p / config.mass * dt;
    ClassicalState { q, p }
}

fn collapsed_label(qubit: &StateVector) -> Option<usize> {
    let a = qubit.amplitudes();
    if a[1].norm_sqr() == 0.0 {
        Some(0)
    } else if a[0].norm_sqr() == 0.0 {
        Some(1)
    } else {
        None
    }
}

/// Alternates drift and jump steps up to `t_max`.
pub fn run_cq_trajectory(
    qubit0: &StateVector,
    classical0: ClassicalState,
    config: &CqToyConfig,
    stream: &mut RngStream,
) -> Result<HybridTrajectory, CqError> {
    config.validate()?;
    check_qubit(qubit0)?;
    if (qubit0.norm() - 1.0).abs() > 1e-10 {
        return Err(HilbertError::ZeroNorm.into());
    }
    if !classical0.is_finite() {
        return Err(CqError::NonFinite);
    }
    let n_steps = config.n_steps();
    let n_samples = n_steps / config.record_stride + 2;
    let mut out = HybridTrajectory {
        times: Vec::with_capacity(n_samples),
        populations: Vec::with_capacity(n_samples),
        classical: Vec::with_capacity(n_samples),
        jump_flags: Vec::with_capacity(n_samples),
        jump_times: Vec::new(),
        outcome: None,
    };
    let pops = |q: &StateVector| {
        let p = q.populations();
        [p[0], p[1]]
    };
    let mut qubit = qubit0.clone();
    let mut classical = classical0;
    let mut label = None;
    let mut jumped_since_sample = false;
    out.times.push(0.0);
    out.populations.push(pops(&qubit));
    out.classical.push(classical);
    out.jump_flags.push(false);

    for n in 1..=n_steps {
        let t = n as f64 * config.dt;
        classical = classical_drift(classical, outcome_force(label, config), config, config.dt);
        let (q, c, jumped) = cq_jump(&qubit, classical, config, stream)?;
        qubit = q;
        classical = c;
        if jumped {
            out.jump_times.push(t);
            jumped_since_sample = true;
            if label.is_none() {
                label = collapsed_label(&qubit);
                out.outcome = label;
            }
        }
        if !classical.is_finite() {
            return Err(CqError::NonFinite);
        }
        if n % config.record_stride == 0 || n == n_steps {
            out.times.push(t);
            out.populations.push(pops(&qubit));
            out.classical.push(classical);
            out.jump_flags.push(jumped_since_sample);
            jumped_since_sample = false;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig6_qubit() -> StateVector {
        StateVector::from_real(&[(1.0f64 / 3.0).sqrt(), (2.0f64 / 3.0).sqrt()]).unwrap()
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let c = classical_drift(ClassicalState::ORIGIN, 0.0, &CqToyConfig::FIG6, 1e-3);
        assert_eq!(c, ClassicalState::ORIGIN);
    }

    #[test]
    fn one_period_returns_home() {
        let cfg = CqToyConfig::FIG6;
        let n = (2.0 * std::f64::consts::PI / cfg.dt).round() as usize;
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let mut c = ClassicalState { q: 1.0, p: 0.0 };
        for _ in 0..n {
            c = classical_drift(c, 0.0, &cfg, h);
        }
        assert!((c.q - 1.0).abs() < 1e-3 && c.p.abs() < 1e-3, "{c:?}");
    }

    #[test]
    fn constant_force_taylor() {
        let cfg = CqToyConfig::FIG6;
        let (f, t) = (0.7, 1e-3);
        let n = 100;
        let mut c = ClassicalState::ORIGIN;
        for _ in 0..n {
            c = classical_drift(c, f, &cfg, t / n as f64);
        }
        assert!((c.p - f * t).abs() < 10.0 * t * t, "{}", c.p - f * t);
    }

    #[test]
    fn eigenstate_jump_is_idempotent_with_kick() {
        let cfg = CqToyConfig { tau: 1e-4, dt: 1e-5, ..CqToyConfig::FIG6 };
        let one = StateVector::basis(2, 1).unwrap();
        let mut stream = RngStream::new(3, 0);
        let mut fired = 0;
        for _ in 0..200 {
            let (q, c, jumped) = cq_jump(&one, ClassicalState::ORIGIN, &cfg, &mut stream).unwrap();
            if jumped {
                fired += 1;
                assert_eq!(q, one);
                assert_eq!(c.p, 1.0);
            } else {
                assert_eq!(c, ClassicalState::ORIGIN);
            }
        }
        assert!(fired > 0);
    }

    #[test]
    fn forced_jumps_follow_born_weights() {
        let q = fig6_qubit();
        let mut stream = RngStream::new(11, 2);
        let n = 30_000;
        let zeros = (0..n)
            .filter(|_| {
                let (q, _) = fire(&q, ClassicalState::ORIGIN, &CqToyConfig::FIG6, &mut stream).unwrap();
                q.populations()[0] == 1.0
            })
            .count();
        let f = zeros as f64 / n as f64;
        let sd = (2.0f64 / 9.0 / n as f64).sqrt();
        assert!((f - 1.0 / 3.0).abs() < 4.0 * sd, "{f}");
    }

    #[test]
    fn infinite_tau_never_jumps() {
        let cfg = CqToyConfig { tau: f64::INFINITY, ..CqToyConfig::FIG6 };
        let traj = run_cq_trajectory(&fig6_qubit(), ClassicalState::ORIGIN, &cfg, &mut RngStream::new(1, 1)).unwrap();
        assert!(traj.jump_times.is_empty());
        assert_eq!(traj.outcome, None);
    }

    #[test]
    fn fig6_trajectory_collapses_and_kicks() {
        let cfg = CqToyConfig::FIG6;
        let mut collapsed = 0;
        for i in 0..50 {
            let traj = run_cq_trajectory(&fig6_qubit(), ClassicalState::ORIGIN, &cfg, &mut RngStream::new(9, i)).unwrap();
            assert_eq!(traj.times.len(), cfg.n_steps() + 1);
            for p in &traj.populations {
                assert!((p[0] + p[1] - 1.0).abs() < 1e-10);
            }
            if let Some(k) = traj.outcome {
                collapsed += 1;
                let last = traj.populations.last().unwrap();
                assert!((last[k] - 1.0).abs() < 1e-9);
                // momentum jumps by about B at every jump and is smooth otherwise
                for w in 1..traj.times.len() {
                    let dp = (traj.classical[w].p - traj.classical[w - 1].p).abs();
                    if traj.jump_flags[w] {
                        assert!(dp > 0.9);
                    } else {
                        assert!(dp < 1e-3);
                    }
                }
            }
        }
        assert!(collapsed > 40);
    }

    #[test]
    fn determinism() {
        let cfg = CqToyConfig::FIG6;
        let a = run_cq_trajectory(&fig6_qubit(), ClassicalState::ORIGIN, &cfg, &mut RngStream::new(4, 4)).unwrap();
        let b = run_cq_trajectory(&fig6_qubit(), ClassicalState::ORIGIN, &cfg, &mut RngStream::new(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        let bad_dt = CqToyConfig { dt: 2e-3, ..CqToyConfig::FIG6 };
        assert!(matches!(bad_dt.validate(), Err(CqError::BadParameter { name: "dt", .. })));
        let bad_m = CqToyConfig { mass: -1.0, ..CqToyConfig::FIG6 };
        assert!(bad_m.validate().is_err());
        let three = StateVector::basis(3, 0).unwrap();
        let mut s = RngStream::new(0, 0);
        assert!(matches!(
            cq_jump(&three, ClassicalState::ORIGIN, &CqToyConfig::FIG6, &mut s),
            Err(CqError::BadDim(3))
        ));
    }
}
