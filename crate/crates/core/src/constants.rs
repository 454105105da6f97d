//! Physical constants (CODATA 2018) and unit conversions.
//!
//! Quantum trajectories run in Hartree atomic units (hbar = m_e = 1), the
//! hybrid and timescale calculators run in SI. Every conversion between the
//! two goes through this table.

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Newtonian gravitational constant, m^3 kg^-1 s^-2.
pub const G: f64 = 6.674_30e-11;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Atomic unit of time, s.
pub const AU_TIME_S: f64 = 2.418_884_326_585_7e-17;

/// Femtoseconds per atomic unit of time.
pub const FS_PER_AU: f64 = AU_TIME_S * 1e15;

/// Atomic units of time per femtosecond (about 41.34).
pub const AU_PER_FS: f64 = 1.0 / FS_PER_AU;

/// Hartree energy, J.
pub const HARTREE_J: f64 = 4.359_744_722_207_1e-18;

/// Atomic mass constant, kg.
pub const AMU_KG: f64 = 1.660_539_066_60e-27;

/// Converts a time in atomic units to femtoseconds.
pub fn au_to_fs(t_au: f64) -> f64 {
    t_au * FS_PER_AU
}

/// Converts a time in femtoseconds to atomic units.
pub fn fs_to_au(t_fs: f64) -> f64 {
    t_fs * AU_PER_FS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn femtosecond_is_about_41_au() {
        assert!((AU_PER_FS - 41.341_373_335).abs() < 1e-6);
        assert!((au_to_fs(fs_to_au(3.5)) - 3.5).abs() < 1e-14);
    }

    #[test]
    fn hartree_over_hbar_is_inverse_au_time() {
        assert!((HARTREE_J / HBAR * AU_TIME_S - 1.0).abs() < 1e-9);
    }
}
