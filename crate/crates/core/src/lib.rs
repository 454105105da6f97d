//! Numerical toolkit for objective-collapse, decoherence and hybrid
//! classical-quantum dynamics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod cq;
pub mod ensemble;
pub mod hilbert;
pub mod lindblad;
pub mod noise;
pub mod qsd;
pub mod timescales;

#[cfg(feature = "cli")]
pub mod cli;
