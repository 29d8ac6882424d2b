//! Multi-harmonic Josephson circuits: fitting a target potential with a train
//! of cosine branches, solving the resulting Hamiltonian in the charge basis,
//! cross-checking against a phase-grid solver, and estimating 1/f flux-noise
//! dephasing.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charge_solver;
pub mod error;
pub mod fitter;
pub mod io;
pub mod noise;
pub mod phase_oracle;
pub mod potentials;
pub mod spectrum;

pub use error::{Error, Result};
pub use potentials::{Branch, Potential, TrainmonCircuit};
pub use spectrum::Spectrum;
