//! Trapped-atom interferometry in a vertical optical lattice close to a surface.
//!
//! The crate is organised bottom-up:
//!
//! * [`potentials`] – lattice, gravity and atom-surface potentials in recoil units.
//! * [`ws_solver`] – finite-difference diagonalisation yielding surface-modified
//!   Wannier-Stark states.
//! * [`couplings`] – laser coupling elements between those states.
//! * [`dynamics`] – rotating-wave amplitude equations under microwave and Raman pulses.
//! * [`sequence`] – interferometer pulse programs and duration calibration.
//! * [`analysis`] – fringe scans, contrast, least-squares fits and the closed-form phase.
//!
//! Internally lengths are measured in units of `1/k_l`, energies in `E_r` and
//! times in `hbar/E_r`. SI units only appear at the I/O boundaries.

// `!(x > y)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bands;
pub mod config;
pub mod couplings;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod potentials;
pub mod sequence;
pub mod tridiag;
pub mod ws_solver;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
