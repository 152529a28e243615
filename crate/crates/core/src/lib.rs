//! Simulation and homodyne tomography of single-photon time-bin ebits.
//!
//! The crate covers the whole closed loop: build the heralded two-mode state,
//! evaluate its 4-D Wigner function, draw balanced-homodyne quadrature data
//! from it and reconstruct the density matrix from those data.

pub mod ebit;
pub mod error;
pub mod fock;
pub mod homodyne;
pub mod special;
pub mod stats;
pub mod tomography;
pub mod verify;
pub mod wigner;

pub use error::{Error, Result};
