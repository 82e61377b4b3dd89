//! Coherent nuclear forward scattering on hyperfine-split 57Fe with abrupt
//! rotations of the hyperfine field.

pub mod angular;
pub mod cli;
pub mod currents;
pub mod error;
pub mod photonics;
pub mod scattering;
pub mod switching;

pub use error::{NfsError, Result};
