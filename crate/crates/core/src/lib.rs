//! Semiclassical and quantum dynamics of a particle hopping on an
//! orthorhombic lattice around a Coulomb source.

pub mod config;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod observables;
pub mod output;
pub mod quantum;
pub mod selftest;
pub mod semiclassical;

pub use error::{Error, Result};
