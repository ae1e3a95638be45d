//! Replica lattice spin models and their Kramers-Wannier duals.
//!
//! The crate builds n-sheeted lattices joined along a slab cut, samples
//! them with Swendsen-Wang updates, estimates partition-function ratios
//! with non-equilibrium (Jarzynski) trajectories and checks everything
//! against exact enumeration on small systems.

pub mod analysis;
pub mod duality;
pub mod error;
pub mod lattice;
pub mod model;
pub mod neq;
pub mod oracle;
pub mod sampler;
pub mod verify;

pub use error::{Error, Result};
