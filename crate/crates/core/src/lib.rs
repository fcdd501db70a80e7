//! Structure-preserving model order reduction for port-Hamiltonian systems.
//!
//! The crate covers the full pipeline: full-order simulation with a
//! Gauss–Legendre integrator, structure-preserving DEIM, linear and quadratic
//! embeddings, GMG reduced models together with the SP1/SP2 baselines, the
//! mass-spring-damper benchmarks and the error metrics used to compare them.

pub mod bench;
pub mod deim;
pub mod embed;
pub mod error;
pub mod integrate;
pub mod numerics;
pub mod parallel;
pub mod ph;
pub mod rom;

pub use error::{Error, Result};
