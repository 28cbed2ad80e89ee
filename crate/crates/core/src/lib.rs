//! Yield-aware design optimization under non-Gaussian correlated process
//! variations.
//!
//! The pipeline builds orthonormal bases for the design box and the noise
//! mixture, computes a compact joint quadrature rule, fits polynomial-chaos
//! surrogates from simulations at the quadrature points, replaces each chance
//! constraint by a Cantelli mean/variance bound, and solves the resulting
//! polynomial program.

pub mod basis;
pub mod chance;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod gaussmix;
pub mod polyopt;
pub mod quadrature;
pub mod simulators;
pub mod surrogate;

pub use error::{Error, Result};
