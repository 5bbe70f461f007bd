//! Off-the-grid estimation of sparse mixtures from continuous dictionaries.
//!
//! The observation model is `y = Σ_k β_k φ(θ_k) + w` in a weighted-grid
//! Hilbert space. The crate provides the kernel/Riemannian machinery of the
//! normalized dictionary (covariant derivatives, intrinsic metric, local
//! concavity diagnostics), dual-certificate construction and verification,
//! separation-distance analysis, admissible noise models with their Gaussian
//! suprema tail bounds, and a sliding greedy solver for the penalized
//! least-squares problem with an `l1` amplitude penalty.

pub mod certificates;
pub mod dictionary;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod measure;
pub mod noise;
pub mod separation;

pub use error::{Error, Result};
