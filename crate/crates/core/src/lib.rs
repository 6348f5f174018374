//! Eigenvalues of the time-harmonic Maxwell cavity problem
//!
//! ```text
//! curl curl E = λ ε E   in Ω,    div(εE) = 0,    ν × E = 0 on ∂Ω
//! ```
//!
//! on axis-aligned boxes, under variations of a symmetric matrix
//! permittivity ε. The problem is discretized through the penalized form
//!
//! ```text
//! ∫ curl u · curl v + τ ∫ div(εu) div(εv) = σ ∫ εu · v
//! ```
//!
//! with trilinear vector nodal elements. Its spectrum is the union of the
//! Maxwell eigenvalues and τ times the Dirichlet eigenvalues of
//! `−div(ε∇·)`; the [`spectra`] module separates the two families and
//! implements the perturbation analysis (symmetric functions of clustered
//! eigenvalues, branch slopes, cluster splitting, Lipschitz ratios).

pub mod assembly;
pub mod eigensolve;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod material;
pub mod spectra;

pub use error::{Error, Result};
