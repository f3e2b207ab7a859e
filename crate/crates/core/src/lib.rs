//! Daubechies-wavelet discretization of 1+1 dimensional scalar field theory:
//! filters, scaling functions, the periodic wavelet transform, connection
//! coefficients, the truncated φ⁴ Hamiltonian, scale splitting with SRG flow,
//! and kernel diagnostics.

pub mod connection;
pub mod diagnostics;
pub mod error;
pub mod filters;
pub mod flow;
pub mod fock;
pub mod lanczos;
mod linalg;
pub mod scaling;
pub mod sparse;
pub mod transform;

pub use error::{Error, Result};
