//! Workbench for the singular elliptic problem
//! `-Δu + c(x) u⁻¹ |∇u|² = a(x)`, `u > 0`, `u → 0` at the boundary or at
//! infinity.
//!
//! The pipeline builds an ordered sub/super solution pair for the
//! truncated problem `-Δu + c (u+ε)⁻¹ |∇u|² = a`, `u = 0` on `∂Ω`, solves it
//! by projected damped Newton, lets `ε → 0` by continuation, exhausts the
//! whole space by balls and compares the result with the explicit radial
//! barrier
//!
//! ```text
//! w(r) = ∫_r^∞ ξ^{1-N} ∫_0^ξ σ^{N-1} φ(σ) dσ dξ,   φ(r) = max_{|x|=r} a(x).
//! ```

pub mod barriers;
pub mod eigen;
pub mod error;
pub mod expr;
pub mod global;
pub mod grid;
pub mod linsolve;
pub mod operator;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod transforms;
pub mod truncated;

pub use error::{Error, Result};
