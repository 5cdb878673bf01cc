//! Numerical Lyapunov–Schmidt reduction for the semiclassical magnetic
//! nonlinear Schrödinger equation
//!
//! ```text
//! (∇/i − A(εx))² u + u + V(εx) u = K(εx) |u|^{p−1} u   in Rⁿ.
//! ```

pub mod error;
pub mod ansatz;
pub mod checks;
pub mod discretization;
pub mod expr;
pub mod fields;
pub mod grid;
pub mod groundstate;
pub mod krylov;
pub mod landscape;
pub mod reduction;
pub mod solver;

pub use error::{Error, Result};
