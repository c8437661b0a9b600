//! Brownian motion and leafwise diffusions on the hyperbolic spaces H² and H³.
//!
//! The crate is organised bottom-up:
//!
//! - [`hypgeom`]: hyperboloid-model geometry, Busemann functions, Green functions, heat kernel.
//! - [`quotient`]: a genus-2 Fuchsian group with fundamental-domain reduction and invariant fields.
//! - [`conformal`]: conformal metric families `e^{2λφ} g`, their connection and geodesics.
//! - [`jacobi`]: Jacobi fields, Riccati limits and the infinitesimal Morse correspondence.
//! - [`diffusion`]: frame-bundle simulation with Girsanov accumulators.
//! - [`estimators`]: drift, entropy, CLT and derivative estimators.
//! - [`validate`]: the property suite exposed by the command line runner.

pub mod conformal;
pub mod diffusion;
pub mod error;
pub mod estimators;
pub mod field;
pub mod hypgeom;
pub mod jacobi;
pub mod minkowski;
pub mod quotient;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
