//! Marching-on-in-time volume integral equation solver for transient
//! scattering by voxelized inhomogeneous dielectrics.

pub mod error;
pub mod grid;
pub mod hier;
pub mod kernel;
pub mod march;
pub mod post;
pub mod scalar;
pub mod stability;
pub mod toeplitz;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ToeplitzPlan64 = toeplitz::ToeplitzPlan<f64>;
pub type ToeplitzPlan32 = toeplitz::ToeplitzPlan<f32>;
pub type NdFft64 = toeplitz::NdFft<f64>;
pub type Workspace64 = toeplitz::Workspace<f64>;
pub type LdlFactor64 = march::solve::LdlFactor<f64>;
pub type CscMatrix64 = march::solve::CscMatrix<f64>;

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
