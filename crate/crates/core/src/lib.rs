//! Online optimization of steady-state objectives over populations whose
//! states evolve in response to the decision.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! experiment drivers and the CLI run in `f64`.

pub mod checks;
pub mod config;
pub mod distributions;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod optimizers;
pub mod rng;
pub mod scalar;
pub mod sensitivity;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Population64 = distributions::Population<f64>;
pub type Population32 = distributions::Population<f32>;
pub type DynamicsModel64 = dynamics::DynamicsModel<f64>;
pub type DynamicsModel32 = dynamics::DynamicsModel<f32>;
