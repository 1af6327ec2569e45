//! Simulation and verification toolkit for time-continuous quantum measurement.
//!
//! The crate is organised bottom-up:
//!
//! * [`ito_algebra`]: exact quantum Itô tables, the Minkowski involution and
//!   generator-level identities (pseudo-unitarity, boundary-to-stochastic map).
//! * [`quantum_grid`]: a one-particle system on a uniform 1-D grid.
//! * [`noise`]: counter-based deterministic Wiener increments.
//! * [`sde_engine`]: linear decoherence and nonlinear posterior integrators.
//! * [`gaussian_filter`]: closed-form and closed-moment Gaussian oracles.
//! * [`master_equation`]: deterministic Lindblad evolution.
//! * [`boundary_model`]: repeated-interaction (collision) realisation of the
//!   boundary-value model and its diffusion limit.
//! * [`output`]: CSV and JSON emitters for all of the above.

pub mod boundary_model;
pub mod error;
pub mod gaussian_filter;
pub mod ito_algebra;
pub mod linalg;
pub mod master_equation;
pub mod noise;
pub mod output;
pub mod quantum_grid;
pub mod sde_engine;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use num_complex::Complex64 as C64;

/// Dense complex matrix used for all operator-valued quantities.
pub type CMatrix = nalgebra::DMatrix<C64>;
