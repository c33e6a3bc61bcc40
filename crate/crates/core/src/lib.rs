//! Multiscale finite element solver for semilinear parabolic SPDEs with
//! heterogeneous diffusion, with DEIM reduction of the nonlinear terms and a
//! per-trajectory online correction of the DEIM basis.
//!
//! The pipeline: [`grid`] and [`fem`] build fine operators, [`msbasis`]
//! constructs the coarse space, [`noise`] samples the forcing,
//! [`integrator`] advances fine or coarse systems in time, [`rom`] supplies
//! the reduced nonlinear terms and [`harness`] runs whole experiments.

pub mod error;
pub mod fem;
pub mod grid;
pub mod harness;
pub mod integrator;
pub mod msbasis;
pub mod noise;
pub mod rom;

pub use error::{Error, Result};
