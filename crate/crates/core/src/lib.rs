//! Monte Carlo sensitivities for stochastic Volterra equations with singular kernels.

pub mod direction;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod frac;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod path;
pub mod resolvent;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
pub use grid::{GridFunction, TimeGrid};
