//! Simulation of a free quantum particle under continuous measurement and
//! Kostin friction: the logarithmic nonlinear wave equation, its exact
//! Gaussian reduction, Bohmian trajectories and the Bohmian time constant.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bohmian;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod ode;
pub mod pde;

pub use error::{Error, Result};
