//! Linear-quadratic optimal control on long horizons: Riccati machinery,
//! steady-state (turnpike) analysis, and receding-horizon control with
//! turnpike-based terminal costs.

// `!(x > 0.0)` is used on purpose to reject NaN alongside nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod linalg;
pub mod lq;
pub mod model;
pub mod rhc;
pub mod riccati;
pub mod turnpike;

pub use error::{Error, Result};
