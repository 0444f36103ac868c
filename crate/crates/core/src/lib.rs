//! Numerical laboratory for two families of actin filament-end densities
//! transported in opposite directions along a lamellipodium leading edge,
//! with branching and capping:
//!
//! ```text
//! u_t + (c u)_x = α v / (1 + u + v) − u
//! v_t − (c v)_x = α u / (1 + u + v) − v
//! ```
//!
//! on `x ∈ (0, 1)` with periodic or zero-inflow (`u(0) = v(1) = 0`)
//! boundary conditions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod simulator;
pub mod steady;

pub use error::{Error, Result};
