//! Near-optimal interpolation formulas on weighted Hardy spaces of a strip.
//!
//! Nodes come from minimizing a convex discrete energy built on the kernel
//! `K(x) = -log |tanh(pi x / (4d))|` and the weight potential `Q = -log w`.
//! The crate also evaluates the resulting formulas, certifies their worst-case
//! error and brackets the best achievable error from both sides.

pub mod baseline;
pub mod bounds;
pub mod cli;
pub mod energy;
pub mod error;
pub mod formula;
pub mod kernel;
pub mod numerics;
pub mod selfcheck;
pub mod weights;

pub use error::{Error, Result};
