//! Scalar numerical primitives used throughout the crate.
//!
//! - [`integrate`] / [`integrate_halfline`]: globally adaptive Gauss-Kronrod (G10/K21)
//!   quadrature. The rule is open, so integrable endpoint singularities such as the
//!   logarithmic one of the kernel at the origin are never sampled.
//! - [`minimize_scalar`]: golden-section search on a bracket.
//! - [`find_root_increasing`]: bracket expansion by doubling followed by bisection.
//! - [`lambert_w0`]: principal branch of the Lambert W function on `[0, inf)`.
//! - [`PiecewiseLegendre`]: piecewise Legendre expansions with closed-form Fourier
//!   transforms, used for oscillatory transforms at large frequency.
//!
//! Everything here is pure: identical inputs give bit-identical outputs.

mod legendre;
mod minimize;
mod quadrature;
mod roots;

pub use legendre::{gauss_legendre, spherical_bessel_j, PiecewiseLegendre};
pub use minimize::{minimize_scalar, ScalarMinimum};
pub use quadrature::{integrate, integrate_halfline, integrate_with_error, QuadEstimate};
pub use roots::{find_root_increasing, lambert_w0};

use crate::error::{Error, Result};

/// Default absolute and relative tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default iteration / subdivision budget. With 42 integrand evaluations per
/// subdivision this caps a single integral well below 10^6 evaluations.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Error targets shared by the adaptive routines.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_TOL,
            rel_tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        let tol = Self {
            abs_tol,
            rel_tol,
            max_iter,
        };
        tol.validate()?;
        Ok(tol)
    }

    /// Same relative tolerance and budget, different absolute target.
    #[must_use]
    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    #[must_use]
    pub fn with_rel(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::Param(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::Param(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Param("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// The error target `max(abs_tol, rel_tol * |value|)`.
    pub fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}
