//! The strip map `T_d(x) = tanh(pi x / (4d))` and the kernel `K = -log |T_d|`.
//!
//! `K` is even, positive, convex and strictly decreasing on `(0, inf)` with a
//! logarithmic singularity at the origin, where it evaluates to `+inf`.
//! Products of the conformal factors `(T_d(x) - T_d(a)) / (1 - T_d(a) T_d(x))`
//! collapse to `T_d(x - a)` by the tanh addition rule, so every Blaschke-type
//! quantity is handled as a sum of kernel values in the log domain.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{integrate, Tolerance};

/// Half-width `d > 0` of the strip `{ |Im z| < d }`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StripParam(f64);

impl StripParam {
    pub fn new(d: f64) -> Result<Self> {
        if d > 0.0 && d.is_finite() {
            Ok(Self(d))
        } else {
            Err(Error::Param(format!(
                "strip half-width must be positive, got {d}"
            )))
        }
    }

    #[inline]
    pub fn d(self) -> f64 {
        self.0
    }

    /// The scale `c = pi / (4d)` inside the tanh.
    #[inline]
    pub fn scale(self) -> f64 {
        FRAC_PI_4 / self.0
    }
}

/// `T_d(x) = tanh(pi x / (4d))`.
#[inline]
pub fn t_map(x: f64, d: StripParam) -> f64 {
    (d.scale() * x).tanh()
}

/// `K(x) = -log |tanh(pi x / (4d))|`, `+inf` at the origin.
///
/// For `u = c|x| >= 1/2` this is evaluated as `2 atanh(e^{-2u})`, which keeps full
/// relative accuracy in the far tail where `tanh` rounds to one.
#[inline]
pub fn kernel_k(x: f64, d: StripParam) -> f64 {
    let u = d.scale() * x.abs();
    if u == 0.0 {
        return f64::INFINITY;
    }
    if u < 0.5 {
        -u.tanh().ln()
    } else {
        2.0 * (-2.0 * u).exp().atanh()
    }
}

/// `K'(x) = -2c / sinh(2cx)`; undefined at the origin.
pub fn kernel_k_deriv(x: f64, d: StripParam) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::Domain("K' is undefined at 0".into()));
    }
    Ok(kernel_k_deriv_unchecked(x, d))
}

#[inline]
pub(crate) fn kernel_k_deriv_unchecked(x: f64, d: StripParam) -> f64 {
    let c = d.scale();
    let z = 2.0 * c * x;
    if z.abs() < 1e-8 {
        // Laurent expansion: -1/x + (2c^2/3) x.
        return -1.0 / x + 2.0 * c * c * x / 3.0;
    }
    -2.0 * c / z.sinh()
}

/// `K''(x) = 4c^2 cosh(2cx) / sinh^2(2cx)`, written as `4c^2 coth / sinh` to avoid
/// overflow for large `|x|`.
#[inline]
pub fn kernel_k_second(x: f64, d: StripParam) -> f64 {
    let c = d.scale();
    let z = 2.0 * c * x.abs();
    if z == 0.0 {
        return f64::INFINITY;
    }
    if z < 1e-6 {
        return 1.0 / (x * x) + 2.0 * c * c / 3.0;
    }
    4.0 * c * c / (z.tanh() * z.sinh())
}

/// `K_eps(x) = (1/eps) int_0^eps K(|x| + z) dz`, finite everywhere.
pub fn kernel_smoothed(x: f64, d: StripParam, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Param(format!(
            "smoothing width must be positive, got {eps}"
        )));
    }
    let base = x.abs();
    let tol = Tolerance::default().with_abs(1e-13).with_rel(1e-12);
    let v = integrate(|z| kernel_k(base + z, d), 0.0, eps, &tol)?;
    Ok(v / eps)
}

/// Fourier transform `int K(x) e^{-iwx} dx = pi tanh(dw) / w`, equal to `pi d` at `w = 0`.
pub fn kernel_fourier(omega: f64, d: StripParam) -> f64 {
    let dw = d.d() * omega;
    if dw.abs() < 1e-8 {
        // tanh(t)/t = 1 - t^2/3 + ...
        return PI * d.d() * (1.0 - dw * dw / 3.0);
    }
    PI * dw.tanh() / omega
}

/// `log |B_{n;k}(x)| = -sum_{j != k} K(x - a_j)`.
///
/// Pass `exclude = None` for the full product `B_n`. Returns `-inf` when `x`
/// coincides with a node that is not excluded.
pub fn log_blaschke(x: f64, exclude: Option<usize>, nodes: &[f64], d: StripParam) -> f64 {
    let mut s = 0.0;
    for (j, &a) in nodes.iter().enumerate() {
        if Some(j) == exclude {
            continue;
        }
        s -= kernel_k(x - a, d);
    }
    s
}

/// Sign of `B_{n;k}(x)`: each factor `T_d(x - a_j)` is negative exactly when `a_j > x`.
pub fn blaschke_sign(x: f64, exclude: Option<usize>, nodes: &[f64]) -> f64 {
    let flips = nodes
        .iter()
        .enumerate()
        .filter(|&(j, &a)| Some(j) != exclude && a > x)
        .count();
    if flips % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Gram matrix `G_ij = K_eps(p_i - p_j)`, symmetric by construction.
pub fn gram_matrix_smoothed(points: &[f64], d: StripParam, eps: f64) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    let diag = kernel_smoothed(0.0, d, eps)?;
    for i in 0..n {
        g[(i, i)] = diag;
        for j in 0..i {
            let v = kernel_smoothed(points[i] - points[j], d, eps)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}
