//! Piecewise Legendre expansions and their Fourier transforms.
//!
//! On a panel `[m - h, m + h]` a function is expanded as `sum_k c_k P_k((x - m) / h)`.
//! Using `int_{-1}^{1} P_k(t) e^{-i z t} dt = 2 (-i)^k j_k(z)` the transform
//! `int f(x) e^{-i w x} dx` becomes a short sum of spherical Bessel values, so
//! its cost does not grow with the frequency `w`.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Spherical Bessel functions `j_0(z) .. j_{out.len()-1}(z)` for `z >= 0`.
///
/// Upward recurrence when `z` exceeds the highest order, otherwise Miller's
/// downward recurrence normalised by `sum_k (2k + 1) j_k(z)^2 = 1`.
pub fn spherical_bessel_j(z: f64, out: &mut [f64]) {
    let kmax = out.len();
    if kmax == 0 {
        return;
    }
    let z = z.abs();
    if z == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if z > kmax as f64 + 1.0 {
        let (s, c) = z.sin_cos();
        out[0] = s / z;
        if kmax > 1 {
            out[1] = s / (z * z) - c / z;
        }
        for k in 1..kmax.saturating_sub(1) {
            out[k + 1] = (2.0 * k as f64 + 1.0) / z * out[k] - out[k - 1];
        }
        return;
    }

    let start = kmax + 32 + z as usize;
    let mut next = 0.0f64;
    let mut cur = 1.0f64;
    let mut norm = 0.0f64;
    for k in (0..=start).rev() {
        if k < kmax {
            out[k] = cur;
        }
        norm += (2.0 * k as f64 + 1.0) * cur * cur;
        if k == 0 {
            break;
        }
        let prev = (2.0 * k as f64 + 1.0) / z * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e100 {
            // Rescale everything accumulated so far.
            let s = 1e-100;
            cur *= s;
            next *= s;
            norm *= s * s;
            for v in out.iter_mut().skip(k.saturating_sub(1)) {
                *v *= s;
            }
        }
    }
    // The recurrence starts where j_k(z) > 0, so the sequence already carries the right sign.
    let scale = 1.0 / norm.sqrt();
    for v in out.iter_mut() {
        *v *= scale;
    }
}

#[derive(Debug, Clone)]
struct Panel {
    center: f64,
    half: f64,
    coeffs: Vec<f64>,
}

/// A function on `[a, b]` represented by piecewise Legendre series.
#[derive(Debug, Clone)]
pub struct PiecewiseLegendre {
    panels: Vec<Panel>,
    degree: usize,
}

const MAX_DEPTH: usize = 48;
const MAX_PANELS: usize = 4096;

impl PiecewiseLegendre {
    /// Fits `f` on `[a, b]` with panels of the given `degree`, splitting a panel
    /// until its two trailing coefficients fall below `rel_tol` times the
    /// largest coefficient seen. Panels never sample their endpoints.
    pub fn fit<F>(f: F, a: f64, b: f64, degree: usize, rel_tol: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        if !(a < b) {
            return Err(Error::Domain(format!("empty fit interval [{a}, {b}]")));
        }
        let degree = degree.max(2);
        let npts = degree + 1;
        let (nodes, weights) = gauss_legendre(npts);
        // P_k at the quadrature nodes, row k.
        let mut basis = vec![vec![0.0; npts]; npts];
        for (i, &t) in nodes.iter().enumerate() {
            let mut p0 = 1.0;
            let mut p1 = t;
            basis[0][i] = 1.0;
            if npts > 1 {
                basis[1][i] = t;
            }
            for k in 2..npts {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                basis[k][i] = p2;
                p0 = p1;
                p1 = p2;
            }
        }

        let project = |lo: f64, hi: f64| -> Result<Panel> {
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let values: Vec<f64> = nodes.iter().map(|&t| f(center + half * t)).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite value on [{lo}, {hi}]")));
            }
            let coeffs = (0..npts)
                .map(|k| {
                    let s: f64 = (0..npts)
                        .map(|i| weights[i] * values[i] * basis[k][i])
                        .sum();
                    (2.0 * k as f64 + 1.0) / 2.0 * s
                })
                .collect();
            Ok(Panel {
                center,
                half,
                coeffs,
            })
        };

        let mut done: Vec<Panel> = Vec::new();
        let mut stack = vec![(a, b, 0usize)];
        let mut scale = 0.0f64;
        while let Some((lo, hi, depth)) = stack.pop() {
            let panel = project(lo, hi)?;
            let peak = panel.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            scale = scale.max(peak);
            let tail = panel.coeffs[npts - 1]
                .abs()
                .max(panel.coeffs[npts - 2].abs());
            if tail <= rel_tol * scale.max(f64::MIN_POSITIVE) || depth >= MAX_DEPTH {
                done.push(panel);
            } else {
                if done.len() + stack.len() > MAX_PANELS {
                    return Err(Error::non_convergence(
                        "PiecewiseLegendre::fit",
                        format!("more than {MAX_PANELS} panels needed on [{a}, {b}]"),
                    ));
                }
                let mid = 0.5 * (lo + hi);
                stack.push((mid, hi, depth + 1));
                stack.push((lo, mid, depth + 1));
            }
        }
        done.sort_by(|p, q| p.center.total_cmp(&q.center));
        Ok(Self {
            panels: done,
            degree,
        })
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// Evaluates the expansion at `x` (zero outside the fitted interval).
    pub fn eval(&self, x: f64) -> f64 {
        for p in &self.panels {
            if (x - p.center).abs() <= p.half {
                let t = (x - p.center) / p.half;
                let mut p0 = 1.0;
                let mut p1 = t;
                let mut s = p.coeffs[0] + p.coeffs[1] * t;
                for k in 2..p.coeffs.len() {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                    s += p.coeffs[k] * p2;
                    p0 = p1;
                    p1 = p2;
                }
                return s;
            }
        }
        0.0
    }

    /// `int f(x) e^{-i w x} dx` over the fitted interval, as `(re, im)`.
    pub fn fourier(&self, w: f64) -> (f64, f64) {
        let mut jk = vec![0.0; self.degree + 1];
        let mut re = 0.0;
        let mut im = 0.0;
        for p in &self.panels {
            spherical_bessel_j(w * p.half, &mut jk);
            // sum_k c_k (-i)^k j_k = sr + i si
            let mut sr = 0.0;
            let mut si = 0.0;
            for (k, (&c, &j)) in p.coeffs.iter().zip(jk.iter()).enumerate() {
                match k % 4 {
                    0 => sr += c * j,
                    1 => si -= c * j,
                    2 => sr -= c * j,
                    _ => si += c * j,
                }
            }
            sr *= 2.0 * p.half;
            si *= 2.0 * p.half;
            let (s, c) = (w * p.center).sin_cos();
            // e^{-i w m} (sr + i si)
            re += c * sr + s * si;
            im += c * si - s * sr;
        }
        (re, im)
    }
}
