//! Bounds on the continuous energy `F^C(n)` and on the minimum worst-case error.
//!
//! Upper and lower bounds come from the discrete energy (sandwich), from an
//! explicit dual witness truncated at `alpha_n`, and from a grid discretization
//! of the continuous problem used as a primal oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::formula::GridSpec;
use crate::kernel::{kernel_k, kernel_smoothed, StripParam};
use crate::numerics::{
    find_root_increasing, integrate_with_error, lambert_w0, PiecewiseLegendre, Tolerance,
};
use crate::weights::Weight;

/// `3 + log 2`, the additive constant of the sandwich upper bound.
pub const SANDWICH_CONST: f64 = 3.0 + std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBracket {
    pub fc_over_n_lower: f64,
    pub fc_over_n_upper: f64,
    /// `Q(alpha_n) / 2`.
    pub fc_over_n_lower_dual: f64,
    pub alpha_n: f64,
    /// Conservative: uses the sandwich upper bound in place of `F^C / n`.
    pub e_min_lower: f64,
    pub e_min_upper: f64,
    pub e_min_upper_explicit: f64,
}

/// `(F^D/(n-1), (n/(n-1)) (2 F^D/(n-1) + 3 + log 2))`.
pub fn sandwich(f_d: f64, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Domain(format!("sandwich needs n >= 2, got {n}")));
    }
    let m = (n - 1) as f64;
    let lower = f_d / m;
    let upper = n as f64 / m * (2.0 * lower + SANDWICH_CONST);
    Ok((lower, upper))
}

fn require_even(w: &Weight) -> Result<()> {
    if w.is_even() {
        Ok(())
    } else {
        Err(Error::Param("the dual bound needs an even weight".into()))
    }
}

/// `(2 alpha / (pi tanh d)) (Q(alpha)^2 + Q'(alpha)^2)`, the closed-form bound on `G(alpha)`.
pub fn g_bound(alpha: f64, w: &Weight, d: StripParam) -> f64 {
    let q = w.q(alpha);
    let qp = w.q_prime_right(alpha);
    2.0 * alpha / (PI * d.d().tanh()) * (q * q + qp * qp)
}

/// Root of `(2 a / (pi tanh d)) (Q(a)^2 + Q'(a)^2) / Q(a) = n`.
pub fn alpha_n(w: &Weight, d: StripParam, n: usize) -> Result<f64> {
    require_even(w)?;
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    let nf = n as f64;
    let g = |a: f64| g_bound(a, w, d) / w.q(a) - nf;
    let tol = Tolerance::default().with_abs(1e-14);
    find_root_increasing(g, &tol)
}

/// `Q(alpha_n) / 2`, a lower bound on `F^C(n) / n`.
pub fn lower_bound_thm2(w: &Weight, d: StripParam, n: usize) -> Result<f64> {
    Ok(w.q(alpha_n(w, d, n)?) / 2.0)
}

/// `sqrt(2 e^3)`.
pub fn explicit_constant() -> f64 {
    (2.0 * 3.0f64.exp()).sqrt()
}

pub fn e_min_bracket(f_d: f64, w: &Weight, d: StripParam, n: usize) -> Result<ErrorBracket> {
    let (lower, upper) = sandwich(f_d, n)?;
    let alpha = alpha_n(w, d, n)?;
    let q_alpha = w.q(alpha);
    let nf = n as f64;
    Ok(ErrorBracket {
        fc_over_n_lower: lower,
        fc_over_n_upper: upper,
        fc_over_n_lower_dual: q_alpha / 2.0,
        alpha_n: alpha,
        e_min_lower: (-upper).exp(),
        e_min_upper: (-f_d / (nf - 1.0)).exp(),
        e_min_upper_explicit: explicit_constant() * (-(nf - 1.0) * q_alpha / (4.0 * nf)).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualObjective {
    /// `F(alpha) = 2 n Q(alpha) - G(alpha)`.
    pub f_alpha: f64,
    pub g_alpha: f64,
    /// Frequency cutoff used for the outer integral.
    pub omega_max: f64,
    /// Quadrature error estimate plus the certified tail bound.
    pub error_bound: f64,
}

const INITIAL_WINDOWS: usize = 8;
const MAX_DOUBLINGS: usize = 40;

/// `G(alpha) = (1/(2 pi^2)) int (w / tanh(d w)) |g^(w)|^2 dw` for
/// `g = (Q(alpha) - Q) 1_[-alpha, alpha]`, and `F(alpha) = 2 n Q(alpha) - G(alpha)`.
///
/// `g^` comes from a piecewise Legendre fit of `g` on `[0, alpha]`, so each
/// transform costs the same at every frequency. The outer integral runs over
/// windows of one oscillation period, and the cutoff doubles until
///
/// `int_W^inf <= 2 V^2 / (pi^2 W^2 tanh(d W))`, `V = |Q'(a)| + |Q'(0+)| + |Q'(a) - Q'(0+)|`,
///
/// obtained by integrating `g^` by parts twice, falls below half the error target.
pub fn dual_objective(
    alpha: f64,
    w: &Weight,
    d: StripParam,
    n: usize,
    tol: &Tolerance,
) -> Result<DualObjective> {
    require_even(w)?;
    tol.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    let q_alpha = w.q(alpha);
    let fit = PiecewiseLegendre::fit(|x| q_alpha - w.q(x), 0.0, alpha, 24, 1e-15)?;
    let dd = d.d();
    let integrand = |om: f64| {
        let ghat = 2.0 * fit.fourier(om).0;
        let factor = if dd * om < 1e-8 {
            1.0 / dd
        } else {
            om / (dd * om).tanh()
        };
        factor * ghat * ghat / (PI * PI)
    };

    let qp_a = w.q_prime_right(alpha);
    let qp_0 = w.q_prime_right(0.0);
    let v = qp_a.abs() + qp_0.abs() + (qp_a - qp_0).abs();
    let tail = |om: f64| 2.0 * v * v / (PI * PI * om * om * (dd * om).tanh());

    let window = 2.0 * PI / alpha;
    // Each window is positive, so a per-window relative target adds up to a
    // relative target on the sum.
    let inner = Tolerance::new(tol.abs_tol * 1e-3, 0.25 * tol.rel_tol, tol.max_iter)?;
    let mut total = 0.0;
    let mut quad_err = 0.0;
    let mut covered = 0.0;
    let mut omega_max = INITIAL_WINDOWS as f64 * window;
    let mut doublings = 0;
    loop {
        while covered < omega_max {
            let hi = (covered + window).min(omega_max);
            let q = integrate_with_error(integrand, covered, hi, &inner)?;
            total += q.value;
            quad_err += q.abs_error;
            covered = hi;
        }
        let t = tail(omega_max);
        if v == 0.0 || t <= 0.5 * tol.target(total) {
            let g = total;
            let error_bound = quad_err + t;
            if error_bound > tol.target(g) {
                return Err(Error::non_convergence(
                    "dual_objective",
                    format!(
                        "error bound {error_bound:e} above target {:e}",
                        tol.target(g)
                    ),
                ));
            }
            return Ok(DualObjective {
                f_alpha: 2.0 * n as f64 * q_alpha - g,
                g_alpha: g,
                omega_max,
                error_bound,
            });
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::non_convergence(
                "dual_objective",
                format!("tail bound {t:e} still above target at cutoff {omega_max:e}"),
            ));
        }
        omega_max *= 2.0;
    }
}

/// Grid discretization of the continuous weighted energy problem.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuousEstimate {
    /// `m^T K m + sum Q m` at the minimizing masses: the estimate of `F^C(n)`.
    pub f_c: f64,
    /// `m^T K m + 2 sum Q m`, the minimized primal objective.
    pub objective: f64,
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
    pub active_set_steps: usize,
}

/// Minimizes `sum_ij m_i m_j K(x_i - x_j) + 2 sum_i m_i Q(x_i)` over masses
/// `m >= 0`, `sum m = n`, on an equispaced grid. The diagonal `K(0) = inf` is
/// replaced by the kernel averaged over one grid spacing.
///
/// The quadratic program is solved exactly by a primal active-set method.
pub fn continuous_energy_estimate(
    w: &Weight,
    d: StripParam,
    n: usize,
    grid: &GridSpec,
) -> Result<ContinuousEstimate> {
    grid.validate()?;
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    let m = grid.points;
    let points = grid.points_vec();
    let h = points[1] - points[0];
    let diag = kernel_smoothed(0.0, d, h)?;
    let gram = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            diag
        } else {
            kernel_k(points[i] - points[j], d)
        }
    });
    let q: Vec<f64> = points.iter().map(|&x| w.q(x)).collect();
    let total = n as f64;

    // Start from the point of smallest Q.
    let start = q
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < q[b] { i } else { b });
    let mut support = vec![start];
    let mut mass = vec![0.0; m];
    mass[start] = total;
    let mut steps = 0;
    let max_steps = 50 * m;

    loop {
        steps += 1;
        if steps > max_steps {
            return Err(Error::non_convergence(
                "continuous_energy_estimate",
                format!("active set did not settle after {max_steps} steps"),
            ));
        }
        let z = equality_solution(&gram, &q, &support, total)?;
        if z.iter().all(|&v| v > 0.0) {
            for (&i, &v) in support.iter().zip(&z) {
                mass[i] = v;
            }
            // Multiplier check: r_i = (G m + q)_i must be >= lambda off the support.
            let r: Vec<f64> = (0..m)
                .map(|i| support.iter().map(|&j| gram[(i, j)] * mass[j]).sum::<f64>() + q[i])
                .collect();
            let lambda = support.iter().map(|&i| r[i]).sum::<f64>() / support.len() as f64;
            let slack = 1e-12 * (1.0 + lambda.abs());
            let entering = (0..m)
                .filter(|i| !support.contains(i))
                .map(|i| (i, r[i] - lambda))
                .filter(|&(_, v)| v < -slack)
                .fold(None, |best: Option<(usize, f64)>, c| match best {
                    Some(b) if b.1 <= c.1 => Some(b),
                    _ => Some(c),
                });
            match entering {
                Some((i, _)) => {
                    support.push(i);
                    support.sort_unstable();
                }
                None => break,
            }
        } else {
            // Move towards z until the first mass hits zero, then drop it.
            let mut tau = 1.0f64;
            for (&i, &zi) in support.iter().zip(&z) {
                if zi <= 0.0 {
                    tau = tau.min(mass[i] / (mass[i] - zi));
                }
            }
            for (&i, &zi) in support.iter().zip(&z) {
                mass[i] += tau * (zi - mass[i]);
            }
            let before = support.len();
            let cutoff = 1e-14 * total;
            support.retain(|&i| mass[i] > cutoff);
            if support.len() == before {
                // tau hit a component exactly at the cutoff scale; drop the smallest.
                let (k, _) = support
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |b, (k, &i)| {
                        if mass[i] < b.1 {
                            (k, mass[i])
                        } else {
                            b
                        }
                    });
                support.remove(k);
            }
            for (i, v) in mass.iter_mut().enumerate() {
                if !support.contains(&i) {
                    *v = 0.0;
                }
            }
            // Renormalize the rounding drift of the step.
            let s: f64 = support.iter().map(|&i| mass[i]).sum();
            for &i in &support {
                mass[i] *= total / s;
            }
        }
    }

    let mut quad = 0.0;
    for &i in &support {
        for &j in &support {
            quad += mass[i] * gram[(i, j)] * mass[j];
        }
    }
    let qm: f64 = support.iter().map(|&i| q[i] * mass[i]).sum();
    Ok(ContinuousEstimate {
        f_c: quad + qm,
        objective: quad + 2.0 * qm,
        points,
        masses: mass,
        active_set_steps: steps,
    })
}

/// Minimizer of `z^T G z + 2 q^T z` subject to `sum z = total` on the support.
fn equality_solution(
    gram: &DMatrix<f64>,
    q: &[f64],
    support: &[usize],
    total: f64,
) -> Result<Vec<f64>> {
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |a, b| gram[(support[a], support[b])]);
    let chol = sub.cholesky().ok_or_else(|| {
        Error::non_convergence(
            "continuous_energy_estimate",
            "Gram matrix on the support is not positive definite",
        )
    })?;
    let ones = DVector::from_element(k, 1.0);
    let qs = DVector::from_iterator(k, support.iter().map(|&i| q[i]));
    let u = chol.solve(&ones);
    let v = chol.solve(&qs);
    let mu = (total + v.sum()) / u.sum();
    Ok((0..k).map(|a| mu * u[a] - v[a]).collect())
}

/// `Q(alpha_n)/2` with the closed-form `alpha_n = ((pi tanh d) n / (4 beta^rho))^(1/(rho+1))`
/// of the single-exponential weight `exp(-(beta |x|)^rho)`.
pub fn asymptotic_rate_se(beta: f64, rho: f64, d: StripParam, n: usize) -> Result<f64> {
    if !(beta > 0.0) || !(rho >= 1.0) {
        return Err(Error::Param(format!(
            "need beta > 0 and rho >= 1, got {beta}, {rho}"
        )));
    }
    let br = beta.powf(rho);
    let alpha = (PI * d.d().tanh() / (4.0 * br) * n as f64).powf(1.0 / (rho + 1.0));
    if alpha < rho {
        return Err(Error::Domain(format!(
            "closed-form alpha_n = {alpha} is below rho = {rho}; n too small"
        )));
    }
    Ok(0.5 * br * alpha.powf(rho))
}

/// `(pi tanh d / (4 (1 + gamma^2))) n / alpha_n` with
/// `gamma alpha_n = W(pi tanh(d) gamma n / (2 beta (1 + gamma^2)))`
/// for the double-exponential weight `exp(-beta exp(gamma |x|))`.
pub fn asymptotic_rate_de(beta: f64, gamma: f64, d: StripParam, n: usize) -> Result<f64> {
    if !(beta > 0.0) || !(gamma > 0.0) {
        return Err(Error::Param(format!(
            "need beta, gamma > 0, got {beta}, {gamma}"
        )));
    }
    let g2 = 1.0 + gamma * gamma;
    let arg = PI * d.d().tanh() * gamma / (2.0 * beta * g2) * n as f64;
    if !(arg > 0.0) {
        return Err(Error::Domain("Lambert W argument must be positive".into()));
    }
    let alpha = lambert_w0(arg)? / gamma;
    Ok(PI * d.d().tanh() / (4.0 * g2) * n as f64 / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{weight_de, weight_se};

    fn strip(d: f64) -> StripParam {
        StripParam::new(d).unwrap()
    }

    #[test]
    fn sandwich_values() {
        let (lo, hi) = sandwich(0.0, 2).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 7.386_294_361_119_891).abs() < 1e-14);
        assert!(sandwich(1.0, 1).is_err());
        for (f, n) in [(0.3, 2), (10.0, 7), (1e3, 100)] {
            let (lo, hi) = sandwich(f, n).unwrap();
            assert!(lo < hi);
        }
        // Limit: n -> inf with f/(n-1) fixed.
        let n = 10_000_000;
        let (_, hi) = sandwich(2.5 * (n - 1) as f64, n).unwrap();
        assert!((hi - (5.0 + SANDWICH_CONST)).abs() < 1e-5);
    }

    #[test]
    fn alpha_n_se_quadratic() {
        let w = weight_se(1.0, 2.0).unwrap();
        let d = strip(1.0);
        let a = alpha_n(&w, d, 100).unwrap();
        // Oracle: 2a(a^2 + 4) = 100 pi tanh 1, by bisection.
        let target = 100.0 * PI * 1f64.tanh();
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * mid * (mid * mid + 4.0) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((a - lo).abs() < 1e-12);
        assert!((a - 4.657_051_385_564_061).abs() < 1e-9);
        assert!((lower_bound_thm2(&w, d, 100).unwrap() - 10.844_063_803_892_068).abs() < 1e-8);
        assert!(alpha_n(&w, d, 200).unwrap() > a);
        let resid = g_bound(a, &w, d) / w.q(a) - 100.0;
        assert!(resid.abs() <= 1e-8 * 100.0);
    }

    #[test]
    fn bracket_ordering() {
        let w = weight_se(1.0, 2.0).unwrap();
        let b = e_min_bracket(12.0, &w, strip(1.0), 8).unwrap();
        assert!(b.fc_over_n_lower <= b.fc_over_n_upper);
        assert!(b.e_min_lower <= b.e_min_upper);
        assert!((explicit_constant() - 6.338_065_465_611_359).abs() < 1e-14);
    }

    /// `g^(w) = 4 (sin(wa) - wa cos(wa)) / w^3` for `g = a^2 - x^2` on `[-a, a]`.
    fn ghat_quadratic(a: f64, om: f64) -> f64 {
        if om * a < 1e-3 {
            return 4.0 * a * a * a / 3.0 * (1.0 - (om * a).powi(2) / 10.0);
        }
        4.0 * ((om * a).sin() - om * a * (om * a).cos()) / om.powi(3)
    }

    #[test]
    fn dual_objective_matches_closed_form_transform() {
        let w = weight_se(1.0, 2.0).unwrap();
        let d = strip(1.0);
        let tol = Tolerance::new(1e-10, 1e-10, 10_000).unwrap();
        for alpha in [1.0, 2.0] {
            let r = dual_objective(alpha, &w, d, 10, &tol).unwrap();
            // Oracle: midpoint rule on a fine mesh with the exact transform plus
            // the exact asymptotic tail of |g^|^2 averaged over a period.
            let cut = 4000.0;
            let steps = 4_000_000;
            let dw = cut / steps as f64;
            let mut s = 0.0;
            for k in 0..steps {
                let om = (k as f64 + 0.5) * dw;
                let gh = ghat_quadratic(alpha, om);
                s += om / (om * d.d()).tanh() * gh * gh;
            }
            s *= dw / (PI * PI);
            // |g^|^2 ~ 16 a^2 cos^2(wa) / w^4, mean 8 a^2 / w^4; int_cut^inf w * 8a^2/w^4 = 4a^2/cut^2.
            s += 4.0 * alpha * alpha / (cut * cut) / (PI * PI);
            assert!(
                (r.g_alpha - s).abs() <= 1e-7 * s,
                "alpha {alpha}: {} vs {s}",
                r.g_alpha
            );
            assert!(r.g_alpha <= g_bound(alpha, &w, d));
        }
    }

    #[test]
    fn dual_objective_zero_weight() {
        let w = Weight::custom("zero", |_| 0.0, |_| Some(0.0), true, true);
        let r = dual_objective(1.5, &w, strip(1.0), 4, &Tolerance::default()).unwrap();
        assert_eq!(r.g_alpha, 0.0);
        assert_eq!(r.f_alpha, 0.0);
    }

    #[test]
    fn dual_objective_at_alpha_n() {
        let w = weight_de(1.0, 1.0).unwrap();
        let d = strip(1.0);
        let n = 16;
        let a = alpha_n(&w, d, n).unwrap();
        let tol = Tolerance::new(1e-8, 1e-8, 10_000).unwrap();
        let r = dual_objective(a, &w, d, n, &tol).unwrap();
        assert!(r.f_alpha >= n as f64 * w.q(a) - tol.target(r.g_alpha));
    }

    #[test]
    fn rates() {
        let d = strip(1.0);
        let w = weight_de(1.0, 1.0).unwrap();
        let de = asymptotic_rate_de(1.0, 1.0, d, 1000).unwrap();
        let thm2 = lower_bound_thm2(&w, d, 1000).unwrap();
        assert!((de / thm2 - 1.0).abs() < 0.15);
        assert!((de - 62.037_774_306_285).abs() < 1e-9);
        let r1 = asymptotic_rate_se(1.0, 1.0, d, 10_000).unwrap();
        let r2 = asymptotic_rate_se(1.0, 1.0, d, 40_000).unwrap();
        assert!((r2 / r1 - 2.0).abs() < 1e-12);
        assert!(asymptotic_rate_se(1.0, 2.0, d, 1).is_err());
    }
}
