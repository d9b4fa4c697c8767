use super::Tolerance;
use crate::error::{Error, Result};

const EXPANSION_BUDGET: usize = 128;

/// Root of a strictly increasing `g` on `(0, inf)` with `g(0+) < 0`.
///
/// The bracket is found by doubling from 1 (or halving towards 0 when
/// `g(1) >= 0`), then refined by bisection until its width is at most `abs_tol`
/// or floating-point resolution is reached. Returns the bracket midpoint.
pub fn find_root_increasing<G>(g: G, tol: &Tolerance) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    tol.validate()?;
    let negative = |x: f64| {
        let v = g(x);
        if v.is_nan() {
            None
        } else {
            Some(v < 0.0)
        }
    };

    let (mut lo, mut hi);
    match negative(1.0) {
        Some(true) => {
            lo = 1.0;
            hi = 2.0;
            let mut steps = 0;
            loop {
                match negative(hi) {
                    Some(false) => break,
                    Some(true) if steps < EXPANSION_BUDGET => {
                        lo = hi;
                        hi *= 2.0;
                        steps += 1;
                    }
                    _ => {
                        return Err(Error::BracketFailure(format!(
                            "no sign change found up to x = {hi:e}"
                        )));
                    }
                }
            }
        }
        Some(false) => {
            hi = 1.0;
            lo = 0.5;
            let mut steps = 0;
            while negative(lo) != Some(true) {
                if steps >= EXPANSION_BUDGET {
                    return Err(Error::BracketFailure(format!(
                        "function is not negative near 0 (checked down to x = {lo:e})"
                    )));
                }
                hi = lo;
                lo *= 0.5;
                steps += 1;
            }
        }
        None => {
            return Err(Error::BracketFailure("function is NaN at x = 1".into()));
        }
    }

    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol.abs_tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        match negative(mid) {
            Some(true) => lo = mid,
            Some(false) => hi = mid,
            None => {
                return Err(Error::BracketFailure(format!(
                    "function is NaN at x = {mid}"
                )));
            }
        }
    }
}

/// Principal branch `W0(x)` for `x >= 0`, the solution `u >= 0` of `u e^u = x`.
///
/// Newton iteration from `ln x` when `x > e` and from `x` otherwise.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "lambert_w0 expects a finite x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut u = if x > std::f64::consts::E { x.ln() } else { x };
    for _ in 0..100 {
        let eu = u.exp();
        let step = (u * eu - x) / (eu * (u + 1.0));
        u -= step;
        if step.abs() <= 4.0 * f64::EPSILON * u.abs().max(f64::MIN_POSITIVE) {
            return Ok(u);
        }
    }
    Err(Error::non_convergence(
        "lambert_w0",
        format!("Newton iteration stalled for x = {x}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn linear_root() {
        let r = find_root_increasing(|x| x - 3.0, &tol()).unwrap();
        assert!((r - 3.0).abs() < 1e-10);
    }

    #[test]
    fn cubic_matches_long_bisection() {
        let g = |x: f64| x * x * x + 4.0 * x - 119.63;
        // Oracle: plain bisection on a hand-picked bracket run to exhaustion.
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = find_root_increasing(g, &tol()).unwrap();
        assert!((r - lo).abs() < 1e-10);
        assert!((r - 4.657_037_915_945_217).abs() < 1e-9);
    }

    #[test]
    fn exponential_root_below_one() {
        let r = find_root_increasing(|x| x.exp() - 1.0 - 0.5, &tol()).unwrap();
        assert!((r - 1.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn residual_scaled_by_derivative() {
        for shift in [0.1, 1.0, 7.5, 300.0] {
            let g = |x: f64| x.powi(3) + x - shift;
            let r = find_root_increasing(g, &tol()).unwrap();
            let deriv = 3.0 * r * r + 1.0;
            assert!(g(r).abs() <= deriv * tol().abs_tol * 4.0 + 1e-12 * shift);
        }
    }

    #[test]
    fn bracket_failure() {
        assert!(matches!(
            find_root_increasing(|_| -1.0, &tol()),
            Err(Error::BracketFailure(_))
        ));
        assert!(matches!(
            find_root_increasing(|_| 1.0, &tol()),
            Err(Error::BracketFailure(_))
        ));
    }

    #[test]
    fn lambert_special_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        for x in [1e-8, 0.3, 1.0, 10.0, 1e3, 1e12] {
            let w = lambert_w0(x).unwrap();
            assert!((w * w.exp() - x).abs() <= 1e-13 * x);
        }
        assert!(lambert_w0(-0.1).is_err());
    }
}
