use super::Tolerance;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Outcome of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration cap was hit before the bracket shrank to `abs_tol`.
    pub converged: bool,
}

/// Golden-section search for a minimizer of `f` on `[lo, hi]`.
///
/// Only interior points are evaluated, so `f` may be infinite at the endpoints.
/// NaN values are treated as `+inf`. For a strictly unimodal `f` the result is
/// within `abs_tol` of the global minimizer on the bracket.
pub fn minimize_scalar<F>(f: F, lo: f64, hi: f64, tol: &Tolerance) -> ScalarMinimum
where
    F: Fn(f64) -> f64,
{
    let eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < tol.max_iter {
        if b - a <= tol.abs_tol {
            converged = true;
            break;
        }
        iterations += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2);
        }
        if x1 >= x2 {
            // Bracket is at floating-point resolution.
            converged = true;
            break;
        }
    }
    if !converged && b - a <= tol.abs_tol {
        converged = true;
    }

    let (x, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    ScalarMinimum {
        x,
        value,
        iterations,
        converged,
    }
}
