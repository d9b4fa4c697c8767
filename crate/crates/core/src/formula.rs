//! The interpolation formula
//!
//! `L_n f(x) = sum_k f(a_k) [B_{n;k}(x) w(x)] / [B_{n;k}(a_k) w(a_k)] * T_d'(x - a_k) / T_d'(0)`
//!
//! and the tools to judge it: the potential `sum_i K(x - a_i) + Q(x)`, whose
//! infimum gives the worst-case error bound `exp(-inf potential)`, test functions
//! of unit norm, and sampled error measurement.

use serde::{Deserialize, Serialize};

use crate::energy::NodeSet;
use crate::error::{Error, Result};
use crate::kernel::{kernel_k, StripParam};
use crate::numerics::{minimize_scalar, Tolerance};
use crate::weights::Weight;

/// Equispaced sampling grid on `[-range, range]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub range: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            range: 10.0,
            points: 4096,
        }
    }
}

impl GridSpec {
    pub fn new(range: f64, points: usize) -> Result<Self> {
        let g = Self { range, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::Param(format!(
                "grid range must be positive, got {}",
                self.range
            )));
        }
        if self.points < 2 {
            return Err(Error::Param(format!(
                "grid needs at least 2 points, got {}",
                self.points
            )));
        }
        Ok(())
    }

    pub fn points_vec(&self) -> Vec<f64> {
        let h = 2.0 * self.range / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.range
                } else {
                    -self.range + i as f64 * h
                }
            })
            .collect()
    }
}

/// `L_n` bound to a node set, a weight and the samples `f(a_k)`.
#[derive(Debug, Clone)]
pub struct ApproximationFormula {
    nodes: NodeSet,
    weight: Weight,
    samples: Vec<f64>,
    /// `log |B_{n;k}(a_k)| - Q(a_k)`: the log of the denominator of term `k`.
    log_denominator: Vec<f64>,
}

impl ApproximationFormula {
    pub fn bind<F: Fn(f64) -> f64>(nodes: NodeSet, weight: Weight, f: F) -> Self {
        let samples = nodes.nodes().iter().map(|&a| f(a)).collect();
        Self::from_samples(nodes, weight, samples).expect("one sample per node")
    }

    pub fn from_samples(nodes: NodeSet, weight: Weight, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != nodes.len() {
            return Err(Error::Param(format!(
                "{} samples for {} nodes",
                samples.len(),
                nodes.len()
            )));
        }
        let a = nodes.nodes();
        let d = nodes.d();
        let log_denominator = (0..a.len())
            .map(|k| {
                let s: f64 = (0..a.len())
                    .filter(|&j| j != k)
                    .map(|j| kernel_k(a[k] - a[j], d))
                    .sum();
                -s - weight.q(a[k])
            })
            .collect();
        Ok(Self {
            nodes,
            weight,
            samples,
            log_denominator,
        })
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `L_n f(x)`, in `O(n)` operations.
    pub fn interpolate(&self, x: f64) -> f64 {
        let a = self.nodes.nodes();
        let n = a.len();
        if let Ok(k) = a.binary_search_by(|v| v.total_cmp(&x)) {
            return self.samples[k];
        }
        let d = self.nodes.d();
        let c = d.scale();
        let ks: Vec<f64> = a.iter().map(|&aj| kernel_k(x - aj, d)).collect();
        let total: f64 = ks.iter().sum();
        let qx = self.weight.q(x);
        // Nodes above x; B_{n;k}(x) has sign (-1)^(above - [a_k > x]).
        let above = n - a.partition_point(|&v| v < x);
        let mut s = 0.0;
        for k in 0..n {
            if self.samples[k] == 0.0 {
                continue;
            }
            let flips_x = above - usize::from(a[k] > x);
            let flips_a = n - 1 - k;
            let sign = if (flips_x + flips_a) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let log_num = -(total - ks[k]) - qx;
            let ratio = (log_num - self.log_denominator[k]).exp();
            let sech = 1.0 / (c * (x - a[k])).cosh();
            s += self.samples[k] * sign * ratio * sech * sech;
        }
        s
    }
}

/// `sum_i K(x - a_i) + Q(x)` for an arbitrary (possibly empty) slice of nodes.
pub fn potential_at(x: f64, nodes: &[f64], w: &Weight, d: StripParam) -> f64 {
    nodes.iter().map(|&a| kernel_k(x - a, d)).sum::<f64>() + w.q(x)
}

/// `sum_i K(x - a_i) + Q(x)`; `+inf` at the nodes.
pub fn potential(x: f64, nodes: &NodeSet, w: &Weight) -> f64 {
    potential_at(x, nodes.nodes(), w, nodes.d())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCase {
    /// `exp(-inf_x potential)`, a bound on the worst-case error of `L_n` over the unit ball.
    pub bound: f64,
    pub x_min: f64,
    /// The infimum of the potential itself.
    pub min_potential: f64,
}

const TAIL_MARGIN: f64 = 10.0;
const MAX_TAIL_DOUBLINGS: usize = 200;

/// Minimizes the potential separately on each gap between nodes and on the two
/// tails. The potential is convex on every one of these intervals, so each
/// golden-section search finds the minimum of its interval.
pub fn worst_case_bound(nodes: &NodeSet, w: &Weight) -> Result<WorstCase> {
    let a = nodes.nodes();
    let n = a.len();
    let pot = |x: f64| potential(x, nodes, w);
    let tol_for =
        |lo: f64, hi: f64| Tolerance::default().with_abs(1e-12 * (1.0 + lo.abs().max(hi.abs())));

    let consider = |best: &mut (f64, f64), lo: f64, hi: f64| {
        let m = minimize_scalar(pot, lo, hi, &tol_for(lo, hi));
        if m.value < best.0 {
            *best = (m.value, m.x);
        }
    };
    let mut best = (f64::INFINITY, a[0]);
    for i in 0..n - 1 {
        consider(&mut best, a[i], a[i + 1]);
    }
    let reference = best.0.min(pot(a[0] - 1.0)).min(pot(a[n - 1] + 1.0));

    let reach = |dir: f64, from: f64| -> Result<f64> {
        let mut delta = 1.0;
        for _ in 0..MAX_TAIL_DOUBLINGS {
            if pot(from + dir * delta) >= reference + TAIL_MARGIN {
                return Ok(delta);
            }
            delta *= 2.0;
        }
        Err(Error::non_convergence(
            "worst_case_bound",
            "potential does not grow in the tail; is Q unbounded?",
        ))
    };
    let left = reach(-1.0, a[0])?;
    let right = reach(1.0, a[n - 1])?;
    consider(&mut best, a[0] - left, a[0]);
    consider(&mut best, a[n - 1], a[n - 1] + right);

    let (value, x) = best;
    if !value.is_finite() {
        return Err(Error::non_convergence(
            "worst_case_bound",
            "potential has no finite minimum",
        ));
    }
    Ok(WorstCase {
        bound: (-value).exp(),
        x_min: x,
        min_potential: value,
    })
}

/// `f(x) = w(x) prod_j T_d(x - c_j)`, a function of norm at most one.
#[derive(Debug, Clone)]
pub struct TestFunction {
    weight: Weight,
    d: StripParam,
    shifts: Vec<f64>,
}

pub fn test_function(w: &Weight, d: StripParam, shifts: &[f64]) -> TestFunction {
    let mut shifts = shifts.to_vec();
    shifts.sort_by(f64::total_cmp);
    TestFunction {
        weight: w.clone(),
        d,
        shifts,
    }
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        let above = self.shifts.len() - self.shifts.partition_point(|&c| c <= x);
        let log_mag = -self.weight.q(x)
            - self
                .shifts
                .iter()
                .map(|&c| kernel_k(x - c, self.d))
                .sum::<f64>();
        let sign = if above % 2 == 0 { 1.0 } else { -1.0 };
        sign * log_mag.exp()
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredError {
    pub sup_error: f64,
    pub argmax: f64,
    /// Half-width of the grid that was finally used.
    pub range: f64,
}

const MAX_GRID_EXPANSIONS: usize = 30;

/// `max |f - L_n f|` over the grid points and the midpoints between nodes.
///
/// When the error at either end of the grid exceeds 10% of the interior
/// maximum, the range grows by half and the measurement is repeated;
/// [`Error::GridTooSmall`] is returned if that keeps happening.
pub fn measure_error<F: Fn(f64) -> f64>(
    f: F,
    formula: &ApproximationFormula,
    grid: &GridSpec,
) -> Result<MeasuredError> {
    grid.validate()?;
    let a = formula.nodes().nodes();
    let midpoints: Vec<f64> = a.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let err = |x: f64| (f(x) - formula.interpolate(x)).abs();
    let mut g = *grid;
    let mut last = (0.0, 0.0);
    for _ in 0..=MAX_GRID_EXPANSIONS {
        let pts = g.points_vec();
        let m = pts.len();
        let mut best = (0.0f64, 0.0f64);
        for &x in pts[1..m - 1].iter().chain(&midpoints) {
            let e = err(x);
            if e > best.0 || best.0.is_nan() {
                best = (e, x);
            }
        }
        let boundary = err(pts[0]).max(err(pts[m - 1]));
        if !best.0.is_finite() || !boundary.is_finite() {
            return Err(Error::Domain("error is not finite on the grid".into()));
        }
        if boundary <= 0.1 * best.0 {
            return Ok(MeasuredError {
                sup_error: best.0,
                argmax: best.1,
                range: g.range,
            });
        }
        last = (boundary, best.0);
        g.range *= 1.5;
    }
    Err(Error::GridTooSmall {
        boundary: last.0,
        interior: last.1,
    })
}
