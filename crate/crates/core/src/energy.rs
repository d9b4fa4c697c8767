//! Discrete energy of a node set and its minimization.
//!
//! `I(a) = sum_{i != j} K(a_i - a_j) + (2(n-1)/n) sum_i Q(a_i)` is convex on the
//! ordered cone `a_1 < ... < a_n` and blows up at its boundary, so a damped Newton
//! method with a feasibility-aware backtracking line search converges to the
//! unique minimizer.
//!
//! For even weights the minimizer is symmetric, and the optimizer works on the
//! positive half `0 < t_1 < ... < t_m` only (plus a node fixed at 0 when `n` is
//! odd). That keeps every iterate away from a possible kink of `Q` at the origin.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_k, kernel_k_deriv_unchecked, kernel_k_second, StripParam};
use crate::weights::Weight;

/// Strictly increasing, finite sampling points together with the strip they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    nodes: Vec<f64>,
    d: StripParam,
}

impl NodeSet {
    pub fn new(nodes: Vec<f64>, d: StripParam) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Param("a node set needs at least one node".into()));
        }
        if let Some(x) = nodes.iter().find(|x| !x.is_finite()) {
            return Err(Error::Param(format!("node {x} is not finite")));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Param(format!(
                "nodes must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { nodes, d })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn d(&self) -> StripParam {
        self.d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Stop once `max_k |dI/da_k| <= grad_tol * (1 + |I|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub nodes: NodeSet,
    pub energy: f64,
    pub f_discrete: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when an iterate had to be nudged off a point where `Q'` is undefined.
    pub jittered: bool,
    /// Energy after every accepted step, starting with the initial guess.
    pub energy_trace: Vec<f64>,
}

fn q_coefficient(n: usize) -> f64 {
    2.0 * (n as f64 - 1.0) / n as f64
}

/// `(sum_{i != j} K(a_i - a_j), sum_i Q(a_i))`.
fn energy_parts(a: &[f64], w: &Weight, d: StripParam) -> (f64, f64) {
    let mut pair = 0.0;
    for i in 0..a.len() {
        for j in 0..i {
            pair += kernel_k(a[i] - a[j], d);
        }
    }
    let qsum = a.iter().map(|&x| w.q(x)).sum();
    (2.0 * pair, qsum)
}

fn energy_raw(a: &[f64], w: &Weight, d: StripParam) -> f64 {
    let (pair, qsum) = energy_parts(a, w, d);
    pair + q_coefficient(a.len()) * qsum
}

/// `I(a) = sum_{i != j} K(a_i - a_j) + (2(n-1)/n) sum Q(a_i)`.
pub fn discrete_energy(a: &NodeSet, w: &Weight) -> f64 {
    energy_raw(&a.nodes, w, a.d)
}

fn grad_raw(a: &[f64], w: &Weight, d: StripParam) -> Result<Vec<f64>> {
    let n = a.len();
    let coef = q_coefficient(n);
    let mut g = vec![0.0; n];
    for k in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if j != k {
                s += kernel_k_deriv_unchecked(a[k] - a[j], d);
            }
        }
        let qp = if coef == 0.0 {
            0.0
        } else {
            w.q_prime(a[k])
                .ok_or_else(|| Error::Domain(format!("Q' is undefined at node {}", a[k])))?
        };
        g[k] = 2.0 * s + coef * qp;
    }
    Ok(g)
}

/// Component `k` is `2 sum_{j != k} K'(a_k - a_j) + (2(n-1)/n) Q'(a_k)`.
pub fn discrete_energy_grad(a: &NodeSet, w: &Weight) -> Result<Vec<f64>> {
    grad_raw(&a.nodes, w, a.d)
}

fn q_second_at(w: &Weight, x: f64) -> Result<f64> {
    if let Some(v) = w.q_second(x) {
        return Ok(v);
    }
    let h = 1e-6 * x.abs().max(1.0);
    match (w.q_prime(x + h), w.q_prime(x - h)) {
        (Some(p), Some(m)) => Ok((p - m) / (2.0 * h)),
        _ => Err(Error::Domain(format!("Q'' is unavailable near {x}"))),
    }
}

fn hessian_raw(a: &[f64], w: &Weight, d: StripParam) -> Result<DMatrix<f64>> {
    let n = a.len();
    let coef = q_coefficient(n);
    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        for j in 0..k {
            let v = 2.0 * kernel_k_second(a[k] - a[j], d);
            h[(k, j)] = -v;
            h[(j, k)] = -v;
            h[(k, k)] += v;
            h[(j, j)] += v;
        }
    }
    if coef != 0.0 {
        for k in 0..n {
            h[(k, k)] += coef * q_second_at(w, a[k])?;
        }
    }
    Ok(h)
}

/// Hessian of the energy. `Q''` is taken from the weight when supplied and by
/// central differences of `Q'` otherwise.
pub fn discrete_energy_hessian(a: &NodeSet, w: &Weight) -> Result<DMatrix<f64>> {
    hessian_raw(&a.nodes, w, a.d)
}

/// `F^D(n) = I(a*) - ((n-1)/n) sum Q(a*_i) = sum_{i != j} K + ((n-1)/n) sum Q`.
pub fn f_discrete(report: &EnergyReport, w: &Weight) -> f64 {
    f_discrete_of(&report.nodes, w)
}

pub(crate) fn f_discrete_of(a: &NodeSet, w: &Weight) -> f64 {
    let (pair, qsum) = energy_parts(&a.nodes, w, a.d);
    let n = a.len() as f64;
    pair + (n - 1.0) / n * qsum
}

/// Minimizes the discrete energy over `n` ordered nodes.
///
/// On failure to reach the gradient tolerance within `opts.max_iter` Newton
/// steps the best iterate is returned inside [`Error::OptimizerNonConvergence`].
pub fn minimize_nodes(
    n: usize,
    w: &Weight,
    d: StripParam,
    opts: &OptimizerOptions,
) -> Result<EnergyReport> {
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    if !(opts.grad_tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Param(
            "optimizer needs grad_tol > 0 and max_iter >= 1".into(),
        ));
    }
    let half = if w.is_even() {
        crate::bounds::alpha_n(w, d, n).unwrap_or_else(|_| (n as f64).sqrt())
    } else {
        (n as f64).sqrt()
    };
    let problem: Box<dyn Problem + '_> = if w.is_even() {
        Box::new(Symmetric { n, w, d })
    } else {
        Box::new(Full { n, w, d })
    };
    newton(problem.as_ref(), half, opts)
}

/// A parametrization of the ordered node cone.
trait Problem {
    fn dim(&self) -> usize;
    fn nodes(&self, t: &[f64]) -> Vec<f64>;
    fn initial(&self, half_width: f64) -> Vec<f64>;
    fn feasible(&self, t: &[f64]) -> bool;
    fn energy(&self, t: &[f64]) -> f64;
    /// Reduced gradient and the sup-norm of the full gradient.
    fn gradient(&self, t: &[f64]) -> Result<(Vec<f64>, f64)>;
    fn hessian(&self, t: &[f64]) -> Result<DMatrix<f64>>;
    /// Moves `t` off points where the gradient is undefined. Returns true if it did.
    fn jitter(&self, t: &mut [f64]) -> bool;
    fn weight(&self) -> &Weight;
    fn strip(&self) -> StripParam;
}

struct Full<'a> {
    n: usize,
    w: &'a Weight,
    d: StripParam,
}

impl Problem for Full<'_> {
    fn dim(&self) -> usize {
        self.n
    }
    fn nodes(&self, t: &[f64]) -> Vec<f64> {
        t.to_vec()
    }
    fn initial(&self, half_width: f64) -> Vec<f64> {
        if self.n == 1 {
            return vec![0.0];
        }
        let step = 2.0 * half_width / (self.n - 1) as f64;
        (0..self.n).map(|k| -half_width + k as f64 * step).collect()
    }
    fn feasible(&self, t: &[f64]) -> bool {
        t.iter().all(|x| x.is_finite()) && t.windows(2).all(|p| p[0] < p[1])
    }
    fn energy(&self, t: &[f64]) -> f64 {
        energy_raw(t, self.w, self.d)
    }
    fn gradient(&self, t: &[f64]) -> Result<(Vec<f64>, f64)> {
        let g = grad_raw(t, self.w, self.d)?;
        let norm = sup_norm(&g);
        Ok((g, norm))
    }
    fn hessian(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        hessian_raw(t, self.w, self.d)
    }
    fn jitter(&self, t: &mut [f64]) -> bool {
        let mut moved = false;
        if self.n > 1 {
            for x in t.iter_mut() {
                if self.w.q_prime(*x).is_none() {
                    *x += 1e-12;
                    moved = true;
                }
            }
        }
        moved
    }
    fn weight(&self) -> &Weight {
        self.w
    }
    fn strip(&self) -> StripParam {
        self.d
    }
}

/// Symmetric nodes `(-t_m, ..., -t_1, [0], t_1, ..., t_m)` with `0 < t_1 < ... < t_m`.
struct Symmetric<'a> {
    n: usize,
    w: &'a Weight,
    d: StripParam,
}

impl Symmetric<'_> {
    fn odd(&self) -> bool {
        self.n % 2 == 1
    }
    /// Index of `t_i` in the full node vector.
    fn pos(&self, i: usize) -> usize {
        self.n - self.dim() + i
    }
    fn neg(&self, i: usize) -> usize {
        self.dim() - 1 - i
    }
}

impl Problem for Symmetric<'_> {
    fn dim(&self) -> usize {
        self.n / 2
    }
    fn nodes(&self, t: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = t.iter().rev().map(|&x| -x).collect();
        if self.odd() {
            a.push(0.0);
        }
        a.extend_from_slice(t);
        a
    }
    fn initial(&self, half_width: f64) -> Vec<f64> {
        let m = self.dim();
        if m == 0 {
            return Vec::new();
        }
        // Equispaced on [-half_width, half_width], positive half only.
        let step = 2.0 * half_width / (self.n - 1) as f64;
        let first = if self.odd() { step } else { 0.5 * step };
        (0..m).map(|i| first + i as f64 * step).collect()
    }
    fn feasible(&self, t: &[f64]) -> bool {
        t.iter().all(|x| x.is_finite())
            && t.first().is_none_or(|&x| x > 0.0)
            && t.windows(2).all(|p| p[0] < p[1])
    }
    fn energy(&self, t: &[f64]) -> f64 {
        energy_raw(&self.nodes(t), self.w, self.d)
    }
    fn gradient(&self, t: &[f64]) -> Result<(Vec<f64>, f64)> {
        let a = self.nodes(t);
        let n = a.len();
        let coef = q_coefficient(n);
        let m = self.dim();
        // Only the positive half is needed; the negative half mirrors it and the
        // gradient at a central node vanishes (its minimal subgradient is 0).
        let mut full = vec![0.0; m];
        for (i, gi) in full.iter_mut().enumerate() {
            let k = self.pos(i);
            let mut s = 0.0;
            for (j, &aj) in a.iter().enumerate() {
                if j != k {
                    s += kernel_k_deriv_unchecked(a[k] - aj, self.d);
                }
            }
            let qp = self
                .w
                .q_prime(a[k])
                .ok_or_else(|| Error::Domain(format!("Q' is undefined at node {}", a[k])))?;
            *gi = 2.0 * s + coef * qp;
        }
        let norm = sup_norm(&full);
        Ok((full.iter().map(|g| 2.0 * g).collect(), norm))
    }
    fn hessian(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        let a = self.nodes(t);
        let h = hessian_raw(&a, self.w, self.d)?;
        let m = self.dim();
        Ok(DMatrix::from_fn(m, m, |i, j| {
            2.0 * (h[(self.pos(i), self.pos(j))] - h[(self.pos(i), self.neg(j))])
        }))
    }
    fn jitter(&self, _t: &mut [f64]) -> bool {
        false
    }
    fn weight(&self) -> &Weight {
        self.w
    }
    fn strip(&self) -> StripParam {
        self.d
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_HALVINGS: usize = 80;

fn newton_direction(h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let m = g.len();
    let rhs = DVector::from_column_slice(g);
    let scale = (0..m)
        .fold(0.0f64, |s, i| s.max(h[(i, i)].abs()))
        .max(1e-300);
    let mut shift = 0.0;
    for _ in 0..60 {
        let mut shifted = h.clone();
        for i in 0..m {
            shifted[(i, i)] += shift;
        }
        if let Some(ch) = shifted.cholesky() {
            let p = ch.solve(&rhs);
            if p.iter().all(|v| v.is_finite()) {
                return p.iter().map(|v| -v).collect();
            }
        }
        shift = if shift == 0.0 {
            1e-12 * scale
        } else {
            shift * 10.0
        };
    }
    g.iter().map(|v| -v).collect()
}

fn newton(problem: &dyn Problem, half_width: f64, opts: &OptimizerOptions) -> Result<EnergyReport> {
    let mut t = problem.initial(half_width);
    let mut jittered = problem.jitter(&mut t);
    let mut energy = problem.energy(&t);
    let mut trace = vec![energy];
    let mut iterations = 0;

    let finish = |t: &[f64],
                  energy: f64,
                  grad_norm: f64,
                  iterations,
                  converged,
                  jittered,
                  trace: Vec<f64>| {
        let nodes = NodeSet::new(problem.nodes(t), problem.strip())?;
        let f_discrete = f_discrete_of(&nodes, problem.weight());
        let report = EnergyReport {
            nodes,
            energy,
            f_discrete,
            grad_norm,
            iterations,
            converged,
            jittered,
            energy_trace: trace,
        };
        if converged {
            Ok(report)
        } else {
            Err(Error::OptimizerNonConvergence(Box::new(report)))
        }
    };

    loop {
        let (g, grad_norm) = problem.gradient(&t)?;
        let target = opts.grad_tol * (1.0 + energy.abs());
        if grad_norm <= target || problem.dim() == 0 {
            return finish(&t, energy, grad_norm, iterations, true, jittered, trace);
        }
        if iterations >= opts.max_iter {
            return finish(&t, energy, grad_norm, iterations, false, jittered, trace);
        }
        iterations += 1;

        let mut p = newton_direction(problem.hessian(&t)?, &g);
        let mut slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            p = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut trial: Vec<f64> = t.iter().zip(&p).map(|(x, dx)| x + step * dx).collect();
            if problem.feasible(&trial) {
                if problem.jitter(&mut trial) {
                    jittered = true;
                }
                let delta = energy_change(
                    &problem.nodes(&t),
                    &problem.nodes(&trial),
                    problem.weight(),
                    problem.strip(),
                );
                if delta <= ARMIJO_C1 * step * slope {
                    accepted = Some((trial, delta));
                    break;
                }
            }
            step *= BACKTRACK;
        }
        match accepted {
            Some((trial, delta)) => {
                energy = problem.energy(&trial);
                trace.push(trace.last().copied().unwrap_or(energy) + delta);
                t = trial;
            }
            // No decrease is representable any more; report where we stand.
            None => return finish(&t, energy, grad_norm, iterations, false, jittered, trace),
        }
    }
}

/// `Q(y) - Q(x)`; short moves use Simpson's rule on `Q'`, which is exact for
/// cubics and avoids cancellation between two nearly equal values of `Q`.
fn q_change(w: &Weight, x: f64, y: f64) -> f64 {
    let h = y - x;
    let crosses_kink = w.has_kink_at_origin() && x * y <= 0.0;
    if h != 0.0 && h.abs() <= 1e-3 * (1.0 + x.abs()) && !crosses_kink {
        if let (Some(gx), Some(gm), Some(gy)) = (w.q_prime(x), w.q_prime(x + 0.5 * h), w.q_prime(y))
        {
            return h * (gx + 4.0 * gm + gy) / 6.0;
        }
    }
    w.q(y) - w.q(x)
}

/// `I(b) - I(a)` for two node vectors with the same ordering, accurate to
/// rounding in the change itself rather than in the two energies.
fn energy_change(a: &[f64], b: &[f64], w: &Weight, d: StripParam) -> f64 {
    let c = d.scale();
    let shift: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let mut pair = 0.0;
    for i in 0..a.len() {
        for j in 0..i {
            let x = c * (a[i] - a[j]);
            let y = c * (b[i] - b[j]);
            pair += if x.min(y) > 20.0 {
                kernel_k(b[i] - b[j], d) - kernel_k(a[i] - a[j], d)
            } else {
                // log tanh(y) - log tanh(x), with tanh y - tanh x = sinh(y - x) / (cosh y cosh x).
                let dy = c * (shift[i] - shift[j]);
                -(dy.sinh() / (y.cosh() * x.cosh() * x.tanh())).ln_1p()
            };
        }
    }
    let qdiff: f64 = a.iter().zip(b).map(|(&x, &y)| q_change(w, x, y)).sum();
    2.0 * pair + q_coefficient(a.len()) * qdiff
}
