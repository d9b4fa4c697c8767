//! Randomized invariant suites run by `hardy-approx selfcheck`.
//!
//! Every suite draws its samples from a ChaCha generator seeded with the run's
//! seed, so a fixed seed reproduces the same sample sets.

use std::f64::consts::{FRAC_PI_4, LN_2, PI};

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::{minimize_nodes, OptimizerOptions};
use crate::error::Result;
use crate::formula::{
    measure_error, test_function, worst_case_bound, ApproximationFormula, GridSpec,
};
use crate::kernel::{gram_matrix_smoothed, kernel_fourier, kernel_k, StripParam};
use crate::numerics::{integrate, integrate_halfline, Tolerance};
use crate::weights::{validate_weight, Weight};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteOutcome {
    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self {
                name,
                passed,
                detail,
            },
            Err(e) => Self {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        }
    }
}

/// Inputs shared by the suites.
#[derive(Debug, Clone)]
pub struct SelfcheckInput<'a> {
    pub weight: &'a Weight,
    pub d: StripParam,
    pub n_list: &'a [usize],
    pub tol: Tolerance,
    pub grid: GridSpec,
    pub seed: u64,
}

pub fn run_all(input: &SelfcheckInput<'_>) -> Vec<SuiteOutcome> {
    vec![
        SuiteOutcome::from_result("weight-admissibility", weight_admissibility(input)),
        SuiteOutcome::from_result("kernel-average", kernel_average(input.seed, &input.tol)),
        SuiteOutcome::from_result("kernel-halving", kernel_halving(input.seed)),
        SuiteOutcome::from_result("kernel-shape", kernel_shape(input.seed)),
        SuiteOutcome::from_result("gram-psd", gram_psd(input.seed, input.d)),
        SuiteOutcome::from_result("integrability", integrability(&input.tol)),
        SuiteOutcome::from_result("interpolation-exactness", interpolation_exactness(input)),
        SuiteOutcome::from_result("bound-chain", bound_chain(input)),
    ]
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn weight_admissibility(input: &SelfcheckInput<'_>) -> Result<(bool, String)> {
    let report = validate_weight(input.weight, 5.0, 1001)?;
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} (worst {:e} at {})", c.name, c.worst, c.at))
        .collect();
    if failed.is_empty() {
        Ok((true, format!("{} checks passed", report.checks.len())))
    } else {
        Ok((false, format!("failed: {}", failed.join(", "))))
    }
}

/// `int_0^1 K(t x) dx <= K(t) + 1`.
fn kernel_average(seed: u64, tol: &Tolerance) -> Result<(bool, String)> {
    let mut r = rng(seed, 1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let t = 20.0 * (1.0 - r.gen::<f64>());
        let d = StripParam::new(r.gen_range(0.1..=4.0))?;
        let lhs = integrate(|x| kernel_k(t * x, d), 0.0, 1.0, tol)?;
        worst = worst.max(lhs - kernel_k(t, d) - 1.0);
    }
    Ok((
        worst <= 1e-8,
        format!("max excess {worst:e} over 200 samples"),
    ))
}

/// `K(x/2) <= K(x) + log 2`.
fn kernel_halving(seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let x = 20.0 * (1.0 - r.gen::<f64>());
        let d = StripParam::new(r.gen_range(0.1..=4.0))?;
        worst = worst.max(kernel_k(x / 2.0, d) - kernel_k(x, d) - LN_2);
    }
    Ok((
        worst <= 1e-12,
        format!("max excess {worst:e} over 1000 samples"),
    ))
}

/// Convexity on `(0, inf)`, evenness and strict decrease.
fn kernel_shape(seed: u64) -> Result<(bool, String)> {
    let mut r = rng(seed, 3);
    let mut bad = 0;
    for _ in 0..1000 {
        let d = StripParam::new(r.gen_range(0.1..=4.0))?;
        let x = r.gen_range(0.05..6.0);
        let h = r.gen_range(1e-3..0.05);
        let dd = kernel_k(x - h, d) - 2.0 * kernel_k(x, d) + kernel_k(x + h, d);
        if dd / (h * h) < -1e-9 {
            bad += 1;
        }
        if kernel_k(-x, d) != kernel_k(x, d) {
            bad += 1;
        }
        if !(kernel_k(x + h, d) < kernel_k(x, d)) {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} violations in 1000 triples")))
}

fn gram_psd(seed: u64, d: StripParam) -> Result<(bool, String)> {
    let mut r = rng(seed, 4);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let n = r.gen_range(2..=12);
        let mut pts: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        for eps in [1.0, 0.1, 0.01] {
            let g = gram_matrix_smoothed(&pts, d, eps)?;
            let trace = g.trace();
            let min = SymmetricEigen::new(g).eigenvalues.min();
            worst = worst.min(min / trace);
        }
    }
    Ok((
        worst >= -1e-8,
        format!("smallest eigenvalue / trace = {worst:e}"),
    ))
}

/// `K` and `K^2` are integrable and `2 int_0^inf K = pi d`.
fn integrability(tol: &Tolerance) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for d in [0.25, FRAC_PI_4, 1.0, 2.0] {
        let s = StripParam::new(d)?;
        let l1 = integrate_halfline(|x| kernel_k(x, s), tol)?;
        let l2 = integrate_halfline(|x| kernel_k(x, s).powi(2), tol)?;
        if !l2.is_finite() {
            return Ok((false, format!("K^2 not integrable for d = {d}")));
        }
        worst = worst.max((2.0 * l1 - kernel_fourier(0.0, s)).abs());
        debug_assert!((kernel_fourier(0.0, s) - PI * d).abs() < 1e-12);
    }
    Ok((worst <= 1e-8, format!("max |2 int K - pi d| = {worst:e}")))
}

fn interpolation_exactness(input: &SelfcheckInput<'_>) -> Result<(bool, String)> {
    let mut r = rng(input.seed, 5);
    let mut worst = 0.0f64;
    for &n in input.n_list.iter().filter(|&&n| n <= 64) {
        let rep = minimize_nodes(n, input.weight, input.d, &OptimizerOptions::default())?;
        let samples: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let form = ApproximationFormula::from_samples(
            rep.nodes.clone(),
            input.weight.clone(),
            samples.clone(),
        )?;
        for (&a, &s) in rep.nodes.nodes().iter().zip(&samples) {
            worst = worst.max((form.interpolate(a) - s).abs() / (1.0 + s.abs()));
        }
    }
    Ok((worst <= 1e-10, format!("max relative node error {worst:e}")))
}

fn bound_chain(input: &SelfcheckInput<'_>) -> Result<(bool, String)> {
    let mut r = rng(input.seed, 6);
    let mut failures = 0;
    let mut checked = 0;
    for &n in input.n_list.iter().filter(|&&n| (2..=64).contains(&n)) {
        let rep = minimize_nodes(n, input.weight, input.d, &OptimizerOptions::default())?;
        let wc = worst_case_bound(&rep.nodes, input.weight)?;
        let rh = (-rep.f_discrete / (n - 1) as f64).exp();
        if wc.bound > rh + 1e-9 {
            failures += 1;
        }
        let span = rep.nodes.max_abs() + 1.0;
        let grid = GridSpec::new(input.grid.range.max(span + 2.0), input.grid.points)?;
        for _ in 0..10 {
            let k = r.gen_range(0..=n);
            let shifts: Vec<f64> = (0..k).map(|_| r.gen_range(-span..span)).collect();
            let f = test_function(input.weight, input.d, &shifts);
            let form =
                ApproximationFormula::bind(rep.nodes.clone(), input.weight.clone(), |x| f.eval(x));
            let m = measure_error(|x| f.eval(x), &form, &grid)?;
            checked += 1;
            if m.sup_error > wc.bound + 1e-12 {
                failures += 1;
            }
        }
    }
    Ok((
        failures == 0,
        format!("{failures} violations in {checked} test functions"),
    ))
}
