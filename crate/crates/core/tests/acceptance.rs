//! Acceptance suite. One test per criterion; each prints a PASS/FAIL line
//! straight to stderr so it shows up even when output is captured.

use std::f64::consts::{FRAC_PI_4, LN_2, PI};
use std::io::Write;
use std::process::Command;
use std::time::Instant;

use hardy_approx::baseline::tune_spacing_against;
use hardy_approx::bounds::{
    asymptotic_rate_de, continuous_energy_estimate, dual_objective, g_bound, lower_bound_thm2,
    sandwich,
};
use hardy_approx::cli::convergence_row;
use hardy_approx::energy::{minimize_nodes, EnergyReport, OptimizerOptions};
use hardy_approx::formula::{
    measure_error, test_function, worst_case_bound, ApproximationFormula, GridSpec,
};
use hardy_approx::kernel::{gram_matrix_smoothed, kernel_k, StripParam};
use hardy_approx::numerics::{integrate, integrate_halfline, Tolerance};
use hardy_approx::weights::{weight_de, weight_se, Weight};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{status} criterion {criterion}: {detail}"
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn strip(d: f64) -> StripParam {
    StripParam::new(d).unwrap()
}

struct Instance {
    label: String,
    weight: Weight,
    d: StripParam,
    n: usize,
    report: EnergyReport,
}

/// n in {4,8,16,32,64} x {SE(1,2), DE(1,1)} x d in {pi/4, 1}.
fn criterion_one_instances() -> Vec<Instance> {
    let mut out = Vec::new();
    for (wname, weight) in [
        ("SE(1,2)", weight_se(1.0, 2.0).unwrap()),
        ("DE(1,1)", weight_de(1.0, 1.0).unwrap()),
    ] {
        for (dname, d) in [("pi/4", FRAC_PI_4), ("1", 1.0)] {
            for n in [4, 8, 16, 32, 64] {
                let d = strip(d);
                let report = minimize_nodes(n, &weight, d, &OptimizerOptions::default()).unwrap();
                out.push(Instance {
                    label: format!("{wname} d={dname} n={n}"),
                    weight: weight.clone(),
                    d,
                    n,
                    report,
                });
            }
        }
    }
    out
}

fn random_shifts(rng: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<f64> {
    let k = rng.gen_range(0..=n);
    (0..k).map(|_| rng.gen_range(-span..span)).collect()
}

#[test]
fn criterion_01_interpolation_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for inst in criterion_one_instances() {
        let span = inst.report.nodes.max_abs() + 1.0;
        for _ in 0..5 {
            let f = test_function(&inst.weight, inst.d, &random_shifts(&mut rng, inst.n, span));
            let form =
                ApproximationFormula::bind(inst.report.nodes.clone(), inst.weight.clone(), |x| {
                    f.eval(x)
                });
            for &a in inst.report.nodes.nodes() {
                let fa = f.eval(a);
                // At the node itself and one ulp to either side (the general summation path).
                for x in [
                    a,
                    f64::from_bits(a.to_bits() + 1),
                    f64::from_bits(a.to_bits() - 1),
                ] {
                    let x = if a == 0.0 && x != 0.0 {
                        f64::from_bits(1).copysign(x)
                    } else {
                        x
                    };
                    let err = (form.interpolate(x) - fa).abs() / (1.0 + fa.abs());
                    if err > worst {
                        worst = err;
                        worst_at = inst.label.clone();
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-10 && secs < 10.0,
        &format!("max |L f(a_k) - f(a_k)| / (1 + |f|) = {worst:e} ({worst_at}), {secs:.2}s"),
    );
}

#[test]
fn criterion_02_certified_bound_chain() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut below_resolution = 0;
    for inst in criterion_one_instances() {
        let wc = worst_case_bound(&inst.report.nodes, &inst.weight).unwrap();
        let rh = (-inst.report.f_discrete / (inst.n - 1) as f64).exp();
        if wc.bound > rh + 1e-9 {
            violations.push(format!(
                "{}: bound {:e} > exp(-F^D/(n-1)) {rh:e}",
                inst.label, wc.bound
            ));
        }
        let span = inst.report.nodes.max_abs() + 1.0;
        let grid = GridSpec::new(span + 2.0, 4096).unwrap();
        for _ in 0..50 {
            let f = test_function(&inst.weight, inst.d, &random_shifts(&mut rng, inst.n, span));
            let form =
                ApproximationFormula::bind(inst.report.nodes.clone(), inst.weight.clone(), |x| {
                    f.eval(x)
                });
            let m = measure_error(|x| f.eval(x), &form, &grid).unwrap();
            checked += 1;
            if m.sup_error > wc.bound {
                below_resolution += 1;
            }
            if m.sup_error > wc.bound + 1e-12 {
                violations.push(format!(
                    "{}: measured {:e} > bound {:e}",
                    inst.label, m.sup_error, wc.bound
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        violations.is_empty() && secs < 60.0,
        &format!(
            "{checked} test functions, {} violations {:?}, {below_resolution} exceed the bound by under 1e-12 (bound below float resolution), {secs:.2}s",
            violations.len(),
            violations.first()
        ),
    );
}

fn primal_estimate(n: usize, points_per_n: usize) -> (EnergyReport, f64) {
    let w = weight_se(1.0, 2.0).unwrap();
    let d = strip(1.0);
    let rep = minimize_nodes(n, &w, d, &OptimizerOptions::default()).unwrap();
    let grid = GridSpec::new(1.5 * rep.nodes.max_abs() + 1.0, points_per_n * n).unwrap();
    let est = continuous_energy_estimate(&w, d, n, &grid).unwrap();
    (rep, est.f_c)
}

#[test]
fn criterion_03_sandwich_with_primal_oracle() {
    let start = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for n in [4, 8] {
        let (rep, est) = primal_estimate(n, 40);
        let (_, est_fine) = primal_estimate(n, 80);
        let (lo, hi) = sandwich(rep.f_discrete, n).unwrap();
        let per_n = est / n as f64;
        let inside = per_n >= lo * 0.95 && per_n <= hi * 1.05;
        let drift = (est_fine - est).abs() / est.abs();
        ok &= inside && drift < 0.02;
        details.push(format!(
            "n={n}: F^C/n ~ {per_n:.5} in [{lo:.5}, {hi:.5}], mesh drift {:.3}%",
            100.0 * drift
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        ok && secs < 300.0,
        &format!("{}; {secs:.2}s", details.join("; ")),
    );
}

#[test]
fn criterion_04_dual_lower_bound_consistency() {
    let mut violations = Vec::new();
    for inst in criterion_one_instances() {
        let thm2 = lower_bound_thm2(&inst.weight, inst.d, inst.n).unwrap();
        let (_, hi) = sandwich(inst.report.f_discrete, inst.n).unwrap();
        if thm2 > hi {
            violations.push(format!("{}: Q(alpha_n)/2 = {thm2} > {hi}", inst.label));
        }
    }
    let w = weight_se(1.0, 2.0).unwrap();
    let mut weak = Vec::new();
    for n in [4, 8] {
        let (_, est) = primal_estimate(n, 40);
        let thm2 = lower_bound_thm2(&w, strip(1.0), n).unwrap();
        let per_n = est / n as f64;
        weak.push(format!("n={n}: {thm2:.4} <= {per_n:.4}"));
        if thm2 > per_n * 1.05 {
            violations.push(format!("n={n}: Q(alpha_n)/2 = {thm2} > 1.05 * {per_n}"));
        }
    }
    report(
        4,
        violations.is_empty(),
        &format!(
            "20 sandwich instances, weak duality {}; violations {violations:?}",
            weak.join(", ")
        ),
    );
}

#[test]
fn criterion_05_dual_objective_bound() {
    let start = Instant::now();
    let d = strip(1.0);
    let tol = Tolerance::new(1e-8, 1e-8, 10_000).unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for (name, w) in [
        ("SE(1,2)", weight_se(1.0, 2.0).unwrap()),
        ("DE(1,1)", weight_de(1.0, 1.0).unwrap()),
    ] {
        for alpha in [1.0, 2.0, 4.0] {
            match dual_objective(alpha, &w, d, 1, &tol) {
                Ok(r) => {
                    let b = g_bound(alpha, &w, d);
                    ok &= r.g_alpha <= b;
                    details.push(format!("{name} a={alpha}: G={:.6} <= {b:.6}", r.g_alpha));
                }
                Err(e) => {
                    ok = false;
                    details.push(format!("{name} a={alpha}: {e}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        ok && secs < 60.0,
        &format!("{}; {secs:.2}s", details.join("; ")),
    );
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[test]
fn criterion_06_se_rate_regression() {
    let start = Instant::now();
    let w = weight_se(1.0, 2.0).unwrap();
    let d = strip(1.0);
    let grid = GridSpec::default();
    let ns = [8usize, 16, 32, 64, 128];
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| convergence_row(n, &w, d, &grid).unwrap().measured_sup_error)
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| (-e.ln()).ln()).collect();
    let s = slope(&xs, &ys);
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        (0.617..=0.717).contains(&s) && secs < 300.0,
        &format!(
            "slope {s:.4} (target 2/3 +- 0.05), errors [{}], {secs:.2}s",
            errs.iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

#[test]
fn criterion_07_de_rate_regression() {
    let w = weight_de(1.0, 1.0).unwrap();
    let d = strip(1.0);
    let grid = GridSpec::default();
    let ratios: Vec<f64> = [8usize, 16, 32, 64]
        .iter()
        .map(|&n| {
            let e = convergence_row(n, &w, d, &grid).unwrap().measured_sup_error;
            let nf = n as f64;
            -e.ln() / (nf / nf.ln())
        })
        .collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let rate = asymptotic_rate_de(1.0, 1.0, d, 1000).unwrap();
    let thm2 = lower_bound_thm2(&w, d, 1000).unwrap();
    let rel = (rate - thm2).abs() / thm2;
    report(
        7,
        lo >= 0.5 && hi <= 5.0 && hi / lo <= 2.0 && rel <= 0.15,
        &format!("ratios {ratios:.4?} in [0.5, 5], spread {:.3}; rate_de {rate:.10} vs thm2 {thm2:.10} ({:.2e}%)", hi / lo, 100.0 * rel),
    );
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_min_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_08_lemma_suites() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tol = Tolerance::default();
    let mut parts = Vec::new();
    let mut ok = true;

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let t = 20.0 * (1.0 - rng.gen::<f64>());
        let d = strip(rng.gen_range(0.1..=4.0));
        let avg = integrate(|x| kernel_k(t * x, d), 0.0, 1.0, &tol).unwrap();
        worst = worst.max(avg - kernel_k(t, d) - 1.0);
    }
    ok &= worst <= 1e-8;
    parts.push(format!("average excess {worst:.3e}"));

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let x = 30.0 * (1.0 - rng.gen::<f64>());
        let d = strip(rng.gen_range(0.1..=4.0));
        worst = worst.max(kernel_k(x / 2.0, d) - kernel_k(x, d) - LN_2);
    }
    ok &= worst <= 1e-12;
    parts.push(format!("halving excess {worst:.3e}"));

    let mut shape_bad = 0;
    for _ in 0..1000 {
        let d = strip(rng.gen_range(0.1..=4.0));
        let x = rng.gen_range(0.05..6.0);
        let h = rng.gen_range(1e-3..0.05);
        let dd = (kernel_k(x - h, d) - 2.0 * kernel_k(x, d) + kernel_k(x + h, d)) / (h * h);
        shape_bad += usize::from(dd < -1e-9);
        shape_bad += usize::from(kernel_k(-x, d) != kernel_k(x, d));
        shape_bad += usize::from(!(kernel_k(x + h, d) < kernel_k(x, d)) || kernel_k(x, d) <= 0.0);
    }
    ok &= shape_bad == 0;
    parts.push(format!("shape violations {shape_bad}"));

    let mut worst = f64::INFINITY;
    for set in 0..100 {
        let n = 1 + set % 12;
        let mut pts: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        pts.sort_by(f64::total_cmp);
        let d = strip(1.0);
        for eps in [1.0, 0.1, 0.01] {
            let g = gram_matrix_smoothed(&pts, d, eps).unwrap();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| g[(i, j)]).collect())
                .collect();
            let trace: f64 = (0..n).map(|i| g[(i, i)]).sum();
            worst = worst.min(jacobi_min_eigenvalue(rows) / trace);
        }
    }
    ok &= worst >= -1e-8;
    parts.push(format!("min eig/trace {worst:.3e}"));

    let mut worst = 0.0f64;
    for d in [0.25, FRAC_PI_4, 1.0, 2.0] {
        let s = strip(d);
        let l1 = integrate_halfline(|x| kernel_k(x, s), &tol).unwrap();
        let l2 = integrate_halfline(|x| kernel_k(x, s).powi(2), &tol).unwrap();
        ok &= l2.is_finite();
        worst = worst.max((2.0 * l1 - PI * d).abs());
    }
    ok &= worst <= 1e-8;
    parts.push(format!("|2 int K - pi d| {worst:.3e}"));

    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        ok && secs < 120.0,
        &format!("{}; {secs:.2}s", parts.join(", ")),
    );
}

#[test]
fn criterion_09_baseline_dominance() {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for inst in criterion_one_instances() {
        let r = tune_spacing_against(&inst.report, &inst.weight, inst.d).unwrap();
        summary.push(format!("{} {:.3}", inst.label, r.ratio));
        if r.ratio > 1.0 || (inst.n >= 8 && r.ratio >= 0.99) {
            failures.push(format!("{}: ratio {:.4}", inst.label, r.ratio));
        }
    }
    report(
        9,
        failures.is_empty(),
        &format!(
            "{} of 20 instances fail {failures:?}; ratios [{}]",
            failures.len(),
            summary.join(", ")
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"d": 1.0, "weight": {"family": "se", "beta": 1.0, "rho": 2.0}, "n_list": [8, 16, 32, 64], "seed": 7}"#,
    )
    .unwrap();
    let run = |out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_hardy-approx"))
            .args(["convergence", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out.join("convergence.csv")).unwrap(),
            std::fs::read(out.join("convergence.dat")).unwrap(),
        )
    };
    let first = run("a");
    let second = run("b");
    report(
        10,
        first == second && !first.0.is_empty(),
        &format!(
            "convergence.csv ({} bytes) and convergence.dat identical across runs",
            first.0.len()
        ),
    );
}
