//! Command-line front end.
//!
//! ```text
//! hardy-approx <design|bounds|convergence|compare|selfcheck> --config <path> [--out <dir>] [--jobs <k>]
//! ```
//!
//! Exit codes: 0 success, 1 self-check failure, 2 configuration error,
//! 3 numerical failure. `HARDY_APPROX_JOBS` overrides `--jobs`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{tune_spacing_against, BaselineReport};
use crate::bounds::{e_min_bracket, ErrorBracket};
use crate::energy::{minimize_nodes, EnergyReport, OptimizerOptions};
use crate::error::{Error, Result};
use crate::formula::{
    measure_error, test_function, worst_case_bound, ApproximationFormula, GridSpec,
};
use crate::kernel::StripParam;
use crate::numerics::Tolerance;
use crate::selfcheck::{run_all, SelfcheckInput};
use crate::weights::{Weight, WeightSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFCHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const JOBS_ENV: &str = "HARDY_APPROX_JOBS";

/// Gnuplot script for `convergence.dat`; a copy is written next to the data.
pub const GNUPLOT_SCRIPT: &str = include_str!("../plot/convergence.gp");

#[derive(Debug, Parser)]
#[command(
    name = "hardy-approx",
    version,
    about = "Energy-optimal interpolation nodes on weighted Hardy spaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize nodes for every n and write nodes_n<N>.csv and energy_n<N>.json.
    Design(CommonArgs),
    /// Write bounds.csv with the energy sandwich and error brackets.
    Bounds(CommonArgs),
    /// Write convergence.csv / convergence.dat with measured and certified errors.
    Convergence(CommonArgs),
    /// Write compare.csv against tuned equispaced nodes.
    Compare(CommonArgs),
    /// Run the randomized invariant suites.
    Selfcheck(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the n-sweep.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: f64,
    pub weight: WeightSpec,
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerance,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad(format!("d must be positive, got {}", self.d));
        }
        if self.n_list.is_empty() {
            return bad("n_list must not be empty".into());
        }
        if self.n_list.contains(&0) {
            return bad("every n must be at least 1".into());
        }
        if self.grid.points < 256 {
            return bad(format!(
                "grid.points must be at least 256, got {}",
                self.grid.points
            ));
        }
        self.grid
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.tolerances
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.weight
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn strip(&self) -> StripParam {
        StripParam::new(self.d).expect("validated")
    }

    pub fn build_weight(&self) -> Weight {
        self.weight.build().expect("validated")
    }

    fn require_min_n(&self, min: usize, what: &str) -> Result<()> {
        if let Some(n) = self.n_list.iter().find(|&&n| n < min) {
            return Err(Error::Config(format!(
                "{what} needs every n >= {min}, got {n}"
            )));
        }
        Ok(())
    }
}

/// Parses the arguments, runs the command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, cmd): (&CommonArgs, fn(&Context) -> Result<Outcome>) = match &cli.command {
        Command::Design(a) => (a, cmd_design),
        Command::Bounds(a) => (a, cmd_bounds),
        Command::Convergence(a) => (a, cmd_convergence),
        Command::Compare(a) => (a, cmd_compare),
        Command::Selfcheck(a) => (a, cmd_selfcheck),
    };
    let ctx = match Context::new(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match cmd(&ctx) {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::SelfcheckFailed) => EXIT_SELFCHECK,
        Ok(Outcome::NumericalFailure) => EXIT_NUMERICAL,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_NUMERICAL
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    SelfcheckFailed,
    NumericalFailure,
}

/// A validated config plus the resolved output directory and worker count.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

impl Context {
    pub fn new(args: &CommonArgs) -> Result<Self> {
        let config = RunConfig::load(&args.config)?;
        let jobs = match std::env::var(JOBS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| {
                        Error::Config(format!("{JOBS_ENV} must be a positive integer, got '{v}'"))
                    })?,
            ),
            Err(_) => args.jobs,
        };
        if jobs == Some(0) {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        let out = args
            .out
            .clone()
            .unwrap_or_else(|| config.output_dir.clone());
        Ok(Self { config, out, jobs })
    }

    pub fn from_config(config: RunConfig, out: PathBuf, jobs: Option<usize>) -> Self {
        Self { config, out, jobs }
    }

    /// Maps `f` over `n_list` on a bounded pool; results keep `n_list` order.
    fn sweep<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(k) = self.jobs {
            builder = builder.num_threads(k);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(|| self.config.n_list.par_iter().map(|&n| f(n)).collect()))
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }
}

/// Optimizer result that may have stopped early.
fn design_one(n: usize, w: &Weight, d: StripParam) -> Result<(EnergyReport, bool)> {
    match minimize_nodes(n, w, d, &OptimizerOptions::default()) {
        Ok(r) => Ok((r, true)),
        Err(Error::OptimizerNonConvergence(r)) => Ok((*r, false)),
        Err(e) => Err(e),
    }
}

/// Formats a CSV field with 17 significant digits. Non-finite values are
/// replaced by a finite sentinel and reported through the second component.
pub fn fmt_num(x: f64) -> (String, bool) {
    if x == 0.0 {
        ("0.0".to_string(), false)
    } else if x.is_finite() {
        (format!("{x:.16e}"), false)
    } else if x.is_nan() {
        ("0.0".to_string(), true)
    } else {
        (format!("{:.16e}", f64::MAX.copysign(x)), true)
    }
}

/// Builds a CSV row from an integer key and numeric fields, appending the clamp flag.
fn csv_row(n: usize, fields: &[f64]) -> String {
    let mut row = n.to_string();
    let mut clamped = false;
    for &v in fields {
        let (s, c) = fmt_num(v);
        clamped |= c;
        row.push(',');
        row.push_str(&s);
    }
    row.push(',');
    row.push_str(if clamped { "1" } else { "0" });
    row.push('\n');
    row
}

#[derive(Serialize)]
struct EnergyJson {
    n: usize,
    energy: f64,
    f_discrete: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    jittered: bool,
}

pub fn cmd_design(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let (w, d) = (cfg.build_weight(), cfg.strip());
    let results = ctx.sweep(|n| design_one(n, &w, d))?;
    let mut all_converged = true;
    for (n, res) in cfg.n_list.iter().zip(results) {
        let (rep, converged) = res?;
        all_converged &= converged;
        let mut csv = String::from("index,a_i\n");
        for (i, &a) in rep.nodes.nodes().iter().enumerate() {
            let _ = writeln!(csv, "{i},{}", fmt_num(a).0);
        }
        ctx.write(&format!("nodes_n{n}.csv"), &csv)?;
        let json = EnergyJson {
            n: *n,
            energy: rep.energy,
            f_discrete: rep.f_discrete,
            iterations: rep.iterations,
            grad_norm: rep.grad_norm,
            converged,
            jittered: rep.jittered,
        };
        let text = serde_json::to_string_pretty(&json).map_err(|e| Error::Config(e.to_string()))?;
        ctx.write(&format!("energy_n{n}.json"), &(text + "\n"))?;
        if !converged {
            eprintln!(
                "warning: optimizer did not converge for n = {n} (gradient {:e})",
                rep.grad_norm
            );
        }
    }
    Ok(if all_converged {
        Outcome::Ok
    } else {
        Outcome::NumericalFailure
    })
}

fn bracket_one(n: usize, w: &Weight, d: StripParam) -> Result<(EnergyReport, ErrorBracket)> {
    let (rep, converged) = design_one(n, w, d)?;
    if !converged {
        return Err(Error::OptimizerNonConvergence(Box::new(rep)));
    }
    let b = e_min_bracket(rep.f_discrete, w, d, n)?;
    Ok((rep, b))
}

pub fn cmd_bounds(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    cfg.require_min_n(2, "bounds")?;
    let (w, d) = (cfg.build_weight(), cfg.strip());
    let results = ctx.sweep(|n| bracket_one(n, &w, d))?;
    let mut csv = String::from(
        "n,F_D,fc_lower,fc_upper,alpha_n,thm2_lower,e_min_lower,e_min_upper,e_min_upper_explicit,clamped\n",
    );
    for (n, res) in cfg.n_list.iter().zip(results) {
        let (rep, b) = res?;
        csv.push_str(&csv_row(
            *n,
            &[
                rep.f_discrete,
                b.fc_over_n_lower,
                b.fc_over_n_upper,
                b.alpha_n,
                b.fc_over_n_lower_dual,
                b.e_min_lower,
                b.e_min_upper,
                b.e_min_upper_explicit,
            ],
        ));
    }
    ctx.write("bounds.csv", &csv)?;
    Ok(Outcome::Ok)
}

/// One row of the convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub measured_sup_error: f64,
    pub cert_bound: f64,
    pub e_min_upper: f64,
    /// `sqrt(2e^3) exp(-(n-1) Q(alpha_n) / (4n))`.
    pub thm2_rate_prediction: f64,
}

/// Measured error of the extremal test function `w B_n` (zeros at the nodes),
/// the certified bound, and the bracket entries for one `n`.
pub fn convergence_row(
    n: usize,
    w: &Weight,
    d: StripParam,
    grid: &GridSpec,
) -> Result<ConvergenceRow> {
    let (rep, b) = bracket_one(n, w, d)?;
    let wc = worst_case_bound(&rep.nodes, w)?;
    let f = test_function(w, d, rep.nodes.nodes());
    let form = ApproximationFormula::bind(rep.nodes.clone(), w.clone(), |x| f.eval(x));
    let g = GridSpec::new(grid.range.max(rep.nodes.max_abs() + 2.0), grid.points)?;
    let m = measure_error(|x| f.eval(x), &form, &g)?;
    Ok(ConvergenceRow {
        n,
        measured_sup_error: m.sup_error,
        cert_bound: wc.bound,
        e_min_upper: b.e_min_upper,
        thm2_rate_prediction: b.e_min_upper_explicit,
    })
}

/// Least-squares slope of `log(-log err)` against `log n`, skipping errors `>= 1`.
pub fn fitted_slope(rows: &[ConvergenceRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.measured_sup_error > 0.0 && r.measured_sup_error < 1.0)
        .map(|r| ((r.n as f64).ln(), (-r.measured_sup_error.ln()).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn cmd_convergence(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    cfg.require_min_n(2, "convergence")?;
    if cfg.n_list.len() < 4 {
        return Err(Error::Config(
            "convergence needs at least 4 values in n_list".into(),
        ));
    }
    let (w, d) = (cfg.build_weight(), cfg.strip());
    let rows = ctx
        .sweep(|n| convergence_row(n, &w, d, &cfg.grid))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut csv =
        String::from("n,measured_sup_error,cert_bound,e_min_upper,thm2_rate_prediction,clamped\n");
    let mut dat =
        String::from("# n measured_sup_error cert_bound e_min_upper thm2_rate_prediction\n");
    let mut violated = false;
    for r in &rows {
        let fields = [
            r.measured_sup_error,
            r.cert_bound,
            r.e_min_upper,
            r.thm2_rate_prediction,
        ];
        csv.push_str(&csv_row(r.n, &fields));
        let _ = write!(dat, "{}", r.n);
        for v in fields {
            let _ = write!(dat, " {}", fmt_num(v).0);
        }
        dat.push('\n');
        if r.measured_sup_error > r.cert_bound + 1e-12 {
            violated = true;
            eprintln!(
                "warning: n = {}: measured error exceeds the certified bound",
                r.n
            );
        }
    }
    let slope = fitted_slope(&rows);
    match slope {
        Some(s) => {
            let _ = writeln!(
                dat,
                "# slope log(-log measured_sup_error) vs log n: {}",
                fmt_num(s).0
            );
            println!("fitted slope of log(-log measured error) vs log n: {s:.6}");
        }
        None => println!("fitted slope unavailable"),
    }
    ctx.write("convergence.csv", &csv)?;
    ctx.write("convergence.dat", &dat)?;
    ctx.write("convergence.gp", GNUPLOT_SCRIPT)?;
    Ok(if violated {
        Outcome::NumericalFailure
    } else {
        Outcome::Ok
    })
}

fn compare_one(n: usize, w: &Weight, d: StripParam) -> Result<BaselineReport> {
    let (rep, converged) = design_one(n, w, d)?;
    if !converged {
        return Err(Error::OptimizerNonConvergence(Box::new(rep)));
    }
    tune_spacing_against(&rep, w, d)
}

pub fn cmd_compare(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    cfg.require_min_n(2, "compare")?;
    let (w, d) = (cfg.build_weight(), cfg.strip());
    let results = ctx.sweep(|n| compare_one(n, &w, d))?;
    let mut csv = String::from("n,h_star,bound_equispaced,bound_optimized,ratio,clamped\n");
    for (n, res) in cfg.n_list.iter().zip(results) {
        let r = res?;
        if !r.unimodal {
            eprintln!("warning: n = {n}: spacing landscape not unimodal, used grid search");
        }
        csv.push_str(&csv_row(
            *n,
            &[r.h_star, r.bound_equispaced, r.bound_optimized, r.ratio],
        ));
    }
    ctx.write("compare.csv", &csv)?;
    Ok(Outcome::Ok)
}

pub fn cmd_selfcheck(ctx: &Context) -> Result<Outcome> {
    let cfg = &ctx.config;
    let w = cfg.build_weight();
    let input = SelfcheckInput {
        weight: &w,
        d: cfg.strip(),
        n_list: &cfg.n_list,
        tol: cfg.tolerances,
        grid: cfg.grid,
        seed: cfg.seed,
    };
    let outcomes = run_all(&input);
    let mut ok = true;
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        ok &= o.passed;
    }
    Ok(if ok {
        Outcome::Ok
    } else {
        Outcome::SelfcheckFailed
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.0), ("0.0".to_string(), false));
        assert_eq!(fmt_num(-0.5).0, "-5.0000000000000000e-1");
        assert!(fmt_num(f64::INFINITY).1);
        let (s, _) = fmt_num(0.1 + 0.2);
        assert_eq!(s.parse::<f64>().unwrap(), 0.1 + 0.2);
    }

    #[test]
    fn config_validation() {
        let ok =
            r#"{"d": 1.0, "weight": {"family": "se", "beta": 1.0, "rho": 2.0}, "n_list": [4, 8]}"#;
        let cfg = RunConfig::from_json(ok).unwrap();
        assert_eq!(cfg.grid.points, 4096);
        for bad in [
            r#"{"d": 0.0, "weight": {"family": "se", "beta": 1.0, "rho": 2.0}, "n_list": [4]}"#,
            r#"{"d": 1.0, "weight": {"family": "se", "beta": 1.0, "rho": 2.0}, "n_list": []}"#,
            r#"{"d": 1.0, "weight": {"family": "se", "beta": 1.0, "rho": 0.5}, "n_list": [4]}"#,
            r#"{"d": 1.0, "weight": {"family": "se", "beta": 1.0, "rho": 2.0}, "n_list": [4], "grid": {"range": 5.0, "points": 100}}"#,
            r#"{"d": 1.0, "weight": {"family": "se", "beta": 1.0, "rho": 2.0}, "n_list": [4], "colour": 1}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(bad), Err(Error::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn slope_of_exact_power() {
        let rows: Vec<ConvergenceRow> = [8usize, 16, 32, 64]
            .iter()
            .map(|&n| ConvergenceRow {
                n,
                measured_sup_error: (-(n as f64).powf(0.5)).exp(),
                cert_bound: 1.0,
                e_min_upper: 1.0,
                thm2_rate_prediction: 1.0,
            })
            .collect();
        assert!((fitted_slope(&rows).unwrap() - 0.5).abs() < 1e-12);
    }
}
