//! Equispaced comparison nodes with the spacing tuned under the same
//! worst-case bound that optimized nodes are judged by.

use serde::Serialize;

use crate::energy::{minimize_nodes, EnergyReport, NodeSet, OptimizerOptions};
use crate::error::{Error, Result};
use crate::formula::worst_case_bound;
use crate::kernel::StripParam;
use crate::numerics::{minimize_scalar, Tolerance};
use crate::weights::Weight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineReport {
    pub n: usize,
    pub h_star: f64,
    pub bound_equispaced: f64,
    pub bound_optimized: f64,
    /// `bound_optimized / bound_equispaced`.
    pub ratio: f64,
    /// Whether the sampled `h` landscape was unimodal; if not, `h_star` comes from a grid search.
    pub unimodal: bool,
}

/// Centered nodes `k h - (n - 1) h / 2`, `k = 0..n`.
pub fn equispaced_nodes(n: usize, h: f64, d: StripParam) -> Result<NodeSet> {
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Param(format!("spacing must be positive, got {h}")));
    }
    let offset = (n - 1) as f64 * h / 2.0;
    NodeSet::new((0..n).map(|k| k as f64 * h - offset).collect(), d)
}

const H_MIN: f64 = 1e-3;
const LANDSCAPE_SAMPLES: usize = 50;
const FALLBACK_SAMPLES: usize = 1000;

/// `-log` of the worst-case bound for spacing `h`; larger is better.
fn min_potential(n: usize, h: f64, w: &Weight, d: StripParam) -> Result<f64> {
    Ok(worst_case_bound(&equispaced_nodes(n, h, d)?, w)?.min_potential)
}

/// Tunes the spacing of equispaced nodes and compares with energy-optimized nodes.
pub fn tune_spacing(n: usize, w: &Weight, d: StripParam) -> Result<BaselineReport> {
    let optimized = minimize_nodes(n, w, d, &OptimizerOptions::default())?;
    tune_spacing_against(&optimized, w, d)
}

/// As [`tune_spacing`], reusing an existing optimizer run.
pub fn tune_spacing_against(
    optimized: &EnergyReport,
    w: &Weight,
    d: StripParam,
) -> Result<BaselineReport> {
    let n = optimized.nodes.len();
    if n < 2 {
        return Err(Error::Param("spacing tuning needs n >= 2".into()));
    }
    let reach = if w.is_even() {
        crate::bounds::alpha_n(w, d, n).unwrap_or_else(|_| (n as f64).sqrt())
    } else {
        (n as f64).sqrt()
    };
    let h_max = (8.0 * reach / (n - 1) as f64).max(2.0 * H_MIN);

    let sample = |count: usize| -> Result<Vec<(f64, f64)>> {
        (0..count)
            .map(|i| {
                let h = H_MIN + (h_max - H_MIN) * i as f64 / (count - 1) as f64;
                Ok((h, min_potential(n, h, w, d)?))
            })
            .collect()
    };
    let landscape = sample(LANDSCAPE_SAMPLES)?;
    let unimodal = is_unimodal(&landscape.iter().map(|p| -p.1).collect::<Vec<_>>());

    let h_star = if unimodal {
        let tol = Tolerance::default().with_abs(1e-10 * h_max);
        // Errors inside the objective surface as +inf and are never chosen.
        let m = minimize_scalar(
            |h| {
                min_potential(n, h, w, d)
                    .map(|v| -v)
                    .unwrap_or(f64::INFINITY)
            },
            H_MIN,
            h_max,
            &tol,
        );
        m.x
    } else {
        sample(FALLBACK_SAMPLES)?
            .into_iter()
            .fold(
                (H_MIN, f64::NEG_INFINITY),
                |b, p| if p.1 > b.1 { p } else { b },
            )
            .0
    };

    let bound_equispaced = worst_case_bound(&equispaced_nodes(n, h_star, d)?, w)?.bound;
    let bound_optimized = worst_case_bound(&optimized.nodes, w)?.bound;
    Ok(BaselineReport {
        n,
        h_star,
        bound_equispaced,
        bound_optimized,
        ratio: bound_optimized / bound_equispaced,
        unimodal,
    })
}

/// Non-increasing then non-decreasing, up to relative noise.
fn is_unimodal(v: &[f64]) -> bool {
    let noise = |a: f64, b: f64| 1e-12 * (1.0 + a.abs().max(b.abs()));
    let mut rising = false;
    for p in v.windows(2) {
        if p[1] > p[0] + noise(p[0], p[1]) {
            rising = true;
        } else if rising && p[1] < p[0] - noise(p[0], p[1]) {
            return false;
        }
    }
    true
}
