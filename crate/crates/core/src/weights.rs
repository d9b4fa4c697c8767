//! Weight functions `w = exp(-Q)` on the real line.
//!
//! A [`Weight`] carries `Q`, its derivative and (optionally) its second
//! derivative as shared closures, so it is cheap to clone and safe to evaluate
//! from several threads. Derivatives return `None` where they do not exist,
//! which for the built-in families only happens at a kink at the origin.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PartialFn = Arc<dyn Fn(f64) -> Option<f64> + Send + Sync>;

/// Family tag with parameters. Also the serialized form of a weight in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// `w(x) = exp(-(beta |x|)^rho)`.
    Se { beta: f64, rho: f64 },
    /// `w(x) = exp(-beta exp(gamma |x|))`.
    De { beta: f64, gamma: f64 },
    /// `Q(x) = sum_k coeffs[k] x^(2k)`.
    EvenPolynomial { coeffs: Vec<f64> },
    /// Anything built through [`Weight::custom`]; not constructible from a config.
    #[serde(skip)]
    Custom { label: String },
}

impl WeightSpec {
    pub fn build(&self) -> Result<Weight> {
        match self {
            WeightSpec::Se { beta, rho } => weight_se(*beta, *rho),
            WeightSpec::De { beta, gamma } => weight_de(*beta, *gamma),
            WeightSpec::EvenPolynomial { coeffs } => weight_even_polynomial(coeffs),
            WeightSpec::Custom { label } => Err(Error::Param(format!(
                "custom weight '{label}' has no closed form to rebuild from"
            ))),
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Se { beta, rho } => write!(f, "SE(beta={beta}, rho={rho})"),
            WeightSpec::De { beta, gamma } => write!(f, "DE(beta={beta}, gamma={gamma})"),
            WeightSpec::EvenPolynomial { coeffs } => write!(f, "even-poly{coeffs:?}"),
            WeightSpec::Custom { label } => write!(f, "custom({label})"),
        }
    }
}

/// A weight `w = exp(-Q)` described through its potential `Q`.
#[derive(Clone)]
pub struct Weight {
    q: ScalarFn,
    q_prime: PartialFn,
    q_second: Option<PartialFn>,
    even: bool,
    analytic_attested: bool,
    spec: WeightSpec,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Weight")
            .field("spec", &self.spec)
            .field("even", &self.even)
            .field("has_q_second", &self.q_second.is_some())
            .finish()
    }
}

impl Weight {
    /// A caller-supplied weight. `analytic_attested` records the caller's claim
    /// that `w` extends analytically to the strip with the required integrability,
    /// which cannot be checked from real samples.
    pub fn custom<Q, D>(label: &str, q: Q, q_prime: D, even: bool, analytic_attested: bool) -> Self
    where
        Q: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> Option<f64> + Send + Sync + 'static,
    {
        Self {
            q: Arc::new(q),
            q_prime: Arc::new(q_prime),
            q_second: None,
            even,
            analytic_attested,
            spec: WeightSpec::Custom {
                label: label.to_string(),
            },
        }
    }

    #[must_use]
    pub fn with_q_second<S>(mut self, q_second: S) -> Self
    where
        S: Fn(f64) -> Option<f64> + Send + Sync + 'static,
    {
        self.q_second = Some(Arc::new(q_second));
        self
    }

    #[inline]
    pub fn q(&self, x: f64) -> f64 {
        (self.q)(x)
    }

    /// `Q'(x)`, or `None` at a kink.
    #[inline]
    pub fn q_prime(&self, x: f64) -> Option<f64> {
        (self.q_prime)(x)
    }

    /// Right-hand limit of `Q'` at `x`; equals `Q'(x)` wherever that exists.
    pub fn q_prime_right(&self, x: f64) -> f64 {
        self.q_prime(x)
            .or_else(|| self.q_prime(next_up(x)))
            .unwrap_or(f64::NAN)
    }

    /// Left-hand limit of `Q'` at `x`.
    pub fn q_prime_left(&self, x: f64) -> f64 {
        self.q_prime(x)
            .or_else(|| self.q_prime(-next_up(-x)))
            .unwrap_or(f64::NAN)
    }

    /// `Q''(x)` when an analytic second derivative was supplied and exists at `x`.
    #[inline]
    pub fn q_second(&self, x: f64) -> Option<f64> {
        self.q_second.as_ref().and_then(|s| s(x))
    }

    pub fn has_q_second(&self) -> bool {
        self.q_second.is_some()
    }

    /// `w(x) = exp(-Q(x))`.
    #[inline]
    pub fn w(&self, x: f64) -> f64 {
        (-self.q(x)).exp()
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    pub fn analytic_attested(&self) -> bool {
        self.analytic_attested
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    /// True when `Q'` is undefined at the origin.
    pub fn has_kink_at_origin(&self) -> bool {
        self.q_prime(0.0).is_none()
    }
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive, got {v}")))
    }
}

/// Single-exponential weight `exp(-(beta |x|)^rho)`, `beta > 0`, `rho >= 1`.
pub fn weight_se(beta: f64, rho: f64) -> Result<Weight> {
    check_positive("beta", beta)?;
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::Param(format!("rho must be at least 1, got {rho}")));
    }
    let q = move |x: f64| (beta * x.abs()).powf(rho);
    let q_prime = move |x: f64| {
        if x == 0.0 {
            return if rho > 1.0 { Some(0.0) } else { None };
        }
        Some(rho * beta * (beta * x.abs()).powf(rho - 1.0) * x.signum())
    };
    let q_second = move |x: f64| {
        if x == 0.0 {
            return if rho == 2.0 {
                Some(2.0 * beta * beta)
            } else if rho > 2.0 {
                Some(0.0)
            } else {
                None
            };
        }
        Some(rho * (rho - 1.0) * beta * beta * (beta * x.abs()).powf(rho - 2.0))
    };
    Ok(Weight {
        q: Arc::new(q),
        q_prime: Arc::new(q_prime),
        q_second: Some(Arc::new(q_second)),
        even: true,
        analytic_attested: true,
        spec: WeightSpec::Se { beta, rho },
    })
}

/// Double-exponential weight `exp(-beta exp(gamma |x|))`, `beta, gamma > 0`.
pub fn weight_de(beta: f64, gamma: f64) -> Result<Weight> {
    check_positive("beta", beta)?;
    check_positive("gamma", gamma)?;
    let q = move |x: f64| beta * (gamma * x.abs()).exp();
    let q_prime = move |x: f64| {
        if x == 0.0 {
            None
        } else {
            Some(beta * gamma * (gamma * x.abs()).exp() * x.signum())
        }
    };
    let q_second = move |x: f64| {
        if x == 0.0 {
            None
        } else {
            Some(beta * gamma * gamma * (gamma * x.abs()).exp())
        }
    };
    Ok(Weight {
        q: Arc::new(q),
        q_prime: Arc::new(q_prime),
        q_second: Some(Arc::new(q_second)),
        even: true,
        analytic_attested: true,
        spec: WeightSpec::De { beta, gamma },
    })
}

/// `Q(x) = sum_k coeffs[k] x^(2k)`. Admissibility is left to [`validate_weight`].
pub fn weight_even_polynomial(coeffs: &[f64]) -> Result<Weight> {
    if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Param(
            "polynomial weight needs finite coefficients".into(),
        ));
    }
    let c: Arc<[f64]> = coeffs.into();
    let (c0, c1, c2) = (c.clone(), c.clone(), c.clone());
    // Horner in y = x^2.
    let q = move |x: f64| {
        let y = x * x;
        c0.iter().rev().fold(0.0, |acc, &ck| acc * y + ck)
    };
    let q_prime = move |x: f64| {
        let y = x * x;
        let p = c1
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &ck)| acc * y + 2.0 * k as f64 * ck);
        Some(p * x)
    };
    let q_second = move |x: f64| {
        let y = x * x;
        let p = c2
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &ck)| {
                acc * y + (2 * k * (2 * k - 1)) as f64 * ck
            });
        Some(p)
    };
    Ok(Weight {
        q: Arc::new(q),
        q_prime: Arc::new(q_prime),
        q_second: Some(Arc::new(q_second)),
        even: true,
        analytic_attested: true,
        spec: WeightSpec::EvenPolynomial {
            coeffs: coeffs.to_vec(),
        },
    })
}

/// One admissibility check on the sampled grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst value of the checked quantity (its sign convention is check specific).
    pub worst: f64,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const CONVEXITY_SLACK: f64 = 1e-9;
const DERIVATIVE_RTOL: f64 = 1e-6;

/// Samples `Q` on an equispaced grid over `[-range, range]` and checks
/// nonnegativity, evenness (if claimed), convexity, consistency of `Q'` with
/// finite differences and growth towards the ends of the grid.
pub fn validate_weight(w: &Weight, range: f64, samples: usize) -> Result<ValidationReport> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::Param(format!("range must be positive, got {range}")));
    }
    if samples < 100 {
        return Err(Error::Param(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let h = 2.0 * range / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples).map(|i| -range + i as f64 * h).collect();
    let qs: Vec<f64> = xs.iter().map(|&x| w.q(x)).collect();
    let mut checks = Vec::new();
    let mut warnings = Vec::new();

    let (i_min, q_min) = argmin(&qs);
    checks.push(CheckOutcome {
        name: "nonnegative",
        passed: q_min >= 0.0,
        worst: q_min,
        at: xs[i_min],
    });

    if w.is_even() {
        let mut worst = 0.0f64;
        let mut at = 0.0;
        for (&x, &qx) in xs.iter().zip(&qs) {
            let dev = (qx - w.q(-x)).abs() / (1.0 + qx.abs());
            if dev > worst {
                worst = dev;
                at = x;
            }
        }
        checks.push(CheckOutcome {
            name: "even",
            passed: worst <= 1e-12,
            worst,
            at,
        });
    }

    let mut worst = f64::INFINITY;
    let mut at = 0.0;
    let mut violated = false;
    for i in 1..samples - 1 {
        let dd = (qs[i + 1] - 2.0 * qs[i] + qs[i - 1]) / (h * h);
        // Rounding in the three samples alone can move the quotient by this much.
        let noise =
            8.0 * f64::EPSILON * (qs[i + 1].abs() + qs[i].abs() + qs[i - 1].abs()) / (h * h);
        if dd < -(CONVEXITY_SLACK + noise) {
            violated = true;
        }
        if dd < worst {
            worst = dd;
            at = xs[i];
        }
    }
    checks.push(CheckOutcome {
        name: "convex",
        passed: !violated,
        worst,
        at,
    });
    if !violated && worst <= 1e-12 {
        warnings.push(format!(
            "Q is not strictly convex near x = {at} (second difference {worst:e}); accepted"
        ));
    }
    if w.has_kink_at_origin() {
        warnings.push(
            "Q' is undefined at 0; the kink is accepted and exempt from the derivative check"
                .into(),
        );
    }

    let mut worst = 0.0f64;
    let mut at = 0.0;
    for &x in &xs {
        let step = 1e-5 * x.abs().max(1.0);
        let kink_exempt = w.has_kink_at_origin() && x.abs() <= 2.0 * step;
        let Some(d) = w.q_prime(x) else { continue };
        if kink_exempt {
            continue;
        }
        let fd = (w.q(x + step) - w.q(x - step)) / (2.0 * step);
        let err = (d - fd).abs() / d.abs().max(1.0);
        if err > worst {
            worst = err;
            at = x;
        }
    }
    checks.push(CheckOutcome {
        name: "derivative",
        passed: worst <= DERIVATIVE_RTOL,
        worst,
        at,
    });

    let inner_max = xs
        .iter()
        .zip(&qs)
        .filter(|(x, _)| x.abs() <= 0.5 * range)
        .map(|(_, &q)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    let edge = qs[0].min(qs[samples - 1]);
    checks.push(CheckOutcome {
        name: "decay",
        passed: edge > inner_max,
        worst: edge - inner_max,
        at: if qs[0] <= qs[samples - 1] {
            xs[0]
        } else {
            xs[samples - 1]
        },
    });

    Ok(ValidationReport { checks, warnings })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |best, (i, q)| if q < best.1 { (i, q) } else { best },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se_values() {
        let w = weight_se(1.0, 2.0).unwrap();
        assert_eq!(w.q(3.0), 9.0);
        assert_eq!(w.q_prime(3.0), Some(6.0));
        assert_eq!(w.q_second(0.0), Some(2.0));
        let w = weight_se(2.0, 1.0).unwrap();
        assert_eq!(w.q(0.5), 1.0);
        assert_eq!(w.q_prime(0.5), Some(2.0));
        assert_eq!(w.q_prime(0.0), None);
        assert_eq!(w.q_prime_right(0.0), 2.0);
        assert_eq!(w.q_prime_left(0.0), -2.0);
        for x in [0.1, 1.7, 42.0] {
            assert_eq!(w.q(x), w.q(-x));
        }
    }

    #[test]
    fn de_values() {
        let w = weight_de(1.0, 1.0).unwrap();
        assert_eq!(w.q(0.0), 1.0);
        let w = weight_de(0.5, 2.0).unwrap();
        assert!((w.q(1.0) - 3.694_528_049_465_325).abs() < 1e-14);
        for x in [-2.0, -0.3, 0.7, 3.0] {
            let ratio = w.q_prime(x).unwrap() / w.q(x);
            assert!((ratio - 2.0 * f64::signum(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_parameters() {
        assert!(weight_se(0.0, 2.0).is_err());
        assert!(weight_se(1.0, 0.5).is_err());
        assert!(weight_de(-1.0, 1.0).is_err());
        assert!(weight_de(1.0, 0.0).is_err());
    }

    #[test]
    fn polynomial_weight() {
        let w = weight_even_polynomial(&[0.5, 1.0, 0.25]).unwrap();
        let x: f64 = 1.3;
        assert!((w.q(x) - (0.5 + x * x + 0.25 * x.powi(4))).abs() < 1e-14);
        assert!((w.q_prime(x).unwrap() - (2.0 * x + x.powi(3))).abs() < 1e-14);
        assert!((w.q_second(x).unwrap() - (2.0 + 3.0 * x * x)).abs() < 1e-14);
    }

    #[test]
    fn spec_round_trip() {
        let spec: WeightSpec =
            serde_json::from_str(r#"{"family":"se","beta":1.0,"rho":2.0}"#).unwrap();
        assert_eq!(
            spec,
            WeightSpec::Se {
                beta: 1.0,
                rho: 2.0
            }
        );
        assert!(serde_json::from_str::<WeightSpec>(
            r#"{"family":"se","beta":1.0,"rho":2.0,"x":1}"#
        )
        .is_err());
        let w = spec.build().unwrap();
        assert_eq!(w.q(2.0), 4.0);
    }

    #[test]
    fn validation_accepts_families() {
        let r = validate_weight(&weight_se(1.0, 2.0).unwrap(), 10.0, 1001).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = validate_weight(&weight_de(1.0, 1.0).unwrap(), 5.0, 1001).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = validate_weight(&weight_se(1.0, 1.0).unwrap(), 5.0, 1000).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn validation_rejects_concave() {
        let w = Weight::custom("neg-square", |x| -x * x, |x| Some(-2.0 * x), true, false);
        let r = validate_weight(&w, 3.0, 200).unwrap();
        assert!(!r.passed());
        assert!(!r.check("convex").unwrap().passed);
    }

    #[test]
    fn validation_catches_wrong_derivative() {
        let w = Weight::custom("bad-deriv", |x| x * x, |x| Some(3.0 * x), true, false);
        let r = validate_weight(&w, 3.0, 200).unwrap();
        assert!(!r.check("derivative").unwrap().passed);
    }

    #[test]
    fn alpha_quantity_increasing_for_linear_se() {
        let w = weight_se(1.0, 1.0).unwrap();
        let h = |x: f64| {
            let q = w.q(x);
            let d = w.q_prime(x).unwrap();
            (q * q + d * d) / q
        };
        let mut prev = h(1.0);
        for i in 1..200 {
            let v = h(1.0 + 0.05 * i as f64);
            assert!(v.is_finite() && v > prev);
            prev = v;
        }
    }
}
