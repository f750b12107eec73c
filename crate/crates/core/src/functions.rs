//! Scalar building blocks: completely monotone functions, positive Bernstein
//! functions, and the unilateral kernels used by tail-up/tail-down models.

use std::fmt;

use thiserror::Error;

/// Finite-difference tolerance for the alternating-sign test.
pub const CM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("{family}: parameter constraint violated ({constraint})")]
    OutOfDomainParam { family: &'static str, constraint: &'static str },
    #[error("{family}: argument {t} outside the domain")]
    OutOfDomainArg { family: &'static str, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionClass {
    CompletelyMonotone,
    Bernstein,
}

/// Parametric families of completely monotone (`Cm*`) and positive Bernstein
/// (`Bf*`) functions on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFamily {
    /// `exp(-c t^ν)`, `c > 0`, `0 < ν ≤ 1`.
    CmPowExp { c: f64, nu: f64 },
    /// `exp(c t^ν)`, `c > 0`, `ν < 0`. Unbounded at the origin.
    CmNegPow { c: f64, nu: f64 },
    /// `(2 / (exp(c√t) + exp(-c√t)))^ν`, `c > 0`, `ν > 0`.
    CmSech { c: f64, nu: f64 },
    /// `(1 + c t^γ)^(-ν)`, `c > 0`, `ν > 0`, `0 < γ ≤ 1`.
    CmCauchy { c: f64, nu: f64, gamma: f64 },
    /// `(κ t^λ + 1)^β`, `κ > 0`, `0 ≤ β ≤ 1`, `0 < λ ≤ 1`.
    BfPowerPlusOne { kappa: f64, beta: f64, lambda: f64 },
    /// `log(κ t^λ + β) / log β`, `κ > 0`, `β > 1`, `0 < λ ≤ 1`.
    BfLogRatio { kappa: f64, beta: f64, lambda: f64 },
    /// `t^λ + β`, `0 < λ ≤ 1`, `β > 0`.
    BfPowerPlusBeta { lambda: f64, beta: f64 },
    /// `β - exp(-κ t)`, `κ > 0`, `β > 1`.
    BfExpSaturate { kappa: f64, beta: f64 },
}

fn require(ok: bool, family: &'static str, constraint: &'static str) -> Result<(), FunctionError> {
    if ok {
        Ok(())
    } else {
        Err(FunctionError::OutOfDomainParam { family, constraint })
    }
}

/// `ln(sech(x))` without overflow.
pub(crate) fn ln_sech(x: f64) -> f64 {
    let x = x.abs();
    std::f64::consts::LN_2 - x - (-2.0 * x).exp().ln_1p()
}

impl ScalarFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ScalarFamily::CmPowExp { .. } => "powexp",
            ScalarFamily::CmNegPow { .. } => "negpow",
            ScalarFamily::CmSech { .. } => "sech",
            ScalarFamily::CmCauchy { .. } => "cauchy",
            ScalarFamily::BfPowerPlusOne { .. } => "powerplusone",
            ScalarFamily::BfLogRatio { .. } => "logratio",
            ScalarFamily::BfPowerPlusBeta { .. } => "powerplusbeta",
            ScalarFamily::BfExpSaturate { .. } => "expsaturate",
        }
    }

    pub fn class(&self) -> FunctionClass {
        match self {
            ScalarFamily::CmPowExp { .. }
            | ScalarFamily::CmNegPow { .. }
            | ScalarFamily::CmSech { .. }
            | ScalarFamily::CmCauchy { .. } => FunctionClass::CompletelyMonotone,
            _ => FunctionClass::Bernstein,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ScalarFamily::CmPowExp { .. } | ScalarFamily::CmNegPow { .. } | ScalarFamily::CmSech { .. } => &["c", "nu"],
            ScalarFamily::CmCauchy { .. } => &["c", "nu", "gamma"],
            ScalarFamily::BfPowerPlusOne { .. } | ScalarFamily::BfLogRatio { .. } => &["kappa", "beta", "lambda"],
            ScalarFamily::BfPowerPlusBeta { .. } => &["lambda", "beta"],
            ScalarFamily::BfExpSaturate { .. } => &["kappa", "beta"],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            ScalarFamily::CmPowExp { c, nu } | ScalarFamily::CmNegPow { c, nu } | ScalarFamily::CmSech { c, nu } => {
                vec![c, nu]
            }
            ScalarFamily::CmCauchy { c, nu, gamma } => vec![c, nu, gamma],
            ScalarFamily::BfPowerPlusOne { kappa, beta, lambda } | ScalarFamily::BfLogRatio { kappa, beta, lambda } => {
                vec![kappa, beta, lambda]
            }
            ScalarFamily::BfPowerPlusBeta { lambda, beta } => vec![lambda, beta],
            ScalarFamily::BfExpSaturate { kappa, beta } => vec![kappa, beta],
        }
    }

    /// Same family with new parameter values, in `param_names` order.
    pub fn with_params(&self, p: &[f64]) -> Self {
        assert_eq!(p.len(), self.param_names().len());
        match self {
            ScalarFamily::CmPowExp { .. } => ScalarFamily::CmPowExp { c: p[0], nu: p[1] },
            ScalarFamily::CmNegPow { .. } => ScalarFamily::CmNegPow { c: p[0], nu: p[1] },
            ScalarFamily::CmSech { .. } => ScalarFamily::CmSech { c: p[0], nu: p[1] },
            ScalarFamily::CmCauchy { .. } => ScalarFamily::CmCauchy { c: p[0], nu: p[1], gamma: p[2] },
            ScalarFamily::BfPowerPlusOne { .. } => ScalarFamily::BfPowerPlusOne { kappa: p[0], beta: p[1], lambda: p[2] },
            ScalarFamily::BfLogRatio { .. } => ScalarFamily::BfLogRatio { kappa: p[0], beta: p[1], lambda: p[2] },
            ScalarFamily::BfPowerPlusBeta { .. } => ScalarFamily::BfPowerPlusBeta { lambda: p[0], beta: p[1] },
            ScalarFamily::BfExpSaturate { .. } => ScalarFamily::BfExpSaturate { kappa: p[0], beta: p[1] },
        }
    }

    /// Box constraints `(lower, upper, lower_inclusive, upper_inclusive)` per parameter.
    pub fn bounds(&self) -> Vec<(f64, f64, bool, bool)> {
        const INF: f64 = f64::INFINITY;
        match self {
            ScalarFamily::CmPowExp { .. } => vec![(0.0, INF, false, false), (0.0, 1.0, false, true)],
            ScalarFamily::CmNegPow { .. } => vec![(0.0, INF, false, false), (-INF, 0.0, false, false)],
            ScalarFamily::CmSech { .. } => vec![(0.0, INF, false, false), (0.0, INF, false, false)],
            ScalarFamily::CmCauchy { .. } => {
                vec![(0.0, INF, false, false), (0.0, INF, false, false), (0.0, 1.0, false, true)]
            }
            ScalarFamily::BfPowerPlusOne { .. } => {
                vec![(0.0, INF, false, false), (0.0, 1.0, true, true), (0.0, 1.0, false, true)]
            }
            ScalarFamily::BfLogRatio { .. } => {
                vec![(0.0, INF, false, false), (1.0, INF, false, false), (0.0, 1.0, false, true)]
            }
            ScalarFamily::BfPowerPlusBeta { .. } => vec![(0.0, 1.0, false, true), (0.0, INF, false, false)],
            ScalarFamily::BfExpSaturate { .. } => vec![(0.0, INF, false, false), (1.0, INF, false, false)],
        }
    }

    pub fn validate(&self) -> Result<(), FunctionError> {
        match *self {
            ScalarFamily::CmPowExp { c, nu } => {
                require(c > 0.0, "powexp", "c > 0")?;
                require(nu > 0.0 && nu <= 1.0, "powexp", "0 < nu <= 1")
            }
            ScalarFamily::CmNegPow { c, nu } => {
                require(c > 0.0, "negpow", "c > 0")?;
                require(nu < 0.0, "negpow", "nu < 0")
            }
            ScalarFamily::CmSech { c, nu } => {
                require(c > 0.0, "sech", "c > 0")?;
                require(nu > 0.0, "sech", "nu > 0")
            }
            ScalarFamily::CmCauchy { c, nu, gamma } => {
                require(c > 0.0, "cauchy", "c > 0")?;
                require(nu > 0.0, "cauchy", "nu > 0")?;
                require(gamma > 0.0 && gamma <= 1.0, "cauchy", "0 < gamma <= 1")
            }
            ScalarFamily::BfPowerPlusOne { kappa, beta, lambda } => {
                require(kappa > 0.0, "powerplusone", "kappa > 0")?;
                require((0.0..=1.0).contains(&beta), "powerplusone", "0 <= beta <= 1")?;
                require(lambda > 0.0 && lambda <= 1.0, "powerplusone", "0 < lambda <= 1")
            }
            ScalarFamily::BfLogRatio { kappa, beta, lambda } => {
                require(kappa > 0.0, "logratio", "kappa > 0")?;
                require(beta > 1.0, "logratio", "beta > 1")?;
                require(lambda > 0.0 && lambda <= 1.0, "logratio", "0 < lambda <= 1")
            }
            ScalarFamily::BfPowerPlusBeta { lambda, beta } => {
                require(lambda > 0.0 && lambda <= 1.0, "powerplusbeta", "0 < lambda <= 1")?;
                require(beta > 0.0, "powerplusbeta", "beta > 0")
            }
            ScalarFamily::BfExpSaturate { kappa, beta } => {
                require(kappa > 0.0, "expsaturate", "kappa > 0")?;
                require(beta > 1.0, "expsaturate", "beta > 1")
            }
        }
    }

    /// Evaluate at `t >= 0`, checking parameters and argument.
    pub fn eval(&self, t: f64) -> Result<f64, FunctionError> {
        self.validate()?;
        if !(t >= 0.0) || (matches!(self, ScalarFamily::CmNegPow { .. }) && t == 0.0) {
            return Err(FunctionError::OutOfDomainArg { family: self.name(), t });
        }
        Ok(self.value(t))
    }

    /// Formula value without any checks.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ScalarFamily::CmPowExp { c, nu } => (-c * t.powf(nu)).exp(),
            ScalarFamily::CmNegPow { c, nu } => (c * t.powf(nu)).exp(),
            ScalarFamily::CmSech { c, nu } => (nu * ln_sech(c * t.sqrt())).exp(),
            ScalarFamily::CmCauchy { c, nu, gamma } => (1.0 + c * t.powf(gamma)).powf(-nu),
            ScalarFamily::BfPowerPlusOne { kappa, beta, lambda } => (kappa * t.powf(lambda) + 1.0).powf(beta),
            ScalarFamily::BfLogRatio { kappa, beta, lambda } => (kappa * t.powf(lambda) + beta).ln() / beta.ln(),
            ScalarFamily::BfPowerPlusBeta { lambda, beta } => t.powf(lambda) + beta,
            ScalarFamily::BfExpSaturate { kappa, beta } => beta - (-kappa * t).exp(),
        }
    }

    /// Analytic first derivative on `(0, ∞)`.
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            ScalarFamily::CmPowExp { c, nu } => -c * nu * t.powf(nu - 1.0) * self.value(t),
            ScalarFamily::CmNegPow { c, nu } => c * nu * t.powf(nu - 1.0) * self.value(t),
            ScalarFamily::CmSech { c, nu } => {
                let x = c * t.sqrt();
                -nu * x.tanh() * self.value(t) * c / (2.0 * t.sqrt())
            }
            ScalarFamily::CmCauchy { c, nu, gamma } => {
                -nu * (1.0 + c * t.powf(gamma)).powf(-nu - 1.0) * c * gamma * t.powf(gamma - 1.0)
            }
            ScalarFamily::BfPowerPlusOne { kappa, beta, lambda } => {
                beta * (kappa * t.powf(lambda) + 1.0).powf(beta - 1.0) * kappa * lambda * t.powf(lambda - 1.0)
            }
            ScalarFamily::BfLogRatio { kappa, beta, lambda } => {
                kappa * lambda * t.powf(lambda - 1.0) / ((kappa * t.powf(lambda) + beta) * beta.ln())
            }
            ScalarFamily::BfPowerPlusBeta { lambda, .. } => lambda * t.powf(lambda - 1.0),
            ScalarFamily::BfExpSaturate { kappa, .. } => kappa * (-kappa * t).exp(),
        }
    }
}

impl fmt::Display for ScalarFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name())?;
        for (i, (n, v)) in self.param_names().iter().zip(self.params()).enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}={v}")?;
        }
        write!(f, ")")
    }
}

/// Sum or product of completely monotone families; both operations preserve
/// complete monotonicity.
#[derive(Debug, Clone, PartialEq)]
pub enum CompositeCm {
    Sum(Vec<ScalarFamily>),
    Product(Vec<ScalarFamily>),
}

impl CompositeCm {
    pub fn validate(&self) -> Result<(), FunctionError> {
        let terms = match self {
            CompositeCm::Sum(t) | CompositeCm::Product(t) => t,
        };
        for term in terms {
            term.validate()?;
            require(term.class() == FunctionClass::CompletelyMonotone, "composite", "terms are completely monotone")?;
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            CompositeCm::Sum(terms) => terms.iter().map(|f| f.value(t)).sum(),
            CompositeCm::Product(terms) => terms.iter().map(|f| f.value(t)).product(),
        }
    }
}

/// Unilateral kernels for moving-average constructions on streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `θ1 exp(-x / θ2)`.
    Exponential { theta1: f64, theta2: f64 },
    /// `½ / (1 + x / θ1)`.
    Mariah { theta1: f64 },
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Exponential { .. } => "exponential",
            Kernel::Mariah { .. } => "mariah",
        }
    }

    pub fn validate(&self) -> Result<(), FunctionError> {
        match *self {
            Kernel::Exponential { theta1, theta2 } => {
                require(theta1 > 0.0, "exponential kernel", "theta1 > 0")?;
                require(theta2 > 0.0, "exponential kernel", "theta2 > 0")
            }
            Kernel::Mariah { theta1 } => require(theta1 > 0.0, "mariah kernel", "theta1 > 0"),
        }
    }

    /// Kernel value; zero for negative arguments.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Exponential { theta1, theta2 } => theta1 * (-x / theta2).exp(),
            Kernel::Mariah { theta1 } => 0.5 / (1.0 + x / theta1),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Kernel::Exponential { .. } => &["theta1", "theta2"],
            Kernel::Mariah { .. } => &["theta1"],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Kernel::Exponential { theta1, theta2 } => vec![theta1, theta2],
            Kernel::Mariah { theta1 } => vec![theta1],
        }
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        match self {
            Kernel::Exponential { .. } => Kernel::Exponential { theta1: p[0], theta2: p[1] },
            Kernel::Mariah { .. } => Kernel::Mariah { theta1: p[0] },
        }
    }
}

/// Outcome of a finite-difference complete-monotonicity test at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmPoint {
    pub t: f64,
    pub order: usize,
    /// Estimate of `(-1)^order f^(order)(t)`.
    pub signed_derivative: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmReport {
    pub points: Vec<CmPoint>,
}

impl CmReport {
    pub fn pass(&self) -> bool {
        self.points.iter().all(|p| p.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CmPoint> {
        self.points.iter().filter(|p| !p.pass)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Central finite-difference estimate of the `order`-th derivative with step `h`.
pub fn central_derivative<F: Fn(f64) -> f64>(f: &F, t: f64, order: usize, h: f64) -> f64 {
    if order == 0 {
        return f(t);
    }
    let half = order as f64 / 2.0;
    let mut acc = 0.0;
    for k in 0..=order {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binomial(order, k) * f(t + (half - k as f64) * h);
    }
    acc / h.powi(order as i32)
}

/// Check `(-1)^j f^(j)(t) >= -1e-6` for `j = 0..=order` at every grid point,
/// using central differences with step `1e-4 · max(t, 1)`.
pub fn check_complete_monotonicity<F: Fn(f64) -> f64>(f: F, grid: &[f64], order: usize) -> CmReport {
    assert!(order <= 4, "finite differences above order 4 are too noisy");
    let mut points = Vec::with_capacity(grid.len() * (order + 1));
    for &t in grid {
        let h = 1e-4 * t.max(1.0);
        for j in 0..=order {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let v = sign * central_derivative(&f, t, j, h);
            points.push(CmPoint { t, order: j, signed_derivative: v, pass: v >= -CM_TOLERANCE });
        }
    }
    CmReport { points }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
