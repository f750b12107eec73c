//! Space-time covariance models on networks.

mod assembly;
mod closed_form;
mod mixture;

use std::fmt;

use thiserror::Error;

use crate::functions::{FunctionClass, FunctionError, Kernel, ScalarFamily};
use crate::network::{FlowRelation, NetworkError, SiteGeometry};
use crate::quadrature::QuadratureError;

pub use assembly::{build_covariance_matrix, cross_covariance, point_covariance_matrix, CovarianceLayout};
pub use closed_form::*;
pub use mixture::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{model}: parameter constraint violated ({constraint})")]
    InvalidParams { model: &'static str, constraint: String },
    #[error("delta = {delta} is below 2*ceil(m/2)+1 = {bound} for a tree with m = {leaves} leaves")]
    DeltaTooSmallForTree { delta: f64, bound: f64, leaves: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("{0} needs flow relations from a directed tree")]
    RequiresDirectedTree(&'static str),
    #[error("{0} is only valid on trees")]
    RequiresTree(&'static str),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadratureError),
    #[error("mixture integral diverges")]
    Divergent,
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Stationary temporal covariance with unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalCov {
    /// `exp(-u / scale)`
    Exponential { scale: f64 },
    /// `cos(u / scale)`
    Cosine { scale: f64 },
    /// `exp(-(u / scale)²)`
    Gaussian { scale: f64 },
}

impl TemporalCov {
    pub fn name(&self) -> &'static str {
        match self {
            TemporalCov::Exponential { .. } => "exp",
            TemporalCov::Cosine { .. } => "cosine",
            TemporalCov::Gaussian { .. } => "gauss",
        }
    }

    pub fn from_name(name: &str, scale: f64) -> Option<Self> {
        match name {
            "exp" => Some(TemporalCov::Exponential { scale }),
            "cosine" => Some(TemporalCov::Cosine { scale }),
            "gauss" => Some(TemporalCov::Gaussian { scale }),
            _ => None,
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            TemporalCov::Exponential { scale } | TemporalCov::Cosine { scale } | TemporalCov::Gaussian { scale } => scale,
        }
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        match self {
            TemporalCov::Exponential { .. } => TemporalCov::Exponential { scale },
            TemporalCov::Cosine { .. } => TemporalCov::Cosine { scale },
            TemporalCov::Gaussian { .. } => TemporalCov::Gaussian { scale },
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            TemporalCov::Exponential { scale } => (-u / scale).exp(),
            TemporalCov::Cosine { scale } => (u / scale).cos(),
            TemporalCov::Gaussian { scale } => (-(u / scale).powi(2)).exp(),
        }
    }
}

/// The three convex-cone combinations of tail-up (TU), tail-down (TD) and two
/// temporal covariances (T1, T2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeForm {
    /// `TD·T1 + TU + T2`
    DownProductSum,
    /// `TU·T1 + TD + T2`
    UpProductSum,
    /// `TU·T1 + TD·T2`
    DoubleProduct,
}

impl ConeForm {
    pub fn name(&self) -> &'static str {
        match self {
            ConeForm::DownProductSum => "down-sum",
            ConeForm::UpProductSum => "up-sum",
            ConeForm::DoubleProduct => "double",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "down-sum" => Some(ConeForm::DownProductSum),
            "up-sum" => Some(ConeForm::UpProductSum),
            "double" => Some(ConeForm::DoubleProduct),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Model1 { c: f64, nu: f64, kappa: f64, beta: f64, tau: f64, b: f64 },
    Model2 { a: f64, alpha: f64, b: f64, c: f64, nu: f64 },
    Model3 { alpha: f64, beta: f64, nu: f64, delta: f64 },
    Model4 { theta1: f64, theta2: f64, theta3: f64, theta4: f64 },
    Model5 { theta1: f64, theta2: f64, theta3: f64, theta4: f64 },
    /// Model 1 with the interaction parameter fixed at zero.
    Separable { c: f64, nu: f64, kappa: f64, tau: f64, b: f64 },
    /// Purely spatial tail-up, constant in time.
    TailUp(Kernel),
    /// Purely spatial tail-down, constant in time.
    TailDown(Kernel),
    Gneiting { phi: ScalarFamily, psi: ScalarFamily, alpha: f64, a: f64, b: f64 },
    ProductSum { form: ConeForm, up: Kernel, down: Kernel, t1: TemporalCov, t2: TemporalCov },
    /// Independent records; the linear-regression baseline.
    WhiteNoise,
}

/// Where a parameter may live; drives the optimiser's unconstrained transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamDomain {
    Positive,
    NonNegative,
    /// Closed or half-open interval; transforms stay strictly inside.
    Interval { lo: f64, hi: f64 },
    AtLeast(f64),
    Below(f64),
    /// At least half of the parameter at the given index.
    AtLeastHalfOf(usize),
}

impl ParamDomain {
    fn from_bounds((lo, hi, _, _): (f64, f64, bool, bool)) -> Self {
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => ParamDomain::Interval { lo, hi },
            (true, false) if lo == 0.0 => ParamDomain::Positive,
            (true, false) => ParamDomain::AtLeast(lo),
            (false, true) => ParamDomain::Below(hi),
            (false, false) => ParamDomain::AtLeast(f64::NEG_INFINITY),
        }
    }
}

/// Smallest admissible `delta` for Model 3 on a tree with `leaves` leaves.
pub fn delta_bound(leaves: usize) -> f64 {
    (2 * leaves.div_ceil(2) + 1) as f64
}

fn check(ok: bool, model: &'static str, constraint: &str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParams { model, constraint: constraint.to_string() })
    }
}

fn in_unit(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Model1 { .. } => "model1",
            ModelKind::Model2 { .. } => "model2",
            ModelKind::Model3 { .. } => "model3",
            ModelKind::Model4 { .. } => "model4",
            ModelKind::Model5 { .. } => "model5",
            ModelKind::Separable { .. } => "separable",
            ModelKind::TailUp(_) => "tailup",
            ModelKind::TailDown(_) => "taildown",
            ModelKind::Gneiting { .. } => "gneiting",
            ModelKind::ProductSum { .. } => "productsum",
            ModelKind::WhiteNoise => "iid",
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let s = |names: &[&str]| names.iter().map(|n| n.to_string()).collect::<Vec<_>>();
        let prefixed = |prefix: &str, names: &[&str]| names.iter().map(|n| format!("{prefix}.{n}")).collect::<Vec<_>>();
        match self {
            ModelKind::Model1 { .. } => s(&["c", "nu", "kappa", "beta", "tau", "b"]),
            ModelKind::Model2 { .. } => s(&["a", "alpha", "b", "c", "nu"]),
            ModelKind::Model3 { .. } => s(&["alpha", "beta", "nu", "delta"]),
            ModelKind::Model4 { .. } | ModelKind::Model5 { .. } => s(&["theta1", "theta2", "theta3", "theta4"]),
            ModelKind::Separable { .. } => s(&["c", "nu", "kappa", "tau", "b"]),
            ModelKind::TailUp(k) | ModelKind::TailDown(k) => s(k.param_names()),
            ModelKind::Gneiting { phi, psi, .. } => {
                let mut v = prefixed("phi", phi.param_names());
                v.extend(prefixed("psi", psi.param_names()));
                v.extend(s(&["alpha", "a", "b"]));
                v
            }
            ModelKind::ProductSum { up, down, .. } => {
                let mut v = prefixed("up", up.param_names());
                v.extend(prefixed("down", down.param_names()));
                v.extend(s(&["t1.scale", "t2.scale"]));
                v
            }
            ModelKind::WhiteNoise => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            &ModelKind::Model1 { c, nu, kappa, beta, tau, b } => vec![c, nu, kappa, beta, tau, b],
            &ModelKind::Model2 { a, alpha, b, c, nu } => vec![a, alpha, b, c, nu],
            &ModelKind::Model3 { alpha, beta, nu, delta } => vec![alpha, beta, nu, delta],
            &ModelKind::Model4 { theta1, theta2, theta3, theta4 } | &ModelKind::Model5 { theta1, theta2, theta3, theta4 } => {
                vec![theta1, theta2, theta3, theta4]
            }
            &ModelKind::Separable { c, nu, kappa, tau, b } => vec![c, nu, kappa, tau, b],
            ModelKind::TailUp(k) | ModelKind::TailDown(k) => k.params(),
            ModelKind::Gneiting { phi, psi, alpha, a, b } => {
                let mut v = phi.params();
                v.extend(psi.params());
                v.extend([*alpha, *a, *b]);
                v
            }
            ModelKind::ProductSum { up, down, t1, t2, .. } => {
                let mut v = up.params();
                v.extend(down.params());
                v.extend([t1.scale(), t2.scale()]);
                v
            }
            ModelKind::WhiteNoise => Vec::new(),
        }
    }

    /// Same variant with new values in `param_names` order.
    pub fn with_params(&self, p: &[f64]) -> Self {
        assert_eq!(p.len(), self.param_names().len(), "parameter count for {}", self.name());
        match self {
            ModelKind::Model1 { .. } => ModelKind::Model1 { c: p[0], nu: p[1], kappa: p[2], beta: p[3], tau: p[4], b: p[5] },
            ModelKind::Model2 { .. } => ModelKind::Model2 { a: p[0], alpha: p[1], b: p[2], c: p[3], nu: p[4] },
            ModelKind::Model3 { .. } => ModelKind::Model3 { alpha: p[0], beta: p[1], nu: p[2], delta: p[3] },
            ModelKind::Model4 { .. } => ModelKind::Model4 { theta1: p[0], theta2: p[1], theta3: p[2], theta4: p[3] },
            ModelKind::Model5 { .. } => ModelKind::Model5 { theta1: p[0], theta2: p[1], theta3: p[2], theta4: p[3] },
            ModelKind::Separable { .. } => ModelKind::Separable { c: p[0], nu: p[1], kappa: p[2], tau: p[3], b: p[4] },
            ModelKind::TailUp(k) => ModelKind::TailUp(k.with_params(p)),
            ModelKind::TailDown(k) => ModelKind::TailDown(k.with_params(p)),
            ModelKind::Gneiting { phi, psi, .. } => {
                let np = phi.param_names().len();
                let nq = psi.param_names().len();
                ModelKind::Gneiting {
                    phi: phi.with_params(&p[..np]),
                    psi: psi.with_params(&p[np..np + nq]),
                    alpha: p[np + nq],
                    a: p[np + nq + 1],
                    b: p[np + nq + 2],
                }
            }
            ModelKind::ProductSum { form, up, down, t1, t2 } => {
                let nu = up.param_names().len();
                let nd = down.param_names().len();
                ModelKind::ProductSum {
                    form: *form,
                    up: up.with_params(&p[..nu]),
                    down: down.with_params(&p[nu..nu + nd]),
                    t1: t1.with_scale(p[nu + nd]),
                    t2: t2.with_scale(p[nu + nd + 1]),
                }
            }
            ModelKind::WhiteNoise => ModelKind::WhiteNoise,
        }
    }

    /// Domains in `param_names` order. `leaves` tightens Model 3's `delta`.
    pub fn domains(&self, leaves: Option<usize>) -> Vec<ParamDomain> {
        use ParamDomain::*;
        let unit = Interval { lo: 0.0, hi: 1.0 };
        match self {
            ModelKind::Model1 { .. } => vec![Positive, unit, Positive, unit, AtLeastHalfOf(3), unit],
            ModelKind::Model2 { .. } => vec![unit, AtLeast(0.5), unit, Positive, Positive],
            ModelKind::Model3 { .. } => {
                let delta = leaves.map(|m| AtLeast(delta_bound(m))).unwrap_or(Positive);
                vec![Positive, Positive, unit, delta]
            }
            ModelKind::Model4 { .. } => vec![Positive; 4],
            ModelKind::Model5 { .. } => vec![Positive, Positive, Interval { lo: 0.0, hi: 2.0 }, Positive],
            ModelKind::Separable { .. } => vec![Positive, unit, Positive, NonNegative, unit],
            ModelKind::TailUp(k) | ModelKind::TailDown(k) => vec![Positive; k.param_names().len()],
            ModelKind::Gneiting { phi, psi, .. } => {
                let mut v: Vec<_> = phi.bounds().into_iter().map(ParamDomain::from_bounds).collect();
                v.extend(psi.bounds().into_iter().map(ParamDomain::from_bounds));
                v.extend([AtLeast(0.5), unit, unit]);
                v
            }
            ModelKind::ProductSum { up, down, .. } => vec![Positive; up.param_names().len() + down.param_names().len() + 2],
            ModelKind::WhiteNoise => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            ModelKind::Model1 { c, nu, kappa, beta, tau, b } => {
                check(c > 0.0, "model1", "c > 0")?;
                check(in_unit(nu), "model1", "0 < nu <= 1")?;
                check(kappa > 0.0, "model1", "kappa > 0")?;
                check((0.0..=1.0).contains(&beta), "model1", "0 <= beta <= 1")?;
                check(tau >= beta / 2.0, "model1", "tau >= beta/2")?;
                check(in_unit(b), "model1", "0 < b <= 1")
            }
            ModelKind::Model2 { a, alpha, b, c, nu } => {
                check(in_unit(a), "model2", "0 < a <= 1")?;
                check(alpha >= 0.5, "model2", "alpha >= 1/2")?;
                check(in_unit(b), "model2", "0 < b <= 1")?;
                check(c > 0.0, "model2", "c > 0")?;
                check(nu > 0.0, "model2", "nu > 0")
            }
            ModelKind::Model3 { alpha, beta, nu, delta } => {
                check(alpha > 0.0, "model3", "alpha > 0")?;
                check(beta > 0.0, "model3", "beta > 0")?;
                check(in_unit(nu), "model3", "0 < nu <= 1")?;
                check(delta > 0.0, "model3", "delta > 0")
            }
            ModelKind::Model4 { theta1, theta2, theta3, theta4 } => {
                check(theta1 > 0.0, "model4", "theta1 > 0")?;
                check(theta2 > 0.0, "model4", "theta2 > 0")?;
                check(theta3 > 0.0, "model4", "theta3 > 0")?;
                check(theta4 > 0.0, "model4", "theta4 > 0")
            }
            ModelKind::Model5 { theta1, theta2, theta3, theta4 } => {
                check(theta1 > 0.0, "model5", "theta1 > 0")?;
                check(theta2 > 0.0, "model5", "theta2 > 0")?;
                check(theta3 > 0.0 && theta3 <= 2.0, "model5", "0 < theta3 <= 2")?;
                check(theta4 > 0.0, "model5", "theta4 > 0")
            }
            ModelKind::Separable { c, nu, kappa, tau, b } => {
                check(c > 0.0, "separable", "c > 0")?;
                check(in_unit(nu), "separable", "0 < nu <= 1")?;
                check(kappa > 0.0, "separable", "kappa > 0")?;
                check(tau >= 0.0, "separable", "tau >= 0")?;
                check(in_unit(b), "separable", "0 < b <= 1")
            }
            ModelKind::TailUp(k) | ModelKind::TailDown(k) => Ok(k.validate()?),
            ModelKind::Gneiting { phi, psi, alpha, a, b } => {
                if phi.class() != FunctionClass::CompletelyMonotone {
                    return Err(ModelError::HypothesisViolation(format!("phi = {phi} is not completely monotone")));
                }
                if psi.class() != FunctionClass::Bernstein {
                    return Err(ModelError::HypothesisViolation(format!("psi = {psi} is not a Bernstein function")));
                }
                if matches!(phi, ScalarFamily::CmNegPow { .. }) {
                    return Err(ModelError::HypothesisViolation("phi must be finite at 0".into()));
                }
                phi.validate().map_err(|e| ModelError::HypothesisViolation(e.to_string()))?;
                psi.validate().map_err(|e| ModelError::HypothesisViolation(e.to_string()))?;
                if psi.value(0.0) <= 0.0 {
                    return Err(ModelError::HypothesisViolation("psi must be positive".into()));
                }
                if alpha < 0.5 {
                    return Err(ModelError::HypothesisViolation("alpha >= 1/2".into()));
                }
                if !in_unit(a) {
                    return Err(ModelError::HypothesisViolation("0 < a <= 1".into()));
                }
                if !in_unit(b) {
                    return Err(ModelError::HypothesisViolation("0 < b <= 1".into()));
                }
                Ok(())
            }
            ModelKind::ProductSum { up, down, t1, t2, .. } => {
                up.validate()?;
                down.validate()?;
                check(t1.scale() > 0.0, "productsum", "t1.scale > 0")?;
                check(t2.scale() > 0.0, "productsum", "t2.scale > 0")
            }
            ModelKind::WhiteNoise => Ok(()),
        }
    }

    /// Checks that need the site geometry: tree-only families and Model 3's
    /// bound on `delta`.
    pub fn check_geometry(&self, geom: &SiteGeometry) -> Result<(), ModelError> {
        match *self {
            ModelKind::Model3 { delta, .. } => {
                if !geom.is_tree {
                    return Err(ModelError::RequiresTree("model3"));
                }
                let bound = delta_bound(geom.leaf_count);
                if delta < bound {
                    return Err(ModelError::DeltaTooSmallForTree { delta, bound, leaves: geom.leaf_count });
                }
                Ok(())
            }
            ModelKind::Model5 { .. } if !geom.is_tree => Err(ModelError::RequiresTree("model5")),
            ModelKind::Model4 { .. } | ModelKind::TailUp(_) | ModelKind::ProductSum { .. } if geom.flow.is_none() => {
                Err(ModelError::RequiresDirectedTree(self.name()))
            }
            ModelKind::TailDown(Kernel::Mariah { .. }) if geom.flow.is_none() => Err(ModelError::RequiresDirectedTree("taildown")),
            _ => Ok(()),
        }
    }

    /// Unit-sill correlation `C0` at the given separation.
    pub fn correlation(&self, sep: &SpaceTimeSeparation) -> Result<f64, ModelError> {
        let (d, u) = (sep.d, sep.u);
        let flow = |name: &'static str| sep.relation.ok_or(ModelError::RequiresDirectedTree(name));
        let weight = || sep.weight.unwrap_or(1.0);
        Ok(match self {
            &ModelKind::Model1 { c, nu, kappa, beta, tau, b } => cov_model1(d, u, c, nu, kappa, beta, tau, b),
            &ModelKind::Model2 { a, alpha, b, c, nu } => cov_model2(d, u, a, alpha, b, c, nu),
            &ModelKind::Model3 { alpha, beta, nu, delta } => cov_model3(d, u, alpha, beta, nu, delta),
            &ModelKind::Model4 { theta1, theta2, theta3, theta4 } => {
                cov_model4(&flow("model4")?, weight(), u, theta1, theta2, theta3, theta4)
            }
            &ModelKind::Model5 { theta1, theta2, theta3, theta4 } => cov_model5(d, u, theta1, theta2, theta3, theta4),
            &ModelKind::Separable { c, nu, kappa, tau, b } => cov_model1(d, u, c, nu, kappa, 0.0, tau, b),
            ModelKind::TailUp(k) => cov_tailup(&flow("tailup")?, weight(), k),
            ModelKind::TailDown(k @ Kernel::Exponential { .. }) => cov_taildown(&FlowRelation::FlowConnected { d }, k)?,
            ModelKind::TailDown(k) => cov_taildown(&flow("taildown")?, k)?,
            ModelKind::Gneiting { phi, psi, alpha, a, b } => cov_gneiting(d, u, phi, psi, *alpha, *a, *b),
            ModelKind::ProductSum { form, up, down, t1, t2 } => {
                let rel = flow("productsum")?;
                let tu = cov_tailup(&rel, weight(), up);
                let td = cov_taildown(&rel, down)?;
                let (c1, c2) = (t1.value(u), t2.value(u));
                match form {
                    ConeForm::DownProductSum => td * c1 + tu + c2,
                    ConeForm::UpProductSum => tu * c1 + td + c2,
                    ConeForm::DoubleProduct => tu * c1 + td * c2,
                }
            }
            ModelKind::WhiteNoise => {
                if sep.same_site && u == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

/// Separation between two space-time records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeSeparation {
    pub d: f64,
    pub u: f64,
    /// Flow relation, required by tail-up based models.
    pub relation: Option<FlowRelation>,
    /// Tail-up weight; taken as 1 when absent.
    pub weight: Option<f64>,
    pub same_site: bool,
}

impl SpaceTimeSeparation {
    /// Separation carrying only distance and lag.
    pub fn isotropic(d: f64, u: f64) -> Self {
        Self { d, u, relation: None, weight: None, same_site: d == 0.0 }
    }

    pub fn with_flow(relation: FlowRelation, weight: f64, u: f64) -> Self {
        let same_site = matches!(relation, FlowRelation::SamePoint);
        Self { d: relation.distance(), u, relation: Some(relation), weight: Some(weight), same_site }
    }

    /// Separation between sites `i` and `j` of a geometry at lag `u`.
    pub fn between(geom: &SiteGeometry, i: usize, j: usize, u: f64) -> Self {
        let d = geom.distance[(i, j)];
        Self {
            d,
            u,
            relation: geom.flow_relation(i, j),
            weight: geom.tailup_weight(i, j),
            same_site: i == j || d == 0.0,
        }
    }
}

/// Anything that yields a covariance for a pair of records.
pub trait SpaceTimeCovariance: Sync {
    fn covariance(&self, sep: &SpaceTimeSeparation) -> Result<f64, ModelError>;

    fn check_geometry(&self, _geom: &SiteGeometry) -> Result<(), ModelError> {
        Ok(())
    }
}

/// A correlation family with sill and pure spatial nugget:
/// `σ² C0 + nugget · 1{same site}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovModel {
    pub kind: ModelKind,
    pub sigma2: f64,
    pub nugget: f64,
}

impl CovModel {
    pub fn new(kind: ModelKind, sigma2: f64, nugget: f64) -> Self {
        Self { kind, sigma2, nugget }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.kind.validate()?;
        check(self.sigma2 >= 0.0 && self.sigma2.is_finite(), self.kind.name(), "sigma2 >= 0")?;
        check(self.nugget >= 0.0 && self.nugget.is_finite(), self.kind.name(), "nugget >= 0")
    }

    /// Correlation family names followed by `sigma2` and `nugget`.
    pub fn param_names(&self) -> Vec<String> {
        let mut v = self.kind.param_names();
        v.push("sigma2".into());
        v.push("nugget".into());
        v
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.kind.params();
        v.push(self.sigma2);
        v.push(self.nugget);
        v
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        let k = p.len() - 2;
        Self { kind: self.kind.with_params(&p[..k]), sigma2: p[k], nugget: p[k + 1] }
    }

    pub fn domains(&self, leaves: Option<usize>) -> Vec<ParamDomain> {
        let mut v = self.kind.domains(leaves);
        v.push(ParamDomain::Positive);
        v.push(ParamDomain::NonNegative);
        v
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        let names = self.param_names();
        names.iter().position(|n| n == name).map(|i| self.params()[i])
    }

    /// Value of `C0` at zero separation (1 for all built-in families except
    /// the tail-up/tail-down ones, whose sill is set by the kernel).
    pub fn correlation_at_origin(&self) -> Result<f64, ModelError> {
        let sep = match self.kind {
            ModelKind::Model4 { .. } | ModelKind::TailUp(_) | ModelKind::TailDown(_) | ModelKind::ProductSum { .. } => {
                SpaceTimeSeparation::with_flow(FlowRelation::SamePoint, 1.0, 0.0)
            }
            _ => SpaceTimeSeparation::isotropic(0.0, 0.0),
        };
        self.kind.correlation(&sep)
    }
}

/// `σ² C0(sep) + nugget · 1{same site}`.
pub fn full_covariance(model: &CovModel, sep: &SpaceTimeSeparation) -> Result<f64, ModelError> {
    let c0 = if model.sigma2 == 0.0 { 0.0 } else { model.kind.correlation(sep)? };
    let nug = if sep.same_site { model.nugget } else { 0.0 };
    Ok(model.sigma2 * c0 + nug)
}

impl SpaceTimeCovariance for CovModel {
    fn covariance(&self, sep: &SpaceTimeSeparation) -> Result<f64, ModelError> {
        full_covariance(self, sep)
    }

    fn check_geometry(&self, geom: &SiteGeometry) -> Result<(), ModelError> {
        self.validate()?;
        self.kind.check_geometry(geom)
    }
}

/// Nonnegative combination of covariances.
pub struct WeightedSum<'a> {
    pub parts: Vec<(f64, &'a dyn SpaceTimeCovariance)>,
}

impl SpaceTimeCovariance for WeightedSum<'_> {
    fn covariance(&self, sep: &SpaceTimeSeparation) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (w, c) in &self.parts {
            total += w * c.covariance(sep)?;
        }
        Ok(total)
    }

    fn check_geometry(&self, geom: &SiteGeometry) -> Result<(), ModelError> {
        for (w, c) in &self.parts {
            if *w < 0.0 {
                return Err(ModelError::HypothesisViolation("negative weight in a convex-cone combination".into()));
            }
            c.check_geometry(geom)?;
        }
        Ok(())
    }
}

impl fmt::Display for CovModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind.name())?;
        for (i, (n, v)) in self.param_names().iter().zip(self.params()).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}={v}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> CovModel {
        CovModel::new(ModelKind::Model1 { c: 1.0, nu: 1.0, kappa: 1.0, beta: 0.5, tau: 0.5, b: 1.0 }, 2.0, 0.5)
    }

    #[test]
    fn nugget_only_on_same_site() {
        let m = m1();
        let same = SpaceTimeSeparation { same_site: true, ..SpaceTimeSeparation::isotropic(0.0, 0.0) };
        assert_eq!(full_covariance(&m, &same).unwrap(), 2.5);
        let near = SpaceTimeSeparation::isotropic(1e-12, 0.0);
        assert!(full_covariance(&m, &near).unwrap() <= 2.0);
        let later = SpaceTimeSeparation { same_site: true, ..SpaceTimeSeparation::isotropic(0.0, 3.0) };
        assert!(full_covariance(&m, &later).unwrap() > 0.5);
    }

    #[test]
    fn param_round_trip() {
        let m = m1();
        let p = m.params();
        assert_eq!(m.with_params(&p), m);
        assert_eq!(m.param_names().len(), p.len());
        assert_eq!(m.param("tau"), Some(0.5));
    }

    #[test]
    fn constraint_messages() {
        let bad = ModelKind::Model1 { c: 1.0, nu: 1.0, kappa: 1.0, beta: 2.0, tau: 1.0, b: 1.0 };
        match bad.validate() {
            Err(ModelError::InvalidParams { constraint, .. }) => assert_eq!(constraint, "0 <= beta <= 1"),
            other => panic!("{other:?}"),
        }
        let tau_low = ModelKind::Model1 { c: 1.0, nu: 1.0, kappa: 1.0, beta: 1.0, tau: 0.5, b: 1.0 };
        assert!(tau_low.validate().is_ok());
        let g = ModelKind::Gneiting {
            phi: ScalarFamily::BfPowerPlusBeta { lambda: 0.5, beta: 1.0 },
            psi: ScalarFamily::BfPowerPlusBeta { lambda: 0.5, beta: 1.0 },
            alpha: 1.0,
            a: 1.0,
            b: 1.0,
        };
        assert!(matches!(g.validate(), Err(ModelError::HypothesisViolation(_))));
    }

    #[test]
    fn delta_bounds() {
        assert_eq!(delta_bound(7), 9.0);
        assert_eq!(delta_bound(5), 7.0);
        assert_eq!(delta_bound(4), 5.0);
    }
}
