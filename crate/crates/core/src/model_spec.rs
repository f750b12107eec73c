//! Text form of a covariance model and its free parameters:
//!
//! ```text
//! <variant>[:<name>=<value>,...][;sigma2=<v>][;nugget=<v>][;free=<names>][;fixed=<names>]
//! ```
//!
//! Variants: `model1` .. `model5`, `separable`, `iid`, `tailup-exp`,
//! `tailup-mariah`, `taildown-exp`, `taildown-mariah`,
//! `gneiting/<phi>/<psi>` and
//! `productsum/<form>/<up kernel>/<down kernel>/<t1>/<t2>`.
//! Unlisted parameters take the variant defaults. Names in `free`/`fixed`
//! are separated by `,` or `|`.

use std::fmt;

use thiserror::Error;

use crate::functions::{Kernel, ScalarFamily};
use crate::inference::FitSpec;
use crate::models::{delta_bound, ConeForm, CovModel, ModelError, ModelKind, TemporalCov};
use crate::network::{Network, SiteGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unknown model variant '{0}'")]
    UnknownVariant(String),
    #[error("{variant} has no parameter '{name}'")]
    UnknownParam { variant: String, name: String },
    #[error("cannot parse '{0}'")]
    Syntax(String),
    #[error("{0}")]
    ConstraintViolation(String),
    #[error("delta = {delta} is below 2*ceil(m/2)+1 = {bound} for a tree with m = {leaves} leaves")]
    DeltaTooSmallForTree { delta: f64, bound: f64, leaves: usize },
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for SpecError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams { model, constraint } => {
                SpecError::ConstraintViolation(format!("{model}: {constraint}"))
            }
            ModelError::HypothesisViolation(msg) => SpecError::ConstraintViolation(msg),
            ModelError::Function(f) => SpecError::ConstraintViolation(f.to_string()),
            ModelError::DeltaTooSmallForTree { delta, bound, leaves } => {
                SpecError::DeltaTooSmallForTree { delta, bound, leaves }
            }
            other => SpecError::Model(other),
        }
    }
}

/// Reference parameter sets for each variant; used as defaults.
fn default_kind(head: &str) -> Result<ModelKind, SpecError> {
    let unknown = || SpecError::UnknownVariant(head.to_string());
    let mut parts = head.split('/');
    let base = parts.next().unwrap_or("");
    let rest: Vec<&str> = parts.collect();
    let kernel = |name: &str| match name {
        "exp" => Ok(Kernel::Exponential { theta1: 1.0, theta2: 1.0 }),
        "mariah" => Ok(Kernel::Mariah { theta1: 1.0 }),
        _ => Err(unknown()),
    };
    let no_rest = |k: ModelKind| if rest.is_empty() { Ok(k) } else { Err(unknown()) };
    match base {
        "model1" => no_rest(ModelKind::Model1 { c: 1.0, nu: 1.0, kappa: 1.0, beta: 0.5, tau: 0.5, b: 1.0 }),
        "model2" => no_rest(ModelKind::Model2 { a: 1.0, alpha: 1.0, b: 1.0, c: 1.0, nu: 1.0 }),
        "model3" => no_rest(ModelKind::Model3 { alpha: 200.0, beta: 10.0, nu: 0.9, delta: 20.0 }),
        "model4" => no_rest(ModelKind::Model4 { theta1: 1.0, theta2: 1.0, theta3: 1.0, theta4: 1.0 }),
        "model5" => no_rest(ModelKind::Model5 { theta1: 10.0, theta2: 5.0, theta3: 1.5, theta4: 1.0 }),
        "separable" => no_rest(ModelKind::Separable { c: 1.0, nu: 1.0, kappa: 1.0, tau: 0.5, b: 1.0 }),
        "iid" => no_rest(ModelKind::WhiteNoise),
        "tailup-exp" => no_rest(ModelKind::TailUp(kernel("exp")?)),
        "tailup-mariah" => no_rest(ModelKind::TailUp(kernel("mariah")?)),
        "taildown-exp" => no_rest(ModelKind::TailDown(kernel("exp")?)),
        "taildown-mariah" => no_rest(ModelKind::TailDown(kernel("mariah")?)),
        "gneiting" => match rest.as_slice() {
            [phi, psi] => Ok(ModelKind::Gneiting {
                phi: default_family(phi).ok_or_else(unknown)?,
                psi: default_family(psi).ok_or_else(unknown)?,
                alpha: 1.0,
                a: 1.0,
                b: 1.0,
            }),
            _ => Err(unknown()),
        },
        "productsum" => match rest.as_slice() {
            [form, up, down, t1, t2] => Ok(ModelKind::ProductSum {
                form: ConeForm::from_name(form).ok_or_else(unknown)?,
                up: kernel(up)?,
                down: kernel(down)?,
                t1: TemporalCov::from_name(t1, 1.0).ok_or_else(unknown)?,
                t2: TemporalCov::from_name(t2, 1.0).ok_or_else(unknown)?,
            }),
            _ => Err(unknown()),
        },
        _ => Err(unknown()),
    }
}

fn default_family(name: &str) -> Option<ScalarFamily> {
    Some(match name {
        "powexp" => ScalarFamily::CmPowExp { c: 1.0, nu: 0.5 },
        "negpow" => ScalarFamily::CmNegPow { c: 1.0, nu: -0.5 },
        "sech" => ScalarFamily::CmSech { c: 1.0, nu: 1.0 },
        "cauchy" => ScalarFamily::CmCauchy { c: 1.0, nu: 1.0, gamma: 0.5 },
        "powerplusone" => ScalarFamily::BfPowerPlusOne { kappa: 1.0, beta: 0.5, lambda: 1.0 },
        "logratio" => ScalarFamily::BfLogRatio { kappa: 1.0, beta: 2.0, lambda: 1.0 },
        "powerplusbeta" => ScalarFamily::BfPowerPlusBeta { lambda: 0.5, beta: 1.0 },
        "expsaturate" => ScalarFamily::BfExpSaturate { kappa: 1.0, beta: 2.0 },
        _ => return None,
    })
}

/// Parse `<family>[:<name>=<value>,...]`, e.g. `powerplusbeta:lambda=0.5,beta=2`.
pub fn parse_family(s: &str) -> Result<ScalarFamily, SpecError> {
    let (head, body) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
    let fam = default_family(head.trim()).ok_or_else(|| SpecError::UnknownVariant(head.to_string()))?;
    let names = fam.param_names();
    let mut values = fam.params();
    for a in body.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let (k, v) = a.split_once('=').ok_or_else(|| SpecError::Syntax(a.to_string()))?;
        let i = names
            .iter()
            .position(|n| *n == k.trim())
            .ok_or_else(|| SpecError::UnknownParam { variant: head.to_string(), name: k.trim().to_string() })?;
        values[i] = parse_value(k, v)?;
    }
    let fam = fam.with_params(&values);
    fam.validate().map_err(|e| SpecError::ConstraintViolation(e.to_string()))?;
    Ok(fam)
}

/// Variant head as accepted by the parser.
pub fn variant_head(kind: &ModelKind) -> String {
    let kernel = |k: &Kernel| match k {
        Kernel::Exponential { .. } => "exp",
        Kernel::Mariah { .. } => "mariah",
    };
    match kind {
        ModelKind::TailUp(k) => format!("tailup-{}", kernel(k)),
        ModelKind::TailDown(k) => format!("taildown-{}", kernel(k)),
        ModelKind::Gneiting { phi, psi, .. } => format!("gneiting/{}/{}", phi.name(), psi.name()),
        ModelKind::ProductSum { form, up, down, t1, t2 } => {
            format!("productsum/{}/{}/{}/{}/{}", form.name(), kernel(up), kernel(down), t1.name(), t2.name())
        }
        other => other.name().to_string(),
    }
}

/// Parsed model with its free-parameter mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: CovModel,
    pub free: Vec<bool>,
}

impl ModelSpec {
    pub fn fit_spec(&self) -> FitSpec {
        FitSpec { model: self.model.clone(), free: self.free.clone() }
    }

    /// Network-dependent checks, including Model 3's leaf bound.
    pub fn check_network(&self, net: &Network) -> Result<(), SpecError> {
        if let ModelKind::Model3 { delta, .. } = self.model.kind {
            if net.is_tree() {
                let leaves = net.leaf_count();
                let bound = delta_bound(leaves);
                if delta < bound {
                    return Err(SpecError::DeltaTooSmallForTree { delta, bound, leaves });
                }
            }
        }
        let geom = SiteGeometry::new(net, &[]).map_err(ModelError::from)?;
        Ok(self.model.kind.check_geometry(&geom)?)
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        parse_model_spec(s)
    }
}

fn parse_value(name: &str, v: &str) -> Result<f64, SpecError> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| SpecError::Syntax(format!("{name}={v}")))
}

pub fn parse_model_spec(s: &str) -> Result<ModelSpec, SpecError> {
    let mut sections = s.trim().split(';');
    let first = sections.next().unwrap_or("").trim();
    let (head, assignments) = match first.split_once(':') {
        Some((h, a)) => (h.trim(), a),
        None => (first, ""),
    };
    let kind = default_kind(&head.to_ascii_lowercase())?;
    let nugget = if matches!(kind, ModelKind::WhiteNoise) { 0.0 } else { 0.1 };
    let mut model = CovModel::new(kind, 1.0, nugget);
    let names = model.param_names();
    let mut values = model.params();
    let unknown = |name: &str| SpecError::UnknownParam { variant: head.to_string(), name: name.to_string() };
    let index = |name: &str| names.iter().position(|n| n == name).ok_or_else(|| unknown(name));

    for a in assignments.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let (k, v) = a.split_once('=').ok_or_else(|| SpecError::Syntax(a.to_string()))?;
        let k = k.trim();
        if k == "sigma2" || k == "nugget" {
            return Err(SpecError::Syntax(format!("{k} belongs in its own ';{k}=' section")));
        }
        values[index(k)?] = parse_value(k, v)?;
    }
    let mut free_list: Option<Vec<String>> = None;
    let mut fixed_list: Vec<String> = Vec::new();
    let split_names = |v: &str| -> Vec<String> {
        v.split([',', '|']).map(str::trim).filter(|n| !n.is_empty()).map(String::from).collect()
    };
    for sec in sections.map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = sec.split_once('=').ok_or_else(|| SpecError::Syntax(sec.to_string()))?;
        match k.trim() {
            "sigma2" | "nugget" => values[index(k.trim())?] = parse_value(k, v)?,
            "free" => free_list = Some(split_names(v)),
            "fixed" => fixed_list.extend(split_names(v)),
            other => return Err(SpecError::Syntax(format!("unknown section '{other}'"))),
        }
    }
    model = model.with_params(&values);
    model.validate()?;

    // The white-noise baseline keeps its nugget at zero unless asked, since a
    // spatial nugget would correlate records at one site.
    let mut free = match &free_list {
        Some(list) => {
            let mut f = vec![false; names.len()];
            for n in list {
                f[index(n)?] = true;
            }
            f
        }
        None => names.iter().map(|n| !(matches!(model.kind, ModelKind::WhiteNoise) && n == "nugget")).collect(),
    };
    for n in &fixed_list {
        free[index(n)?] = false;
    }
    Ok(ModelSpec { model, free })
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = &self.model.kind;
        write!(f, "{}", variant_head(kind))?;
        let kn = kind.param_names();
        if !kn.is_empty() {
            let body: Vec<String> = kn.iter().zip(kind.params()).map(|(n, v)| format!("{n}={v}")).collect();
            write!(f, ":{}", body.join(","))?;
        }
        write!(f, ";sigma2={};nugget={}", self.model.sigma2, self.model.nugget)?;
        let fixed: Vec<String> =
            self.model.param_names().into_iter().zip(&self.free).filter(|(_, &fr)| !fr).map(|(n, _)| n).collect();
        if !fixed.is_empty() {
            write!(f, ";fixed={}", fixed.join("|"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_sections() {
        let s = parse_model_spec("model5:theta1=10,theta2=5,theta3=1.5,theta4=1;sigma2=1;nugget=0").unwrap();
        assert_eq!(s.model.kind, ModelKind::Model5 { theta1: 10.0, theta2: 5.0, theta3: 1.5, theta4: 1.0 });
        assert_eq!(s.model.nugget, 0.0);
        assert!(s.free.iter().all(|&f| f));
        let s = parse_model_spec("model1;fixed=beta").unwrap();
        assert_eq!(s.fit_spec().free_count(), 7);
        let s = parse_model_spec("model1;free=sigma2,nugget").unwrap();
        assert_eq!(s.fit_spec().free_names(), vec!["sigma2", "nugget"]);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_model_spec("model9"), Err(SpecError::UnknownVariant(_))));
        assert!(matches!(parse_model_spec("model1:zeta=1"), Err(SpecError::UnknownParam { .. })));
        assert!(matches!(parse_model_spec("model1:beta=x"), Err(SpecError::Syntax(_))));
        assert!(matches!(parse_model_spec("model1;free=bogus"), Err(SpecError::UnknownParam { .. })));
        match parse_model_spec("model1:beta=2") {
            Err(SpecError::ConstraintViolation(msg)) => assert!(msg.contains("0 <= beta <= 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn families() {
        let f = parse_family("powerplusbeta:lambda=0.3,beta=2").unwrap();
        assert_eq!(f, ScalarFamily::BfPowerPlusBeta { lambda: 0.3, beta: 2.0 });
        assert!(parse_family("powerplusbeta:lambda=3").is_err());
        assert!(parse_family("nope").is_err());
    }

    #[test]
    fn composite_heads_round_trip() {
        for text in [
            "gneiting/powexp/powerplusone:phi.c=2;sigma2=1.5;nugget=0.25",
            "productsum/double/exp/mariah/exp/cosine:up.theta1=2;sigma2=1;nugget=0;fixed=nugget",
            "taildown-mariah:theta1=3",
            "iid;sigma2=2",
        ] {
            let s = parse_model_spec(text).unwrap();
            let again = parse_model_spec(&s.to_string()).unwrap();
            assert_eq!(s, again, "{text}");
        }
    }
}
