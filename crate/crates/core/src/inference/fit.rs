//! Maximum-likelihood fitting of covariance parameters with the regression
//! vector profiled out.

use std::cell::Cell;

use nalgebra::DVector;

use crate::models::{CovModel, ModelKind, ParamDomain};

use super::likelihood::{covariance_matrix, gaussian_loglik, Factor, Gls};
use super::optim::{nelder_mead, NelderMeadOptions};
use super::{Dataset, InferenceError};

/// Starting model plus which of its parameters are optimised.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub model: CovModel,
    /// Parallel to `model.param_names()`.
    pub free: Vec<bool>,
}

impl FitSpec {
    pub fn all_free(model: CovModel) -> Self {
        let n = model.param_names().len();
        Self { model, free: vec![true; n] }
    }

    pub fn all_fixed(model: CovModel) -> Self {
        let n = model.param_names().len();
        Self { model, free: vec![false; n] }
    }

    fn index(&self, name: &str) -> Result<usize, InferenceError> {
        self.model
            .param_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| InferenceError::UnknownParam(name.to_string()))
    }

    pub fn fix(mut self, name: &str) -> Result<Self, InferenceError> {
        let i = self.index(name)?;
        self.free[i] = false;
        Ok(self)
    }

    pub fn unfix(mut self, name: &str) -> Result<Self, InferenceError> {
        let i = self.index(name)?;
        self.free[i] = true;
        Ok(self)
    }

    pub fn free_names(&self) -> Vec<String> {
        self.model.param_names().into_iter().zip(&self.free).filter(|(_, &f)| f).map(|(n, _)| n).collect()
    }

    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    MaxEvaluations,
    /// Nothing to optimise; the likelihood was evaluated once.
    NoFreeParameters,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: CovModel,
    pub beta: DVector<f64>,
    pub loglik: f64,
    pub bic: f64,
    /// Free covariance parameters plus regression coefficients.
    pub n_params: usize,
    pub n_obs: usize,
    pub convergence: Convergence,
    pub iterations: usize,
    pub evaluations: usize,
    pub jitter_retries: usize,
    pub initial_loglik: f64,
    /// Leaf count of the network, reported for the Model 3 bound.
    pub leaf_count: usize,
}

impl FitResult {
    pub fn ensure_converged(&self) -> Result<&Self, InferenceError> {
        match self.convergence {
            Convergence::MaxEvaluations => Err(InferenceError::NonConvergence { evaluations: self.evaluations }),
            _ => Ok(self),
        }
    }
}

pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    -2.0 * loglik + n_params as f64 * (n_obs as f64).ln()
}

/// Distance kept from closed interval ends, relative to the width.
const EDGE: f64 = 1e-6;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Maps between the free parameters and an unconstrained vector.
pub struct Transform {
    base: Vec<f64>,
    domains: Vec<ParamDomain>,
    free: Vec<usize>,
}

impl Transform {
    pub fn new(spec: &FitSpec, leaves: Option<usize>) -> Self {
        let domains = spec.model.domains(leaves);
        let free = (0..domains.len()).filter(|&i| spec.free[i]).collect();
        Self { base: spec.model.params(), domains, free }
    }

    fn to_raw(&self, i: usize, params: &[f64]) -> f64 {
        let p = params[i];
        match self.domains[i] {
            ParamDomain::Positive | ParamDomain::NonNegative => p.max(1e-8).ln(),
            ParamDomain::Interval { lo, hi } => {
                let w = hi - lo;
                logit(((p - lo) / w).clamp(EDGE, 1.0 - EDGE))
            }
            ParamDomain::AtLeast(lo) => (p - lo).max(EDGE * lo.abs().max(1.0)).ln(),
            ParamDomain::Below(hi) => (hi - p).max(EDGE * hi.abs().max(1.0)).ln(),
            ParamDomain::AtLeastHalfOf(j) => softplus_inv((p - params[j] / 2.0).max(EDGE)),
        }
    }

    pub fn encode(&self, params: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| self.to_raw(i, params)).collect()
    }

    pub fn decode(&self, raw: &[f64]) -> Vec<f64> {
        let mut p = self.base.clone();
        let mut dependent = Vec::new();
        for (&i, &x) in self.free.iter().zip(raw) {
            p[i] = match self.domains[i] {
                ParamDomain::Positive | ParamDomain::NonNegative => x.exp(),
                ParamDomain::Interval { lo, hi } => lo + (hi - lo) * sigmoid(x),
                ParamDomain::AtLeast(lo) => lo + x.exp(),
                ParamDomain::Below(hi) => hi - x.exp(),
                ParamDomain::AtLeastHalfOf(_) => {
                    dependent.push((i, x));
                    continue;
                }
            };
        }
        for (i, x) in dependent {
            if let ParamDomain::AtLeastHalfOf(j) = self.domains[i] {
                p[i] = p[j] / 2.0 + softplus(x);
            }
        }
        // Fixed dependants must still respect their bound.
        for i in 0..p.len() {
            if let ParamDomain::AtLeastHalfOf(j) = self.domains[i] {
                if !self.free.contains(&i) && p[i] < p[j] / 2.0 {
                    p[i] = p[j] / 2.0;
                }
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub optimizer: NelderMeadOptions,
}

/// Profiled log-likelihood at `model`, allowing one jitter retry.
fn profiled(data: &Dataset, model: &CovModel, jitters: &Cell<usize>) -> Result<(f64, DVector<f64>), InferenceError> {
    model.validate()?;
    let factor = Factor::with_jitter(covariance_matrix(data, model)?)?;
    if factor.jittered {
        jitters.set(jitters.get() + 1);
    }
    let gls = Gls::new(&factor, &data.design, &data.response)?;
    Ok((gaussian_loglik(&factor, &gls.whitened_residual), gls.beta))
}

/// Maximise the profiled likelihood over the free parameters.
pub fn fit_ml(data: &Dataset, spec: &FitSpec, opts: &FitOptions) -> Result<FitResult, InferenceError> {
    if spec.free.len() != spec.model.param_names().len() {
        return Err(InferenceError::DimensionMismatch("free mask length".into()));
    }
    let geom = data.geometry();
    spec.model.kind.check_geometry(geom)?;
    let leaves = match spec.model.kind {
        ModelKind::Model3 { .. } if geom.is_tree => Some(geom.leaf_count),
        _ => None,
    };
    let jitters = Cell::new(0);
    let (initial_loglik, initial_beta) = profiled(data, &spec.model, &jitters).map_err(|e| match e {
        InferenceError::NotPositiveDefinite(msg) => InferenceError::NotPositiveDefinite(format!("at the initial point: {msg}")),
        other => other,
    })?;
    let n_params = spec.free_count() + data.design.ncols();
    let n_obs = data.len();
    if spec.free_count() == 0 {
        return Ok(FitResult {
            model: spec.model.clone(),
            beta: initial_beta,
            loglik: initial_loglik,
            bic: bic(initial_loglik, n_params, n_obs),
            n_params,
            n_obs,
            convergence: Convergence::NoFreeParameters,
            iterations: 0,
            evaluations: 1,
            jitter_retries: jitters.get(),
            initial_loglik,
            leaf_count: geom.leaf_count,
        });
    }

    let transform = Transform::new(spec, leaves);
    let x0 = transform.encode(&spec.model.params());
    let objective = |x: &[f64]| -> f64 {
        let model = spec.model.with_params(&transform.decode(x));
        match profiled(data, &model, &jitters) {
            Ok((ll, _)) => -ll,
            Err(_) => f64::INFINITY,
        }
    };
    let nm = nelder_mead(objective, &x0, &opts.optimizer);
    let mut model = spec.model.with_params(&transform.decode(&nm.x));
    let (mut loglik, mut beta) = match profiled(data, &model, &jitters) {
        Ok(v) => v,
        Err(_) => (f64::NEG_INFINITY, initial_beta.clone()),
    };
    if loglik < initial_loglik {
        model = spec.model.clone();
        loglik = initial_loglik;
        beta = initial_beta;
    }
    let convergence = if nm.converged { Convergence::Converged } else { Convergence::MaxEvaluations };
    if convergence == Convergence::MaxEvaluations {
        log::warn!("{}: optimiser stopped after {} evaluations", model.name(), nm.evaluations);
    }
    Ok(FitResult {
        model,
        beta,
        loglik,
        bic: bic(loglik, n_params, n_obs),
        n_params,
        n_obs,
        convergence,
        iterations: nm.iterations,
        evaluations: nm.evaluations + 2,
        jitter_retries: jitters.get(),
        initial_loglik,
        leaf_count: geom.leaf_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_round_trip() {
        let m = CovModel::new(ModelKind::Model1 { c: 0.7, nu: 0.4, kappa: 2.0, beta: 0.6, tau: 0.9, b: 0.5 }, 1.5, 0.2);
        let spec = FitSpec::all_free(m.clone());
        let t = Transform::new(&spec, None);
        let back = t.decode(&t.encode(&m.params()));
        for (a, b) in back.iter().zip(m.params()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tau_stays_above_half_beta() {
        let m = CovModel::new(ModelKind::Model1 { c: 1.0, nu: 1.0, kappa: 1.0, beta: 0.5, tau: 0.25, b: 1.0 }, 1.0, 0.0);
        let t = Transform::new(&FitSpec::all_free(m), None);
        for raw in [[-9.0; 8], [9.0; 8], [0.0; 8]] {
            let p = t.decode(&raw);
            assert!(p[4] >= p[3] / 2.0);
            assert!(p[1] > 0.0 && p[1] < 1.0);
        }
    }

    #[test]
    fn delta_respects_leaf_bound() {
        let m = CovModel::new(ModelKind::Model3 { alpha: 5.0, beta: 5.0, nu: 0.5, delta: 9.0 }, 1.0, 0.0);
        let t = Transform::new(&FitSpec::all_free(m), Some(7));
        assert!(t.decode(&[0.0, 0.0, 0.0, -20.0, 0.0, 0.0])[3] >= 9.0);
    }

    #[test]
    fn spec_free_mask() {
        let m = CovModel::new(ModelKind::Model5 { theta1: 1.0, theta2: 1.0, theta3: 1.0, theta4: 1.0 }, 1.0, 0.1);
        let s = FitSpec::all_free(m).fix("nugget").unwrap();
        assert_eq!(s.free_count(), 5);
        assert!(s.clone().fix("bogus").is_err());
        assert_eq!(s.free_names().last().unwrap(), "sigma2");
    }
}
