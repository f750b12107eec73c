//! Gaussian log-likelihood and generalised least squares through a Cholesky
//! factor. No explicit inverses are formed.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::models::CovModel;

use super::{Dataset, InferenceError};

/// Lower Cholesky factor of a covariance matrix.
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// Whether diagonal jitter was needed.
    pub jittered: bool,
}

impl Factor {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self, InferenceError> {
        Cholesky::new(sigma)
            .map(|chol| Self { chol, jittered: false })
            .ok_or_else(|| InferenceError::NotPositiveDefinite("Cholesky factorisation failed".into()))
    }

    /// Retry once with `1e-10 · trace/n` added to the diagonal.
    pub fn with_jitter(sigma: DMatrix<f64>) -> Result<Self, InferenceError> {
        let n = sigma.nrows().max(1) as f64;
        let jitter = 1e-10 * sigma.trace() / n;
        let backup = sigma.clone();
        match Cholesky::new(sigma) {
            Some(chol) => Ok(Self { chol, jittered: false }),
            None => {
                let mut s = backup;
                for i in 0..s.nrows() {
                    s[(i, i)] += jitter;
                }
                Cholesky::new(s).map(|chol| Self { chol, jittered: true }).ok_or_else(|| {
                    InferenceError::NotPositiveDefinite("Cholesky factorisation failed after jitter".into())
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `L⁻¹ v`
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `L⁻¹ M`
    pub fn whiten_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `Σ⁻¹ v`
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `L ε` with the lower factor, for sampling.
    pub fn lower_times(&self, eps: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().lower_triangle() * eps
    }
}

/// GLS fit of the linear mean given a factorised covariance.
pub struct Gls {
    pub beta: DVector<f64>,
    /// Upper-triangular `R` with `RᵀR = XᵀΣ⁻¹X`.
    pub r: DMatrix<f64>,
    /// Whitened design `L⁻¹X`.
    pub whitened_design: DMatrix<f64>,
    /// Whitened residuals `L⁻¹(z − Xβ)`.
    pub whitened_residual: DVector<f64>,
}

impl Gls {
    pub fn new(factor: &Factor, design: &DMatrix<f64>, response: &DVector<f64>) -> Result<Self, InferenceError> {
        let p = design.ncols();
        let n = design.nrows();
        let xw = factor.whiten_matrix(design);
        let zw = factor.whiten(response);
        if p == 0 {
            return Ok(Self { beta: DVector::zeros(0), r: DMatrix::zeros(0, 0), whitened_design: xw, whitened_residual: zw });
        }
        if n < p {
            return Err(InferenceError::RankDeficientDesign { rank: n, columns: p });
        }
        let qr = xw.clone().qr();
        let r = qr.r();
        let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let rank = (0..p).filter(|&i| r[(i, i)].abs() > 1e-10 * scale.max(f64::MIN_POSITIVE)).count();
        if rank < p || scale == 0.0 {
            return Err(InferenceError::RankDeficientDesign { rank, columns: p });
        }
        let qtz = qr.q().transpose() * &zw;
        let beta = r
            .solve_upper_triangular(&qtz)
            .ok_or(InferenceError::RankDeficientDesign { rank, columns: p })?;
        let resid = &zw - &xw * &beta;
        Ok(Self { beta, r, whitened_design: xw, whitened_residual: resid })
    }

    /// `(x0 − XᵀΣ⁻¹c0)ᵀ (XᵀΣ⁻¹X)⁻¹ (x0 − XᵀΣ⁻¹c0)` for one target, given
    /// `q = x0 − (L⁻¹X)ᵀ(L⁻¹c0)`.
    pub fn design_correction(&self, q: &DVector<f64>) -> f64 {
        let rt = self.r.transpose();
        match rt.solve_lower_triangular(q) {
            Some(v) => v.norm_squared(),
            None => f64::INFINITY,
        }
    }
}

/// `−n/2 log 2π − ½ log|Σ| − ½ rᵀΣ⁻¹r` with a whitened residual.
pub fn gaussian_loglik(factor: &Factor, whitened_residual: &DVector<f64>) -> f64 {
    let n = whitened_residual.len() as f64;
    -0.5 * n * (2.0 * PI).ln() - 0.5 * factor.log_det() - 0.5 * whitened_residual.norm_squared()
}

pub fn covariance_matrix(data: &Dataset, model: &CovModel) -> Result<DMatrix<f64>, InferenceError> {
    Ok(data.layout().assemble(model, data.geometry())?)
}

/// Log-likelihood at a fixed regression vector.
pub fn log_likelihood(data: &Dataset, model: &CovModel, beta: &DVector<f64>) -> Result<f64, InferenceError> {
    if beta.len() != data.design.ncols() {
        return Err(InferenceError::DimensionMismatch(format!("{} coefficients for {} columns", beta.len(), data.design.ncols())));
    }
    let factor = Factor::new(covariance_matrix(data, model)?)?;
    let resid = &data.response - &data.design * beta;
    Ok(gaussian_loglik(&factor, &factor.whiten(&resid)))
}

/// GLS estimate `(XᵀΣ⁻¹X)⁻¹XᵀΣ⁻¹z`.
pub fn profile_beta(data: &Dataset, model: &CovModel) -> Result<DVector<f64>, InferenceError> {
    let factor = Factor::new(covariance_matrix(data, model)?)?;
    Ok(Gls::new(&factor, &data.design, &data.response)?.beta)
}

/// Log-likelihood with the regression vector profiled out; returns it with β̂.
pub fn profile_loglik(data: &Dataset, model: &CovModel) -> Result<(f64, DVector<f64>), InferenceError> {
    let factor = Factor::new(covariance_matrix(data, model)?)?;
    let gls = Gls::new(&factor, &data.design, &data.response)?;
    Ok((gaussian_loglik(&factor, &gls.whitened_residual), gls.beta))
}
