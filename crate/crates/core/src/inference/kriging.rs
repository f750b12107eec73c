//! Universal kriging and Gaussian CRPS.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::models::{cross_covariance, full_covariance, CovModel, SpaceTimeSeparation};
use crate::network::{PointOnNetwork, SiteGeometry};

use super::likelihood::{covariance_matrix, Factor, Gls};
use super::{Dataset, InferenceError};

/// Prediction location with its full design row (intercept included).
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub point: PointOnNetwork,
    pub time: f64,
    pub design: Vec<f64>,
    pub observed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    pub observed: Option<f64>,
    pub crps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub predictions: Vec<Prediction>,
    pub beta: DVector<f64>,
}

impl PredictionResult {
    /// Root mean squared prediction error over targets with observations.
    pub fn rmspe(&self) -> Option<f64> {
        let errs: Vec<f64> = self.predictions.iter().filter_map(|p| p.observed.map(|y| (y - p.mean).powi(2))).collect();
        (!errs.is_empty()).then(|| (errs.iter().sum::<f64>() / errs.len() as f64).sqrt())
    }

    pub fn mean_crps(&self) -> Option<f64> {
        let v: Vec<f64> = self.predictions.iter().filter_map(|p| p.crps).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `sd · [w(2Φ(w) − 1) + 2φ(w) − 1/√π]` with `w = (y − mean)/sd`.
pub fn crps_gaussian(mean: f64, sd: f64, y: f64) -> Result<f64, InferenceError> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(InferenceError::NonpositiveSd(sd));
    }
    let std = Normal::standard();
    let w = (y - mean) / sd;
    Ok(sd * (w * (2.0 * std.cdf(w) - 1.0) + 2.0 * std.pdf(w) - 1.0 / std::f64::consts::PI.sqrt()))
}

/// CRPS that degenerates to the absolute error for a point forecast.
fn crps_or_abs(mean: f64, variance: f64, y: f64) -> f64 {
    if variance > 0.0 {
        crps_gaussian(mean, variance.sqrt(), y).unwrap_or((y - mean).abs())
    } else {
        (y - mean).abs()
    }
}

/// Universal kriging predictor and variance, including the correction for
/// the estimated regression vector.
pub fn krige(data: &Dataset, model: &CovModel, targets: &[Target]) -> Result<PredictionResult, InferenceError> {
    let p = data.design.ncols();
    if let Some(t) = targets.iter().find(|t| t.design.len() != p) {
        return Err(InferenceError::DimensionMismatch(format!("target design has {} columns, data has {p}", t.design.len())));
    }
    let factor = Factor::new(covariance_matrix(data, model)?)?;
    let gls = Gls::new(&factor, &data.design, &data.response)?;

    // Joint geometry: training sites followed by the distinct target points.
    let mut sites = data.sites.clone();
    let cols: Vec<(usize, f64)> = targets
        .iter()
        .map(|t| {
            let s = sites.iter().position(|p| *p == t.point).unwrap_or_else(|| {
                sites.push(t.point);
                sites.len() - 1
            });
            (s, t.time)
        })
        .collect();
    let geom = SiteGeometry::new(&data.net, &sites)?;
    let c0 = cross_covariance(model, &geom, &data.records, &cols)?;

    if model.nugget > 0.0 {
        for &(s, t) in &cols {
            if data.records.iter().any(|&(rs, rt)| rs == s && rt == t) {
                log::warn!("target coincides with a training record while the nugget is positive");
                break;
            }
        }
    }

    let w = factor.whiten_matrix(&c0);
    let x0 = DMatrix::from_fn(targets.len(), p, |i, j| targets[i].design[j]);
    let xtw = gls.whitened_design.transpose() * &w;
    let weights_resid = w.transpose() * &gls.whitened_residual;
    let mut predictions = Vec::with_capacity(targets.len());
    for (k, t) in targets.iter().enumerate() {
        let col = w.column(k);
        let mean = (x0.row(k) * &gls.beta)[(0, 0)] + weights_resid[k];
        let sill = full_covariance(model, &SpaceTimeSeparation::between(&geom, cols[k].0, cols[k].0, 0.0))?;
        let q = DVector::from_iterator(p, (0..p).map(|j| x0[(k, j)] - xtw[(j, k)]));
        let mut variance = sill - col.norm_squared() + gls.design_correction(&q);
        if variance < 0.0 {
            if variance < -1e-10 {
                log::warn!("kriging variance {variance:e} clamped at zero");
            }
            variance = 0.0;
        }
        let crps = t.observed.map(|y| crps_or_abs(mean, variance, y));
        predictions.push(Prediction { mean, variance, observed: t.observed, crps });
    }
    Ok(PredictionResult { predictions, beta: gls.beta })
}

/// Targets reproducing every record of `data` (for interpolation checks).
pub fn targets_from(data: &Dataset) -> Vec<Target> {
    data.records
        .iter()
        .enumerate()
        .map(|(i, &(s, t))| Target {
            point: data.sites[s],
            time: t,
            design: data.design.row(i).iter().copied().collect(),
            observed: Some(data.response[i]),
        })
        .collect()
}
