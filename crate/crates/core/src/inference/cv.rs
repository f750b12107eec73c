//! Site-wise k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::models::CovModel;

use super::data::point_order;
use super::fit::{fit_ml, FitOptions, FitSpec};
use super::kriging::{krige, targets_from};
use super::{Dataset, InferenceError};

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Held-out sites as `edge:offset`.
    pub held_out: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub loglik: f64,
    pub bic: f64,
    pub rmspe: f64,
    pub crps: f64,
    pub model: CovModel,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub seed: u64,
    pub mean_loglik: f64,
    pub mean_bic: f64,
    pub mean_rmspe: f64,
    pub mean_crps: f64,
}

impl CvReport {
    pub const CSV_HEADER: &'static str = "fold,n_train,n_test,LL,BIC,RMSPE,CRPS";

    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows: Vec<String> = self
            .folds
            .iter()
            .map(|f| format!("{},{},{},{},{},{},{}", f.fold, f.n_train, f.n_test, f.loglik, f.bic, f.rmspe, f.crps))
            .collect();
        rows.push(format!("mean,,,{},{},{},{}", self.mean_loglik, self.mean_bic, self.mean_rmspe, self.mean_crps));
        rows
    }
}

/// Fold index of each site (indexed like `data.sites`). Sites are put in
/// canonical point order, shuffled by the seed and dealt round-robin, so the
/// assignment does not depend on input order.
pub fn fold_assignment(data: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>, InferenceError> {
    let n = data.sites.len();
    if k < 2 || k > n {
        return Err(InferenceError::InvalidFold(format!("{k} folds for {n} sites")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| point_order(&data.sites[a], &data.sites[b]));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &s) in order.iter().enumerate() {
        fold[s] = pos % k;
    }
    Ok(fold)
}

/// Fit on all but one fold of sites, krige the held-out sites, repeat.
pub fn cross_validate(
    data: &Dataset,
    spec: &FitSpec,
    opts: &FitOptions,
    k: usize,
    seed: u64,
) -> Result<CvReport, InferenceError> {
    let assignment = fold_assignment(data, k, seed)?;
    let folds = (0..k)
        .into_par_iter()
        .map(|f| {
            let held: Vec<usize> = (0..data.sites.len()).filter(|&s| assignment[s] == f).collect();
            let kept: Vec<usize> = (0..data.sites.len()).filter(|&s| assignment[s] != f).collect();
            let train = data.restrict_to_sites(&kept)?;
            let test = data.restrict_to_sites(&held)?;
            let fit = fit_ml(&train, spec, opts)?;
            let pred = krige(&train, &fit.model, &targets_from(&test))?;
            Ok(FoldResult {
                fold: f,
                held_out: test.sites.iter().map(|p| data.net.format_point(p)).collect(),
                n_train: train.len(),
                n_test: test.len(),
                loglik: fit.loglik,
                bic: fit.bic,
                rmspe: pred.rmspe().unwrap_or(f64::NAN),
                crps: pred.mean_crps().unwrap_or(f64::NAN),
                model: fit.model,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    let mean = |g: fn(&FoldResult) -> f64| folds.iter().map(g).sum::<f64>() / folds.len() as f64;
    Ok(CvReport {
        mean_loglik: mean(|f| f.loglik),
        mean_bic: mean(|f| f.bic),
        mean_rmspe: mean(|f| f.rmspe),
        mean_crps: mean(|f| f.crps),
        folds,
        seed,
    })
}
