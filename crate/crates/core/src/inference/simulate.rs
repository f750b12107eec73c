//! Gaussian field simulation and synthetic datasets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::models::{build_covariance_matrix, CovModel};
use crate::network::{Network, PointOnNetwork, SiteGeometry};

use super::likelihood::Factor;
use super::{Dataset, InferenceError};

/// Independent generator for a named purpose derived from one seed.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a of the name, mixed into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Seed for a named purpose, drawn from [`substream`].
pub fn derived_seed(seed: u64, name: &str) -> u64 {
    substream(seed, name).random()
}

/// `mean + L ε` with `LLᵀ = Σ` over the given records.
pub fn simulate_field(
    net: &Network,
    sites: &[PointOnNetwork],
    records: &[(usize, f64)],
    mean: &DVector<f64>,
    model: &CovModel,
    seed: u64,
) -> Result<DVector<f64>, InferenceError> {
    if mean.len() != records.len() {
        return Err(InferenceError::DimensionMismatch(format!("{} means for {} records", mean.len(), records.len())));
    }
    let geom = SiteGeometry::new(net, sites)?;
    let sigma = build_covariance_matrix(model, &geom, records)?;
    let factor = Factor::new(sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = DVector::from_iterator(records.len(), (0..records.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(mean + factor.lower_times(&eps))
}

/// Fresh response for the records and design of `data`, with mean `Xβ`.
pub fn simulate(data: &Dataset, model: &CovModel, beta: &DVector<f64>, seed: u64) -> Result<DVector<f64>, InferenceError> {
    if beta.len() != data.design.ncols() {
        return Err(InferenceError::DimensionMismatch("beta length".into()));
    }
    let mean = &data.design * beta;
    simulate_field(&data.net, &data.sites, &data.records, &mean, model, seed)
}

/// Shape of a synthetic tree dataset: every site observed at times `1..=n_times`.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticDesign {
    pub n_edges: usize,
    pub n_sites: usize,
    pub n_times: usize,
    /// Standard normal covariates beyond the intercept.
    pub n_covariates: usize,
    pub min_length: f64,
    pub max_length: f64,
}

impl Default for SyntheticDesign {
    fn default() -> Self {
        Self { n_edges: 30, n_sites: 60, n_times: 8, n_covariates: 1, min_length: 1.0, max_length: 5.0 }
    }
}

/// Random directed tree, random sites, balanced times and a response drawn
/// from `model` with mean `Xβ`.
pub fn synthetic_dataset(
    design: &SyntheticDesign,
    model: &CovModel,
    beta: &[f64],
    seed: u64,
) -> Result<Dataset, InferenceError> {
    if beta.len() != design.n_covariates + 1 {
        return Err(InferenceError::DimensionMismatch("beta must have one entry per covariate plus the intercept".into()));
    }
    let mut rng = substream(seed, "network");
    let net = Network::random_tree(&mut rng, design.n_edges, design.min_length, design.max_length);
    let mut rng = substream(seed, "sites");
    let mut sites: Vec<PointOnNetwork> = Vec::with_capacity(design.n_sites);
    while sites.len() < design.n_sites {
        let p = net.random_point(&mut rng);
        if !sites.contains(&p) {
            sites.push(p);
        }
    }
    let records: Vec<(usize, f64)> =
        (0..design.n_sites).flat_map(|s| (1..=design.n_times).map(move |t| (s, t as f64))).collect();
    let n = records.len();
    let mut rng = substream(seed, "covariates");
    let x = DMatrix::from_fn(n, design.n_covariates + 1, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let mean = &x * DVector::from_column_slice(beta);
    let z = simulate_field(&net, &sites, &records, &mean, model, substream(seed, "field").random())?;
    Dataset::new(net, sites, records, z, x)
}
