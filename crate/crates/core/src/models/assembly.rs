//! Covariance matrix assembly over (site, time) records.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::network::{Network, PointOnNetwork, SiteGeometry};

use super::{ModelError, SpaceTimeCovariance, SpaceTimeSeparation};

/// Precomputed pairing of records into distinct (site pair, time lag)
/// combinations, so that repeated assemblies over the same records evaluate
/// each combination once.
#[derive(Debug, Clone)]
pub struct CovarianceLayout {
    n: usize,
    combos: Vec<(usize, usize, f64)>,
    index: Vec<u32>,
}

impl CovarianceLayout {
    /// `records` are `(site index, time)` pairs.
    pub fn new(records: &[(usize, f64)]) -> Self {
        let n = records.len();
        let mut lookup: HashMap<(usize, usize, u64), u32> = HashMap::new();
        let mut combos = Vec::new();
        let mut index = vec![0u32; n * n];
        for i in 0..n {
            for j in i..n {
                let (si, ti) = records[i];
                let (sj, tj) = records[j];
                let (a, b) = if si <= sj { (si, sj) } else { (sj, si) };
                let lag = (ti - tj).abs();
                let key = (a, b, lag.to_bits());
                let k = *lookup.entry(key).or_insert_with(|| {
                    combos.push((a, b, lag));
                    (combos.len() - 1) as u32
                });
                index[i * n + j] = k;
                index[j * n + i] = k;
            }
        }
        Self { n, combos, index }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of distinct evaluations per assembly.
    pub fn distinct(&self) -> usize {
        self.combos.len()
    }

    pub fn assemble<C: SpaceTimeCovariance + ?Sized>(&self, cov: &C, geom: &SiteGeometry) -> Result<DMatrix<f64>, ModelError> {
        cov.check_geometry(geom)?;
        if let Some(&(_, b, _)) = self.combos.iter().max_by_key(|c| c.1) {
            if b >= geom.len() {
                return Err(ModelError::DimensionMismatch(format!("site index {b} with {} sites", geom.len())));
            }
        }
        let values = self
            .combos
            .par_iter()
            .map(|&(a, b, u)| cov.covariance(&SpaceTimeSeparation::between(geom, a, b, u)))
            .collect::<Result<Vec<f64>, ModelError>>()?;
        let n = self.n;
        Ok(DMatrix::from_fn(n, n, |i, j| values[self.index[i * n + j] as usize]))
    }
}

/// Symmetric covariance matrix over `(site, time)` records.
pub fn build_covariance_matrix<C: SpaceTimeCovariance + ?Sized>(
    cov: &C,
    geom: &SiteGeometry,
    records: &[(usize, f64)],
) -> Result<DMatrix<f64>, ModelError> {
    CovarianceLayout::new(records).assemble(cov, geom)
}

/// Cross-covariance between two record lists on the same geometry.
pub fn cross_covariance<C: SpaceTimeCovariance + ?Sized>(
    cov: &C,
    geom: &SiteGeometry,
    rows: &[(usize, f64)],
    cols: &[(usize, f64)],
) -> Result<DMatrix<f64>, ModelError> {
    cov.check_geometry(geom)?;
    if rows.iter().chain(cols).any(|r| r.0 >= geom.len()) {
        return Err(ModelError::DimensionMismatch("record site outside the geometry".into()));
    }
    let entries = rows
        .par_iter()
        .map(|&(si, ti)| {
            cols.iter()
                .map(|&(sj, tj)| cov.covariance(&SpaceTimeSeparation::between(geom, si, sj, (ti - tj).abs())))
                .collect::<Result<Vec<f64>, ModelError>>()
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| entries[i][j]))
}

/// Covariance matrix for one record per point, `times[i]` at `points[i]`.
pub fn point_covariance_matrix<C: SpaceTimeCovariance + ?Sized>(
    cov: &C,
    net: &Network,
    points: &[PointOnNetwork],
    times: &[f64],
) -> Result<DMatrix<f64>, ModelError> {
    if points.len() != times.len() {
        return Err(ModelError::DimensionMismatch(format!("{} points, {} times", points.len(), times.len())));
    }
    let geom = SiteGeometry::new(net, points)?;
    let records: Vec<(usize, f64)> = times.iter().enumerate().map(|(i, &t)| (i, t)).collect();
    build_covariance_matrix(cov, &geom, &records)
}
