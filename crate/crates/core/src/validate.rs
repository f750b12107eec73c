//! Numerical falsification checks for covariance validity: positive
//! definiteness on random instances, conditional negative definiteness,
//! convexity of powered radial profiles and Schur-product closure.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::models::{build_covariance_matrix, ModelError, SpaceTimeCovariance};
use crate::network::{Network, PointOnNetwork, SiteGeometry};

/// Relative eigenvalue tolerance for positive definiteness.
pub const PD_TOLERANCE: f64 = 1e-8;
/// Absolute tolerance on centred quadratic forms.
pub const CND_TOLERANCE: f64 = 1e-8;
/// Tolerance on second differences of powered profiles.
pub const CONVEXITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub check: String,
    pub instances: usize,
    /// Min scaled eigenvalue, max centred form or min second difference.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub witness: Option<String>,
    pub seed: u64,
}

impl ValidityReport {
    pub const CSV_HEADER: &'static str = "check,instances,worst,tolerance,pass,seed,witness";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{},{},{}",
            self.check,
            self.instances,
            self.worst,
            self.tolerance,
            self.pass,
            self.seed,
            self.witness.as_deref().unwrap_or("").replace(',', ";")
        )
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} {:>5} instances  worst {:>12.4e}  tol {:.0e}  {}",
            self.check,
            self.instances,
            self.worst,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        if let Some(w) = &self.witness {
            write!(f, "  [{w}]")?;
        }
        Ok(())
    }
}

/// Where random instances live.
#[derive(Debug, Clone, Copy)]
pub enum InstanceNetwork<'a> {
    Fixed(&'a Network),
    /// A fresh random directed tree per instance.
    RandomTrees { min_edges: usize, max_edges: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceConfig {
    pub instances: usize,
    /// Records per instance are drawn from `[max_records/2, max_records]`.
    pub max_records: usize,
    pub max_time: f64,
    pub seed: u64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self { instances: 50, max_records: 40, max_time: 10.0, seed: 20240601 }
    }
}

/// One random space-time configuration.
#[derive(Debug, Clone)]
pub struct Instance {
    pub net: Network,
    pub sites: Vec<PointOnNetwork>,
    pub records: Vec<(usize, f64)>,
}

impl Instance {
    pub fn geometry(&self) -> Result<SiteGeometry, ModelError> {
        Ok(SiteGeometry::new(&self.net, &self.sites)?)
    }
}

fn instance_rng(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64))
}

/// Draw instance `k` of a seeded family. Times sit on a half-unit lattice so
/// lags repeat, as in balanced designs.
pub fn random_instance(source: InstanceNetwork, cfg: &InstanceConfig, k: usize) -> Instance {
    let mut rng = instance_rng(cfg.seed, k);
    let net = match source {
        InstanceNetwork::Fixed(net) => net.clone(),
        InstanceNetwork::RandomTrees { min_edges, max_edges } => {
            let e = rng.random_range(min_edges..=max_edges.max(min_edges));
            Network::random_tree(&mut rng, e, 0.2, 2.0)
        }
    };
    let max_records = cfg.max_records.max(1);
    let n_records = rng.random_range(max_records.div_ceil(2)..=max_records);
    let n_sites = rng.random_range(1..=n_records.clamp(1, 12));
    let sites: Vec<PointOnNetwork> = (0..n_sites).map(|_| net.random_point(&mut rng)).collect();
    let mut records: Vec<(usize, f64)> = Vec::with_capacity(n_records);
    let slots = (cfg.max_time * 2.0).max(1.0) as u32;
    let mut attempts = 0;
    while records.len() < n_records && attempts < 50 * n_records {
        attempts += 1;
        let r = (rng.random_range(0..n_sites), f64::from(rng.random_range(0..=slots)) * 0.5);
        if !records.contains(&r) {
            records.push(r);
        }
    }
    Instance { net, sites, records }
}

fn min_eigenvalue(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue relative to the mean diagonal.
fn scaled_min_eigenvalue(m: DMatrix<f64>) -> f64 {
    let n = m.nrows().max(1) as f64;
    let scale = m.trace() / n;
    let lo = min_eigenvalue(m);
    if scale > 0.0 {
        lo / scale
    } else {
        lo
    }
}

fn eigen_report(
    check: &str,
    cfg: &InstanceConfig,
    stats: Vec<(usize, usize, f64)>,
) -> ValidityReport {
    let (k, n, worst) = stats.into_iter().fold((0, 0, f64::INFINITY), |acc, s| if s.2 < acc.2 { s } else { acc });
    let pass = worst >= -PD_TOLERANCE;
    ValidityReport {
        check: check.to_string(),
        instances: cfg.instances,
        worst,
        tolerance: PD_TOLERANCE,
        pass,
        witness: (!pass).then(|| format!("instance {k} ({n} records), scaled min eigenvalue {worst:e}")),
        seed: cfg.seed,
    }
}

/// Positive definiteness on random instances: pass iff every scaled minimum
/// eigenvalue is at least `-1e-8`.
pub fn check_pd<C: SpaceTimeCovariance + ?Sized>(
    cov: &C,
    source: InstanceNetwork,
    cfg: &InstanceConfig,
) -> Result<ValidityReport, ModelError> {
    let stats = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let inst = random_instance(source, cfg, k);
            let geom = inst.geometry()?;
            let m = build_covariance_matrix(cov, &geom, &inst.records)?;
            Ok((k, inst.records.len(), scaled_min_eigenvalue(m)))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(eigen_report("pd", cfg, stats))
}

/// Positive definiteness of the elementwise product of two covariance matrices.
pub fn check_schur_closure<A, B>(a: &A, b: &B, source: InstanceNetwork, cfg: &InstanceConfig) -> Result<ValidityReport, ModelError>
where
    A: SpaceTimeCovariance + ?Sized,
    B: SpaceTimeCovariance + ?Sized,
{
    let stats = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let inst = random_instance(source, cfg, k);
            let geom = inst.geometry()?;
            let ma = build_covariance_matrix(a, &geom, &inst.records)?;
            let mb = build_covariance_matrix(b, &geom, &inst.records)?;
            Ok((k, inst.records.len(), scaled_min_eigenvalue(ma.component_mul(&mb))))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(eigen_report("schur", cfg, stats))
}

/// Largest value of `aᵀ Ψ a` over unit vectors with `Σ a = 0`, where
/// `Ψ_ij = psi(dist_ij)`.
pub fn max_centered_form<F: Fn(f64) -> f64>(psi: F, dist: &DMatrix<f64>) -> f64 {
    let n = dist.nrows();
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let values = dist.map(&psi);
    // Orthonormal basis of the zero-sum subspace (Helmert contrasts).
    let basis = DMatrix::from_fn(n, n - 1, |i, k| {
        let k1 = (k + 1) as f64;
        let norm = (k1 * (k1 + 1.0)).sqrt();
        match i.cmp(&(k + 1)) {
            std::cmp::Ordering::Less => 1.0 / norm,
            std::cmp::Ordering::Equal => -k1 / norm,
            std::cmp::Ordering::Greater => 0.0,
        }
    });
    let reduced = basis.transpose() * values * &basis;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced).eigenvalues;
    eig.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Conditional negative definiteness of `psi(d)` over random point sets on
/// trees, using geodesic distance. Pass iff every centred form is `<= 1e-8`.
pub fn check_cnd<F: Fn(f64) -> f64 + Sync>(
    psi: F,
    source: InstanceNetwork,
    cfg: &InstanceConfig,
) -> Result<ValidityReport, ModelError> {
    let stats = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let inst = random_instance(source, cfg, k);
            let mut rng = instance_rng(cfg.seed ^ 0x5EED_C0DE, k);
            if !inst.net.is_tree() {
                return Err(ModelError::RequiresTree("cnd check"));
            }
            let n = rng.random_range(2..=cfg.max_records.max(2));
            let pts: Vec<PointOnNetwork> = (0..n).map(|_| inst.net.random_point(&mut rng)).collect();
            let dist = inst.net.geodesic_matrix(&pts)?;
            Ok((k, n, max_centered_form(&psi, &dist)))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let (k, n, worst) = stats.into_iter().fold((0, 0, f64::NEG_INFINITY), |acc, s| if s.2 > acc.2 { s } else { acc });
    let pass = worst <= CND_TOLERANCE;
    Ok(ValidityReport {
        check: "cnd".into(),
        instances: cfg.instances,
        worst,
        tolerance: CND_TOLERANCE,
        pass,
        witness: (!pass).then(|| format!("instance {k} ({n} points), centred form {worst:e}")),
        seed: cfg.seed,
    })
}

/// Convexity of `c0^(2⌈m/2⌉)` on `grid` by second differences, plus decay
/// `c0(last grid point) < 1e-3`.
pub fn check_power_convexity<F: Fn(f64) -> f64>(c0: F, leaves: usize, grid: &[f64]) -> ValidityReport {
    let power = (2 * leaves.div_ceil(2)).max(2) as i32;
    let f: Vec<f64> = grid.iter().map(|&t| c0(t).powi(power)).collect();
    let mut worst = f64::INFINITY;
    let mut at = f64::NAN;
    for i in 1..grid.len().saturating_sub(1) {
        let (x0, x1, x2) = (grid[i - 1], grid[i], grid[i + 1]);
        let second = (f[i + 1] - f[i]) - (f[i] - f[i - 1]) * (x2 - x1) / (x1 - x0);
        if second < worst {
            worst = second;
            at = x1;
        }
    }
    let tail = grid.last().map(|&t| c0(t)).unwrap_or(f64::NAN);
    let convex = worst >= -CONVEXITY_TOLERANCE;
    let decays = tail < 1e-3;
    let witness = if !convex {
        Some(format!("second difference {worst:e} at t = {at}"))
    } else if !decays {
        Some(format!("profile {tail:e} at t = {}", grid.last().unwrap()))
    } else {
        None
    };
    ValidityReport {
        check: "convexity".into(),
        instances: grid.len(),
        worst,
        tolerance: CONVEXITY_TOLERANCE,
        pass: convex && decays,
        witness,
        seed: 0,
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CovModel, ModelKind};

    #[test]
    fn nugget_only_is_identity() {
        let m = CovModel::new(ModelKind::Model5 { theta1: 1.0, theta2: 1.0, theta3: 1.0, theta4: 1.0 }, 0.0, 1.0);
        let cfg = InstanceConfig { instances: 5, ..Default::default() };
        let r = check_pd(&m, InstanceNetwork::RandomTrees { min_edges: 3, max_edges: 8 }, &cfg).unwrap();
        assert!(r.pass);
        // one record per site: the matrix is exactly the identity
        let inst = random_instance(InstanceNetwork::RandomTrees { min_edges: 3, max_edges: 8 }, &cfg, 0);
        let times: Vec<f64> = inst.sites.iter().map(|_| 0.0).collect();
        let k = crate::models::point_covariance_matrix(&m, &inst.net, &inst.sites, &times).unwrap();
        assert_eq!(k, DMatrix::identity(inst.sites.len(), inst.sites.len()));
        assert_eq!(min_eigenvalue(k), 1.0);
    }

    #[test]
    fn instances_are_reproducible() {
        let cfg = InstanceConfig::default();
        let src = InstanceNetwork::RandomTrees { min_edges: 3, max_edges: 10 };
        let a = random_instance(src, &cfg, 7);
        let b = random_instance(src, &cfg, 7);
        assert_eq!(a.records, b.records);
        assert_eq!(a.sites, b.sites);
        assert!(a.records.len() <= 40 && a.records.len() >= 20);
    }

    #[test]
    fn power_convexity_grid_checks() {
        let grid = linear_grid(0.0, 20.0, 2001);
        assert!(check_power_convexity(|t| (-t).exp(), 5, &grid).pass);
        let r = check_power_convexity(|t| (1.0 - t * t).max(0.0), 5, &grid);
        assert!(!r.pass && r.worst < 0.0);
        let slow = check_power_convexity(|t| 1.0 / (1.0 + t), 2, &linear_grid(0.0, 5.0, 100));
        assert!(!slow.pass && slow.worst >= 0.0);
    }
}
