//! Covariance surfaces over a (distance, lag) grid with the two marginals,
//! written as CSV for external plotting.

use std::io::Write;

use crate::models::{CovModel, ModelError, ModelKind, SpaceTimeSeparation};
use crate::network::FlowRelation;

/// Evenly spaced grid `[0, d_max] × [0, u_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGrid {
    pub d_max: f64,
    pub u_max: f64,
    pub d_res: usize,
    pub u_res: usize,
}

impl SurfaceGrid {
    pub fn new(d_max: f64, u_max: f64, d_res: usize, u_res: usize) -> Result<Self, ModelError> {
        if d_res < 2 || u_res < 2 {
            return Err(ModelError::DimensionMismatch("grid resolution must be at least 2 per axis".into()));
        }
        if !(d_max > 0.0 && u_max > 0.0 && d_max.is_finite() && u_max.is_finite()) {
            return Err(ModelError::DimensionMismatch("grid extents must be positive".into()));
        }
        Ok(Self { d_max, u_max, d_res, u_res })
    }

    pub fn distances(&self) -> Vec<f64> {
        axis(self.d_max, self.d_res)
    }

    pub fn lags(&self) -> Vec<f64> {
        axis(self.u_max, self.u_res)
    }
}

fn axis(max: f64, res: usize) -> Vec<f64> {
    (0..res).map(|i| max * i as f64 / (res - 1) as f64).collect()
}

/// How a stream distance is read for flow-dependent models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowMode {
    /// Flow-connected pair with the given tail-up weight.
    Connected { weight: f64 },
    /// Flow-unconnected pair; `split` is the share of `d` on the first branch.
    Unconnected { split: f64 },
}

impl Default for FlowMode {
    fn default() -> Self {
        FlowMode::Connected { weight: 1.0 }
    }
}

/// Separation used for the surface cell `(d, u)`.
pub fn surface_separation(kind: &ModelKind, mode: FlowMode, d: f64, u: f64) -> SpaceTimeSeparation {
    let flow_based = matches!(kind, ModelKind::Model4 { .. } | ModelKind::TailUp(_) | ModelKind::TailDown(_) | ModelKind::ProductSum { .. });
    if !flow_based {
        return SpaceTimeSeparation::isotropic(d, u);
    }
    // Unconnected surfaces keep the unconnected branch at d = 0 (its limit).
    let (relation, weight) = match mode {
        FlowMode::Connected { .. } if d == 0.0 => (FlowRelation::SamePoint, 1.0),
        FlowMode::Connected { weight } => (FlowRelation::FlowConnected { d }, weight),
        FlowMode::Unconnected { split } => {
            let a = d * split;
            (FlowRelation::FlowUnconnected { d, a, b: d - a }, 0.0)
        }
    };
    SpaceTimeSeparation::with_flow(relation, weight, u)
}

/// `σ² C0(d, u)`; the nugget is left out.
pub fn surface_value(model: &CovModel, mode: FlowMode, d: f64, u: f64) -> Result<f64, ModelError> {
    Ok(model.sigma2 * model.kind.correlation(&surface_separation(&model.kind, mode, d, u))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    /// `(d, u, C)` with `u` varying fastest.
    pub grid: Vec<(f64, f64, f64)>,
    /// `(d, C(d, 0))`
    pub spatial: Vec<(f64, f64)>,
    /// `(u, C(0, u))`
    pub temporal: Vec<(f64, f64)>,
}

pub fn emit_surface(model: &CovModel, grid: &SurfaceGrid, mode: FlowMode) -> Result<Surface, ModelError> {
    model.validate()?;
    let ds = grid.distances();
    let us = grid.lags();
    let mut cells = Vec::with_capacity(ds.len() * us.len());
    for &d in &ds {
        for &u in &us {
            cells.push((d, u, surface_value(model, mode, d, u)?));
        }
    }
    let spatial = ds.iter().map(|&d| Ok((d, surface_value(model, mode, d, 0.0)?))).collect::<Result<_, ModelError>>()?;
    let temporal = us.iter().map(|&u| Ok((u, surface_value(model, mode, 0.0, u)?))).collect::<Result<_, ModelError>>()?;
    Ok(Surface { grid: cells, spatial, temporal })
}

impl Surface {
    /// Values use the shortest representation that parses back to the same `f64`.
    pub fn write_grid<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "d,u,C")?;
        for (d, u, c) in &self.grid {
            writeln!(w, "{d},{u},{c}")?;
        }
        Ok(())
    }

    pub fn write_spatial<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "d,f_S")?;
        for (d, c) in &self.spatial {
            writeln!(w, "{d},{c}")?;
        }
        Ok(())
    }

    pub fn write_temporal<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u,f_T")?;
        for (u, c) in &self.temporal {
            writeln!(w, "{u},{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid() {
        let m = CovModel::new(ModelKind::Model1 { c: 1.0, nu: 1.0, kappa: 1.0, beta: 0.5, tau: 0.5, b: 1.0 }, 1.0, 0.3);
        let s = emit_surface(&m, &SurfaceGrid::new(2.0, 3.0, 2, 2).unwrap(), FlowMode::default()).unwrap();
        assert_eq!(s.grid.len(), 4);
        assert_eq!(s.grid[0], (0.0, 0.0, 1.0));
        assert_eq!(s.grid[3].0, 2.0);
        assert_eq!(s.grid[3].1, 3.0);
        assert!(SurfaceGrid::new(1.0, 1.0, 1, 5).is_err());
    }

    #[test]
    fn unconnected_model4_stays_below_half() {
        let m = CovModel::new(ModelKind::Model4 { theta1: 1.0, theta2: 1.0, theta3: 1.0, theta4: 1.0 }, 1.0, 0.0);
        let grid = SurfaceGrid::new(4.0, 4.0, 9, 9).unwrap();
        let s = emit_surface(&m, &grid, FlowMode::Unconnected { split: 0.5 }).unwrap();
        assert!(s.grid.iter().all(|c| c.2 <= 0.5));
        assert_eq!(s.grid[0].2, 0.5);
        let s = emit_surface(&m, &grid, FlowMode::Connected { weight: 0.5 }).unwrap();
        assert_eq!(s.grid[0].2, 1.0);
    }
}
