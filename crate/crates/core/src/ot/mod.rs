//! Semi-discrete optimal transport from the uniform measure on a square to
//! the empirical measure of the samples, and the merge that relocates every
//! sample to the mass center of its power cell.

mod merge;
mod power;
mod solver;

pub use merge::{merge_cloud, MergeMap, MergeResult};
pub use power::{estimate_measures, quadrature_energy, CellEstimate, PowerGrid};
pub use solver::{solve_ot, OtConfig, OtFailure, OtSolution, PowerDiagramState, StepRecord};

use serde::{Deserialize, Serialize};

use crate::cloud::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

pub const DEFAULT_MARGIN: f64 = 0.05;

/// Axis-aligned square `[min.x, min.x + side] x [min.y, min.y + side]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub min: Vec2,
    pub side: f64,
}

impl Square {
    pub fn unit() -> Self {
        Square { min: Vec2::ZERO, side: 1.0 }
    }

    pub fn center(&self) -> Vec2 {
        self.min + Vec2::new(0.5, 0.5) * self.side
    }

    pub fn max(&self) -> Vec2 {
        self.min + Vec2::new(self.side, self.side)
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let hi = self.max();
        p.x >= self.min.x && p.x <= hi.x && p.y >= self.min.y && p.y <= hi.y
    }

    pub fn to_unit(&self, p: Vec2) -> Vec2 {
        (p - self.min) / self.side
    }

    pub fn from_unit(&self, u: Vec2) -> Vec2 {
        self.min + u * self.side
    }
}

/// Smallest axis-aligned square holding every sample, centered on the data,
/// padded by `margin` on each side. Degenerate extents are floored to a side
/// of one.
pub fn bounding_domain(cloud: &LabeledPointCloud, margin: f64) -> Result<Square> {
    let (lo, hi) = cloud
        .bounds()
        .ok_or_else(|| Error::InvalidCloud("cannot bound an empty cloud".into()))?;
    let extent = (hi.x - lo.x).max(hi.y - lo.y);
    let mut side = extent + 2.0 * margin;
    if extent == 0.0 {
        side = side.max(1.0);
    }
    let center = (lo + hi) * 0.5;
    Ok(Square { min: center - Vec2::new(0.5, 0.5) * side, side })
}

/// Sites, target masses and domain of one transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OtProblem {
    pub sites: Vec<Vec2>,
    pub measures: Vec<f64>,
    pub domain: Square,
}

impl OtProblem {
    pub fn new(sites: Vec<Vec2>, measures: Vec<f64>, domain: Square) -> Result<Self> {
        if sites.is_empty() || sites.len() != measures.len() {
            return Err(Error::InvalidCloud("sites and measures must be non-empty and equally long".into()));
        }
        if measures.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidCloud("target measures must be positive".into()));
        }
        let total: f64 = measures.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCloud(format!("target measures sum to {total}, expected 1")));
        }
        let mut keys: Vec<(u64, u64)> = sites.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCloud("transport sites must be distinct".into()));
        }
        if !(domain.side > 0.0) {
            return Err(Error::InvalidCloud("domain side must be positive".into()));
        }
        Ok(Self { sites, measures, domain })
    }

    /// Equal mass `1/n` per site.
    pub fn uniform(sites: Vec<Vec2>, domain: Square) -> Result<Self> {
        let n = sites.len().max(1);
        Self::new(sites, vec![1.0 / n as f64; n], domain)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}
