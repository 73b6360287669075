//! Seeded Gaussian-cluster clouds for tests and demos.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Label, LabeledPointCloud, Sample};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCluster {
    pub center: Vec2,
    pub sigma: f64,
    pub count: usize,
}

/// Isotropic Gaussian clusters, labeled in the given order; ids count up from `first_id`.
pub fn gaussian_clusters(clusters: &[GaussianCluster], seed: u64, first_id: u64) -> Result<LabeledPointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    let mut id = first_id;
    for (label, c) in clusters.iter().enumerate() {
        let normal = Normal::new(0.0, c.sigma).map_err(|e| Error::InvalidCloud(e.to_string()))?;
        for _ in 0..c.count {
            let offset = Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng));
            samples.push(Sample { id, position: c.center + offset, label: label as Label });
            id += 1;
        }
    }
    LabeledPointCloud::new(samples, clusters.len())
}

/// Four clusters of `count` points at the corners of a square of side `spread`.
pub fn four_gaussians(count: usize, spread: f64, sigma: f64, seed: u64) -> LabeledPointCloud {
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    let clusters: Vec<GaussianCluster> = corners
        .iter()
        .map(|&(x, y)| GaussianCluster { center: Vec2::new(x, y) * spread, sigma, count })
        .collect();
    gaussian_clusters(&clusters, seed, 0).expect("fixed fixture parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_cloud() {
        assert_eq!(four_gaussians(50, 4.0, 1.0, 3), four_gaussians(50, 4.0, 1.0, 3));
        assert_ne!(four_gaussians(50, 4.0, 1.0, 3), four_gaussians(50, 4.0, 1.0, 4));
    }

    #[test]
    fn sample_mean_near_center() {
        let c = gaussian_clusters(
            &[GaussianCluster { center: Vec2::new(2.0, -1.0), sigma: 0.5, count: 4000 }],
            1,
            10,
        )
        .unwrap();
        let mean = c.positions().iter().fold(Vec2::ZERO, |a, &p| a + p) / c.len() as f64;
        // Standard error 0.5 / sqrt(4000) ~ 0.008.
        assert!((mean - Vec2::new(2.0, -1.0)).norm() < 0.04);
        assert_eq!(c.samples()[0].id, 10);
    }
}
