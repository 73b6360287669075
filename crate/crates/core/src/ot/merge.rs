//! Relocation of samples to their power-cell mass centers, and the
//! piecewise-linear merge map `o` it induces.

use super::solver::PowerDiagramState;
use crate::cloud::LabeledPointCloud;
use crate::error::{Error, Result};
use crate::geometry::delaunay::{triangulate, untangle};
use crate::geometry::predicates::orient;
use crate::geometry::{Locator, MapEval, Vec2};

/// Barycentric slack within which a query counts as sitting on a vertex.
const VERTEX_SLACK: f64 = 1e-12;

/// Merge map between original sample positions and merged positions.
///
/// The connectivity is a triangulation of the merged positions, so the
/// merged side is always a valid mesh. On the original side the transport
/// map may fold a few triangles spanning the gaps between clusters; points
/// that locate in a fold, or in an overlap of two unfolded triangles, come
/// back flagged as `extrapolated` because the map is not invertible there.
#[derive(Debug, Clone)]
pub struct MergeMap {
    triangles: Vec<[usize; 3]>,
    original: Vec<Vec2>,
    merged: Vec<Vec2>,
    folded: Vec<bool>,
    original_locator: Locator,
    merged_locator: Locator,
}

impl MergeMap {
    /// Builds the map on given connectivity, which must be positively
    /// oriented at the merged positions.
    pub fn new(triangles: Vec<[usize; 3]>, original: Vec<Vec2>, merged: Vec<Vec2>) -> Result<Self> {
        if original.len() != merged.len() {
            return Err(Error::InvalidMesh(format!(
                "{} original positions for {} merged positions",
                original.len(),
                merged.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= merged.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if orient(merged[tri[0]], merged[tri[1]], merged[tri[2]]) <= 0.0 {
                return Err(Error::InvalidMesh(format!("merged triangle {t} is not counterclockwise")));
            }
        }
        let folded = triangles
            .iter()
            .map(|t| orient(original[t[0]], original[t[1]], original[t[2]]) <= 0.0)
            .collect();
        let original_locator = Locator::new(&original, &triangles);
        let merged_locator = Locator::new(&merged, &triangles);
        Ok(Self { triangles, original, merged, folded, original_locator, merged_locator })
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn original_positions(&self) -> &[Vec2] {
        &self.original
    }

    pub fn merged_positions(&self) -> &[Vec2] {
        &self.merged
    }

    /// Triangles whose original-side image is not positively oriented.
    pub fn folded_count(&self) -> usize {
        self.folded.iter().filter(|&&f| f).count()
    }

    pub fn is_folded(&self, t: usize) -> bool {
        self.folded[t]
    }

    /// Unfolded triangles containing `q` on the original side.
    fn original_hits(&self, q: Vec2) -> Vec<(usize, [f64; 3])> {
        self.original_locator.candidates(q).into_iter().filter(|&(t, _)| !self.folded[t]).collect()
    }

    fn interpolate(values: &[Vec2], tri: [usize; 3], c: [f64; 3]) -> Vec2 {
        values[tri[0]] * c[0] + values[tri[1]] * c[1] + values[tri[2]] * c[2]
    }

    /// `o`: original position to merged position. A query on a sample
    /// vertex returns that sample's merged position, even inside an overlap.
    pub fn forward(&self, q: Vec2) -> MapEval {
        let all = self.original_locator.candidates(q);
        if let Some(&(t, c)) = all.iter().find(|(_, c)| c.iter().any(|&v| v >= 1.0 - VERTEX_SLACK)) {
            let k = (0..3).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
            let mut coords = [0.0; 3];
            coords[k] = 1.0;
            let point = self.merged[self.triangles[t][k]];
            return MapEval { point, extrapolated: false, triangle: t, coords };
        }
        let hits: Vec<(usize, [f64; 3])> = all.into_iter().filter(|&(t, _)| !self.folded[t]).collect();
        let chosen = hits
            .iter()
            .max_by(|a, b| {
                let ma = a.1[0].min(a.1[1]).min(a.1[2]);
                let mb = b.1[0].min(b.1[1]).min(b.1[2]);
                ma.total_cmp(&mb).then(b.0.cmp(&a.0))
            })
            .copied();
        let (triangle, coords, flagged) = match chosen {
            Some((t, c)) => (t, clamp(c), hits.len() > 1 && !shared_edge_hit(&hits)),
            None => {
                let loc = self.original_locator.locate(q);
                (loc.triangle(), loc.coords(), true)
            }
        };
        let point = Self::interpolate(&self.merged, self.triangles[triangle], coords);
        MapEval { point, extrapolated: flagged, triangle, coords }
    }

    /// `o^-1`: merged position to original position.
    pub fn inverse(&self, q: Vec2) -> MapEval {
        let loc = self.merged_locator.locate(q);
        let (triangle, coords) = (loc.triangle(), loc.coords());
        let point = Self::interpolate(&self.original, self.triangles[triangle], coords);
        let mut flagged = loc.is_outside() || self.folded[triangle];
        if !flagged {
            let hits = self.original_hits(point);
            flagged = hits.len() > 1 && !shared_edge_hit(&hits);
        }
        MapEval { point, extrapolated: flagged, triangle, coords }
    }
}

/// Several hits that are all the same point on shared edges or vertices are
/// not an overlap: each hit has a zero coordinate.
fn shared_edge_hit(hits: &[(usize, [f64; 3])]) -> bool {
    hits.iter().all(|(_, c)| c.iter().any(|&v| v.abs() <= 1e-9))
}

fn clamp(c: [f64; 3]) -> [f64; 3] {
    let c = c.map(|v| v.max(0.0));
    let s = c[0] + c[1] + c[2];
    c.map(|v| v / s)
}

#[derive(Debug, Clone)]
pub struct MergeResult {
    /// Samples relocated to their power-cell mass centers, ids and labels kept.
    pub merged: LabeledPointCloud,
    pub map: MergeMap,
}

impl MergeResult {
    /// Triangles folded on the original side; nonzero means `o` is only
    /// invertible away from those folds.
    pub fn folded(&self) -> usize {
        self.map.folded_count()
    }
}

/// Moves every sample of `cloud` (the OT sites, in order) to its cell's mass
/// center. The merge map triangulates the merged positions, then flips edges
/// to remove as many folds on the original side as possible.
pub fn merge_cloud(cloud: &LabeledPointCloud, state: &PowerDiagramState) -> Result<MergeResult> {
    if state.centroids.len() != cloud.len() {
        return Err(Error::InvalidCloud(format!(
            "{} centroids for {} samples",
            state.centroids.len(),
            cloud.len()
        )));
    }
    if !state.empty.is_empty() {
        return Err(Error::EmptyCellPersistent(state.empty[0], state.steps));
    }
    let merged = cloud.with_positions(&state.centroids);
    let original = cloud.positions();
    let tri = triangulate(&state.centroids)?;
    let (triangles, folded) = untangle(tri.triangles, &state.centroids, &original);
    if folded > 0 {
        log::warn!("merge map folds {folded} triangles on the original side");
    }
    let map = MergeMap::new(triangles, original, state.centroids.clone())?;
    Ok(MergeResult { merged, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Sample;
    use crate::ot::{solve_ot, OtConfig, OtProblem, Square};

    #[test]
    fn samples_map_to_their_centroids() {
        let samples = vec![
            Sample { id: 0, position: Vec2::new(0.1, 0.5), label: 0 },
            Sample { id: 1, position: Vec2::new(0.9, 0.5), label: 1 },
            Sample { id: 2, position: Vec2::new(0.5, 0.9), label: 1 },
        ];
        let cloud = LabeledPointCloud::new(samples, 2).unwrap();
        let p = OtProblem::uniform(cloud.positions(), Square::unit()).unwrap();
        let s = solve_ot(&p, &OtConfig::default()).unwrap();
        let r = merge_cloud(&cloud, &s.state).unwrap();
        for (i, s) in r.merged.samples().iter().enumerate() {
            assert_eq!(s.position, r.map.merged_positions()[i]);
            assert_eq!(r.map.forward(cloud.samples()[i].position).point, s.position);
            assert_eq!(r.map.inverse(s.position).point, cloud.samples()[i].position);
        }
    }

    #[test]
    fn folds_are_flagged_not_inverted() {
        // Merged: a unit square split along 0-2; original: vertex 3 pulled
        // across so triangle (0, 2, 3) folds.
        let merged = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];
        let original = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.8, 0.2)];
        let map = MergeMap::new(vec![[0, 1, 2], [0, 2, 3]], original, merged).unwrap();
        assert_eq!(map.folded_count(), 1);
        assert!(map.inverse(Vec2::new(0.2, 0.6)).extrapolated);
        // The fold's image overlaps triangle 0; forward evaluation only uses
        // unfolded triangles, so points there still round-trip.
        let e = map.inverse(Vec2::new(0.7, 0.2));
        assert!(!e.extrapolated);
        // Vertex 3 sits inside unfolded triangle 0 but keeps its own image.
        let v = map.forward(Vec2::new(0.8, 0.2));
        assert_eq!(v.point, Vec2::new(0.0, 1.0));
        assert!(!v.extrapolated);
        assert!((map.forward(e.point).point - Vec2::new(0.7, 0.2)).norm() < 1e-12);
        let far = map.forward(Vec2::new(0.9, 0.1));
        assert!(!far.extrapolated);
        let back = map.inverse(far.point);
        assert!((back.point - Vec2::new(0.9, 0.1)).norm() < 1e-12);
    }
}
