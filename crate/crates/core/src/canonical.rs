//! Straightening a labeled mesh onto the unit square.
//!
//! The four corner vertices go to the square's corners and the rest of the
//! boundary follows by arc length. Interior chains become straight segments
//! (inverse-chord rows), interior nodes take mean-value rows over their graph
//! neighbors, and the remaining vertices are harmonic. Faces of the result
//! are convex polygons.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cloud::Label;
use crate::error::{Error, Result};
use crate::geometry::graph::DEFAULT_ISLAND_THRESHOLD;
use crate::geometry::predicates::{orient, signed_area};
use crate::geometry::{extract_regions_and_graph, DecoratedMesh, FeatureGraph, Location, PiecewiseLinearMap, Vec2};
use crate::linsys::{cotangent_weights, mean_value_weights, sort_by_angle, ConstrainedLaplacianSystem, WeightScheme};

pub const UNIT_CORNERS: [Vec2; 4] = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)];

/// Largest free-row residual accepted from the linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Turns below this (in absolute cross-product terms) count as straight.
const TURN_EPS: f64 = 1e-12;
const MAX_SPLIT_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReport {
    pub flipped: usize,
    pub residual: f64,
    /// Largest distance of a chain vertex from the segment between its end nodes.
    pub collinearity: f64,
    pub nonconvex_faces: Vec<Label>,
    pub area_sum: f64,
    pub negative_weights: usize,
    pub interior_weights: WeightScheme,
    pub steiner_vertices: usize,
}

impl CanonicalReport {
    pub fn is_valid(&self) -> bool {
        self.flipped == 0
            && self.residual <= RESIDUAL_TOLERANCE
            && self.nonconvex_faces.is_empty()
            && (self.area_sum - 1.0).abs() <= 1e-6
    }
}

/// A straightened domain: the map from the input mesh (carrying the feature
/// graph) to the unit square.
#[derive(Debug, Clone)]
pub struct CanonicalDomain {
    map: PiecewiseLinearMap,
    report: CanonicalReport,
}

impl CanonicalDomain {
    /// Wraps known canonical positions of `mesh` and recomputes the report,
    /// residual included, against the system for `interior_weights`.
    /// Invalid positions are reported, not rejected.
    pub fn from_positions(
        mesh: DecoratedMesh,
        positions: Vec<Vec2>,
        interior_weights: WeightScheme,
        steiner_vertices: usize,
    ) -> Result<Self> {
        if !matches!(interior_weights, WeightScheme::InteriorCotangent | WeightScheme::InteriorMeanValue) {
            return Err(Error::InvalidMesh(format!("{interior_weights:?} is not an interior weight scheme")));
        }
        if positions.len() != mesh.vertex_count() {
            return Err(Error::InvalidMesh(format!("{} positions for {} vertices", positions.len(), mesh.vertex_count())));
        }
        if mesh.graph.is_none() {
            return Err(Error::InvalidMesh("mesh has no feature graph".into()));
        }
        let sys = assemble(&mesh, interior_weights);
        let report = verify_positions(&mesh, &positions, &sys, interior_weights, steiner_vertices)?;
        let map = PiecewiseLinearMap::new(mesh, positions)?;
        Ok(Self { map, report })
    }

    pub fn map(&self) -> &PiecewiseLinearMap {
        &self.map
    }

    pub fn mesh(&self) -> &DecoratedMesh {
        self.map.source_mesh()
    }

    pub fn graph(&self) -> &FeatureGraph {
        self.mesh().graph.as_ref().expect("canonical domains carry a graph")
    }

    pub fn positions(&self) -> &[Vec2] {
        self.map.target_positions()
    }

    pub fn report(&self) -> &CanonicalReport {
        &self.report
    }

    /// Corner points of the face of `label`, counterclockwise.
    pub fn face_polygon(&self, label: Label) -> Option<Vec<Vec2>> {
        let face = self.graph().face(label)?;
        Some(polygon_corners(&face.boundary, self.positions()))
    }

    /// Class of the canonical point `q`. Points on a shared edge or vertex go
    /// to the smallest label touching them; points outside the square go to
    /// the nearest triangle.
    pub fn locate_class(&self, q: Vec2) -> Label {
        let mesh = self.mesh();
        let loc = self.map.locate(q, crate::geometry::Direction::Inverse);
        match loc {
            Location::Inside { triangle, coords } if coords.iter().any(|&c| c.abs() <= 1e-12) => {
                // On an edge or vertex: collect every triangle around it.
                let tri = mesh.triangles[triangle];
                let on: Vec<usize> = (0..3).filter(|&k| coords[k].abs() > 1e-12).map(|k| tri[k]).collect();
                mesh.triangles
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| on.iter().all(|v| t.contains(v)))
                    .map(|(i, _)| mesh.triangle_labels[i])
                    .min()
                    .unwrap_or(mesh.triangle_labels[triangle])
            }
            _ => mesh.triangle_labels[loc.triangle()],
        }
    }
}

/// Loop vertices where the boundary turns.
fn polygon_corners(loop_: &[usize], x: &[Vec2]) -> Vec<Vec2> {
    let m = loop_.len();
    let mut out = Vec::new();
    for k in 0..m {
        let (a, b, c) = (x[loop_[(k + m - 1) % m]], x[loop_[k]], x[loop_[(k + 1) % m]]);
        if (b - a).cross(c - b).abs() > TURN_EPS {
            out.push(b);
        }
    }
    out
}

/// Straight groups of the canonical layout: each interior chain with its end
/// nodes and each side of the square with its corners.
fn straight_groups(mesh: &DecoratedMesh) -> Vec<Vec<usize>> {
    let g = mesh.graph.as_ref().unwrap();
    let mut groups: Vec<Vec<usize>> = g.interior_chains().map(|c| c.vertices.clone()).collect();
    let bl = &mesh.boundary_loop;
    let m = bl.len();
    let start = bl.iter().position(|&v| v == g.corners[0]).unwrap();
    let mut side = vec![g.corners[0]];
    for i in 1..=m {
        let v = bl[(start + i) % m];
        side.push(v);
        if g.corners.contains(&v) {
            groups.push(std::mem::replace(&mut side, vec![v]));
        }
    }
    groups
}

/// Chords: edges joining two non-consecutive vertices of one straight group
/// inside a triangle whose vertices all lie in that group.
fn degenerate_chords(mesh: &DecoratedMesh) -> BTreeSet<(usize, usize)> {
    let mut chords = BTreeSet::new();
    for group in straight_groups(mesh) {
        let order: BTreeMap<usize, usize> = group.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        for tri in &mesh.triangles {
            if let (Some(&a), Some(&b), Some(&c)) = (order.get(&tri[0]), order.get(&tri[1]), order.get(&tri[2])) {
                let lo = a.min(b).min(c);
                let hi = a.max(b).max(c);
                let (u, v) = (group[lo], group[hi]);
                chords.insert((u.min(v), u.max(v)));
            }
        }
    }
    chords
}

/// Splits each listed edge at its midpoint; new vertices take the label of
/// the triangles around them.
fn split_edges(mesh: &DecoratedMesh, edges: &BTreeSet<(usize, usize)>) -> Result<DecoratedMesh> {
    let mut vertices = mesh.vertices.clone();
    let mut ids = mesh.vertex_ids.clone();
    let mut vlabels = mesh.vertex_labels.clone();
    let mut next_id = ids.iter().max().map_or(0, |m| m + 1);
    // One split per triangle per round keeps the result conforming.
    let mut busy = vec![false; mesh.triangles.len()];
    let mut chosen = Vec::new();
    for &(u, v) in edges {
        let around: Vec<usize> =
            (0..mesh.triangles.len()).filter(|&t| mesh.triangles[t].contains(&u) && mesh.triangles[t].contains(&v)).collect();
        if around.iter().all(|&t| !busy[t]) {
            around.iter().for_each(|&t| busy[t] = true);
            chosen.push((u, v));
        }
    }
    let mut mid = BTreeMap::new();
    for (u, v) in chosen {
        let t = mesh.triangles.iter().position(|t| t.contains(&u) && t.contains(&v)).unwrap();
        vertices.push((mesh.vertices[u] + mesh.vertices[v]) * 0.5);
        ids.push(next_id);
        vlabels.push(mesh.triangle_labels[t]);
        next_id += 1;
        mid.insert((u, v), vertices.len() - 1);
    }
    let mut triangles = Vec::new();
    let mut tlabels = Vec::new();
    for (t, &tri) in mesh.triangles.iter().enumerate() {
        let split = (0..3).find_map(|k| {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            mid.get(&(a.min(b), a.max(b))).map(|&s| (k, s))
        });
        match split {
            Some((k, s)) => {
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                triangles.push([a, s, c]);
                triangles.push([s, b, c]);
                tlabels.extend([mesh.triangle_labels[t]; 2]);
            }
            None => {
                triangles.push(tri);
                tlabels.push(mesh.triangle_labels[t]);
            }
        }
    }
    let mut out = DecoratedMesh::new(vertices, ids, vlabels, triangles, tlabels, mesh.class_count)?;
    out.sample_count = mesh.sample_count;
    extract_regions_and_graph(&out, DEFAULT_ISLAND_THRESHOLD)
}

/// Arc-length placement of every boundary vertex on the unit square.
pub fn boundary_placement(mesh: &DecoratedMesh, corners: [usize; 4], targets: [Vec2; 4]) -> BTreeMap<usize, Vec2> {
    let bl = &mesh.boundary_loop;
    let m = bl.len();
    let start = bl.iter().position(|&v| v == corners[0]).unwrap();
    let mut out = BTreeMap::new();
    let mut i = 0;
    for k in 0..4 {
        let mut run = vec![bl[(start + i) % m]];
        loop {
            i += 1;
            let v = bl[(start + i) % m];
            run.push(v);
            if v == corners[(k + 1) % 4] {
                break;
            }
        }
        let mut acc = vec![0.0];
        for w in run.windows(2) {
            acc.push(acc.last().unwrap() + mesh.vertices[w[0]].dist(mesh.vertices[w[1]]));
        }
        let total = *acc.last().unwrap();
        for (j, &v) in run.iter().enumerate() {
            let t = if total > 0.0 { acc[j] / total } else { j as f64 / (run.len() - 1) as f64 };
            out.entry(v).or_insert(targets[k].lerp(targets[(k + 1) % 4], t));
        }
    }
    out
}

/// Rows for chain-interior vertices and interior nodes, shared by
/// straightening and registration.
pub(crate) fn graph_rows(mesh: &DecoratedMesh, sys: &mut ConstrainedLaplacianSystem, geometry: &[Vec2], nodes: bool) {
    let g = mesh.graph.as_ref().unwrap();
    for c in g.interior_chains() {
        for w in c.vertices.windows(3) {
            let (p, v, n) = (w[0], w[1], w[2]);
            let row = vec![(p, 1.0 / geometry[v].dist(geometry[p])), (n, 1.0 / geometry[v].dist(geometry[n]))];
            sys.set_row(v, WeightScheme::ChainBarycentric, row);
        }
    }
    if nodes {
        let on_boundary = mesh.is_boundary_vertex();
        let graph_nb = g.graph_neighbors(mesh.vertex_count());
        for &v in g.nodes.iter().filter(|&&v| !on_boundary[v]) {
            let mut ring = graph_nb[v].clone();
            sort_by_angle(geometry[v], &mut ring, geometry);
            let pts: Vec<Vec2> = ring.iter().map(|&j| geometry[j]).collect();
            let w = mean_value_weights(geometry[v], &pts);
            sys.set_row(v, WeightScheme::NodeMeanValue, ring.into_iter().zip(w).collect());
        }
    }
}

/// Harmonic or mean-value rows for every vertex not yet constrained.
pub(crate) fn interior_rows(
    mesh: &DecoratedMesh,
    sys: &mut ConstrainedLaplacianSystem,
    geometry: &[Vec2],
    scheme: WeightScheme,
    constrained: &[bool],
) {
    let nb = mesh.vertex_neighbors();
    let cot = (scheme == WeightScheme::InteriorCotangent).then(|| cotangent_weights(geometry, &mesh.triangles));
    for v in 0..mesh.vertex_count() {
        if constrained[v] {
            continue;
        }
        let row = match &cot {
            Some(cw) => nb[v].iter().map(|&j| (j, cw[&(v.min(j), v.max(j))])).collect(),
            None => {
                let mut ring = nb[v].clone();
                sort_by_angle(geometry[v], &mut ring, geometry);
                let pts: Vec<Vec2> = ring.iter().map(|&j| geometry[j]).collect();
                let w = mean_value_weights(geometry[v], &pts);
                ring.into_iter().zip(w).collect()
            }
        };
        sys.set_row(v, scheme, row);
    }
}

/// Straightening system of `mesh` with `scheme` rows at the free vertices.
fn assemble(mesh: &DecoratedMesh, scheme: WeightScheme) -> ConstrainedLaplacianSystem {
    let g = mesh.graph.as_ref().unwrap();
    let placement = boundary_placement(mesh, g.corners, UNIT_CORNERS);
    let mut sys = ConstrainedLaplacianSystem::new(mesh.vertex_count());
    let mut constrained = vec![false; mesh.vertex_count()];
    for (&v, &p) in &placement {
        sys.fix(v, p);
        constrained[v] = true;
    }
    graph_rows(mesh, &mut sys, &mesh.vertices, true);
    for v in 0..mesh.vertex_count() {
        if sys.schemes[v] != WeightScheme::Fixed || sys.fixed[v].is_some() {
            constrained[v] = true;
        }
    }
    interior_rows(mesh, &mut sys, &mesh.vertices, scheme, &constrained);
    sys
}

/// Straightens `mesh`, which must carry a feature graph. Chords between
/// vertices of one straight group are split first so no triangle collapses.
pub fn canonical_straighten(mesh: &DecoratedMesh) -> Result<CanonicalDomain> {
    if mesh.graph.is_none() {
        return Err(Error::InvalidMesh("mesh has no feature graph".into()));
    }
    let mut mesh = mesh.clone();
    let before = mesh.vertex_count();
    for _ in 0..MAX_SPLIT_ROUNDS {
        let chords = degenerate_chords(&mesh);
        if chords.is_empty() {
            break;
        }
        mesh = split_edges(&mesh, &chords)?;
    }
    let steiner = mesh.vertex_count() - before;

    let mut last = None;
    for scheme in [WeightScheme::InteriorCotangent, WeightScheme::InteriorMeanValue] {
        let sys = assemble(&mesh, scheme);
        let x = sys.solve()?;
        let report = verify_positions(&mesh, &x, &sys, scheme, steiner)?;
        if report.flipped == 0 {
            return finish(mesh, x, report);
        }
        log::warn!("{scheme:?} rows flip {} triangles", report.flipped);
        last = Some((x, report));
    }
    let (x, report) = last.unwrap();
    finish(mesh, x, report)
}

fn finish(mesh: DecoratedMesh, x: Vec<Vec2>, report: CanonicalReport) -> Result<CanonicalDomain> {
    if report.flipped > 0 {
        return Err(Error::FlippedTriangles(report.flipped));
    }
    if let Some(&l) = report.nonconvex_faces.first() {
        return Err(Error::NonConvexFace(l));
    }
    if report.residual > RESIDUAL_TOLERANCE {
        return Err(Error::ConstraintViolation(format!("laplacian residual {:.3e}", report.residual)));
    }
    let map = PiecewiseLinearMap::new(mesh, x)?;
    Ok(CanonicalDomain { map, report })
}

fn verify_positions(
    mesh: &DecoratedMesh,
    x: &[Vec2],
    sys: &ConstrainedLaplacianSystem,
    interior_weights: WeightScheme,
    steiner_vertices: usize,
) -> Result<CanonicalReport> {
    let g = mesh.graph.as_ref().ok_or_else(|| Error::InvalidMesh("mesh has no feature graph".into()))?;
    let residual = sys.residual(x);
    let negative_weights = sys.negative_weights(interior_weights) + sys.negative_weights(WeightScheme::NodeMeanValue);
    let flipped = mesh.triangles.iter().filter(|t| orient(x[t[0]], x[t[1]], x[t[2]]) <= 0.0).count();
    let area_sum = mesh.triangles.iter().map(|t| signed_area(x[t[0]], x[t[1]], x[t[2]])).sum();
    let mut collinearity: f64 = 0.0;
    for c in g.interior_chains() {
        let (a, b) = (x[c.start()], x[c.end()]);
        let d = b - a;
        let len = d.norm();
        for &v in c.interior() {
            let dev = if len > 0.0 { (x[v] - a).cross(d).abs() / len } else { x[v].dist(a) };
            collinearity = collinearity.max(dev);
        }
    }
    let mut nonconvex_faces = Vec::new();
    for f in &g.faces {
        let corners = polygon_corners(&f.boundary, x);
        let k = corners.len();
        let convex = k >= 3
            && (0..k).all(|i| {
                let (a, b, c) = (corners[i], corners[(i + 1) % k], corners[(i + 2) % k]);
                (b - a).cross(c - b) > 0.0
            });
        if !convex {
            nonconvex_faces.push(f.label);
        }
    }
    Ok(CanonicalReport {
        flipped,
        residual,
        collinearity,
        nonconvex_faces,
        area_sum,
        negative_weights,
        interior_weights,
        steiner_vertices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{LabeledPointCloud, Sample};
    use crate::geometry::delaunay_triangulate;

    fn grid(k: usize, label: impl Fn(f64, f64) -> Label, classes: usize) -> DecoratedMesh {
        let mut samples = Vec::new();
        for j in 0..k {
            for i in 0..k {
                let (x, y) = (i as f64 / (k - 1) as f64, j as f64 / (k - 1) as f64);
                samples.push(Sample { id: (j * k + i) as u64, position: Vec2::new(x, y), label: label(x, y) });
            }
        }
        let cloud = LabeledPointCloud::new(samples, classes).unwrap();
        extract_regions_and_graph(&delaunay_triangulate(&cloud, 0).unwrap(), DEFAULT_ISLAND_THRESHOLD).unwrap()
    }

    #[test]
    fn unit_grid_is_fixed() {
        let m = grid(9, |_, _| 0, 1);
        let d = canonical_straighten(&m).unwrap();
        for (p, q) in m.vertices.iter().zip(d.positions()) {
            assert!(p.dist(*q) < 1e-12);
        }
        assert!(d.report().is_valid());
    }

    #[test]
    fn stretched_rectangle_maps_affinely() {
        let m = grid(7, |_, _| 0, 1);
        let stretched: Vec<Vec2> = m.vertices.iter().map(|p| Vec2::new(3.0 * p.x - 1.0, 0.5 * p.y + 2.0)).collect();
        let mut s = m.clone();
        s.vertices = stretched;
        let d = canonical_straighten(&s).unwrap();
        for (p, q) in m.vertices.iter().zip(d.positions()) {
            assert!(p.dist(*q) < 1e-12);
        }
    }

    #[test]
    fn stepped_boundary_becomes_straight() {
        // Jagged vertical boundary between two classes.
        let m = grid(12, |x, y| if x + 0.1 * (10.0 * y).sin() < 0.5 { 0 } else { 1 }, 2);
        let d = canonical_straighten(&m).unwrap();
        let r = d.report();
        assert_eq!(r.flipped, 0);
        assert!(r.collinearity < 1e-9, "{}", r.collinearity);
        assert!((r.area_sum - 1.0).abs() < 1e-12);
        assert!(r.nonconvex_faces.is_empty());
        assert!(r.residual < 1e-10);
        assert_eq!(d.face_polygon(0).unwrap().len(), 4);
    }

    #[test]
    fn locate_class_prefers_the_smaller_label_on_edges() {
        let m = grid(10, |x, _| if x < 0.5 { 0 } else { 1 }, 2);
        let d = canonical_straighten(&m).unwrap();
        let chain = d.graph().interior_chains().next().unwrap();
        let on = d.positions()[chain.interior()[0]];
        assert_eq!(d.locate_class(on), 0);
        assert_eq!(d.locate_class(Vec2::new(0.05, 0.5)), 0);
        assert_eq!(d.locate_class(Vec2::new(0.95, 0.5)), 1);
    }
}
