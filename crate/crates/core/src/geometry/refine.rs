//! Label-boundary refinement.
//!
//! Every edge whose endpoints carry different labels is split at its
//! midpoint, and every triangle with three labels gets its centroid. Each
//! sample vertex then owns the part of its star closest to it, so region
//! boundaries run through inserted vertices and no sample lies on one.

use std::collections::BTreeMap;

use super::mesh::DecoratedMesh;
use super::predicates::incircle;
use super::Vec2;
use crate::cloud::Label;
use crate::error::Result;

struct Builder {
    vertices: Vec<Vec2>,
    ids: Vec<u64>,
    labels: Vec<Label>,
    next_id: u64,
}

impl Builder {
    fn push(&mut self, p: Vec2, label: Label) -> usize {
        self.vertices.push(p);
        self.ids.push(self.next_id);
        self.labels.push(label);
        self.next_id += 1;
        self.vertices.len() - 1
    }
}

/// Refined copy of `mesh` whose triangle labels follow the vertex labels.
/// Inserted vertices get ids above the largest existing id and the smaller
/// label of the vertices they separate. Any extracted graph is dropped.
pub fn refine_label_boundaries(mesh: &DecoratedMesh) -> Result<DecoratedMesh> {
    let vl = &mesh.vertex_labels;
    let mut b = Builder {
        vertices: mesh.vertices.clone(),
        ids: mesh.vertex_ids.clone(),
        labels: vl.clone(),
        next_id: mesh.vertex_ids.iter().max().map_or(0, |m| m + 1),
    };
    let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (u, v) in mesh.edges() {
        if vl[u] != vl[v] {
            let m = b.push((mesh.vertices[u] + mesh.vertices[v]) * 0.5, vl[u].min(vl[v]));
            mid.insert((u, v), m);
        }
    }
    let midpoint = |u: usize, v: usize| mid[&(u.min(v), u.max(v))];

    let mut triangles = Vec::with_capacity(mesh.triangles.len() * 2);
    let mut labels = Vec::with_capacity(mesh.triangles.len() * 2);
    for &tri in &mesh.triangles {
        let l = tri.map(|v| vl[v]);
        if l[0] == l[1] && l[1] == l[2] {
            triangles.push(tri);
            labels.push(l[0]);
        } else if l[0] != l[1] && l[1] != l[2] && l[0] != l[2] {
            let [p, q, r] = tri;
            let c = b.push((mesh.vertices[p] + mesh.vertices[q] + mesh.vertices[r]) / 3.0, l[0].min(l[1]).min(l[2]));
            for k in 0..3 {
                let v = tri[k];
                let next = midpoint(v, tri[(k + 1) % 3]);
                let prev = midpoint(v, tri[(k + 2) % 3]);
                triangles.push([v, next, c]);
                triangles.push([v, c, prev]);
                labels.push(l[k]);
                labels.push(l[k]);
            }
        } else {
            // Rotate so the odd vertex comes first.
            let k = (0..3).find(|&k| l[(k + 1) % 3] == l[(k + 2) % 3]).unwrap();
            let (o, r1, r2) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let (m1, m2) = (midpoint(o, r1), midpoint(o, r2));
            triangles.push([o, m1, m2]);
            labels.push(vl[o]);
            // The trapezoid (m1, r1, r2, m2) is convex; take its Delaunay diagonal.
            let p = |v: usize| b.vertices[v];
            if incircle(p(m1), p(r1), p(r2), p(m2)) > 0.0 {
                triangles.push([m1, r1, m2]);
                triangles.push([r1, r2, m2]);
            } else {
                triangles.push([m1, r1, r2]);
                triangles.push([m1, r2, m2]);
            }
            labels.push(vl[r1]);
            labels.push(vl[r1]);
        }
    }
    let mut out = DecoratedMesh::new(b.vertices, b.ids, b.labels, triangles, labels, mesh.class_count)?;
    out.sample_count = mesh.sample_count;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{LabeledPointCloud, Sample};
    use crate::geometry::delaunay_triangulate;

    fn mesh(points: &[(f64, f64, Label)]) -> DecoratedMesh {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y, label))| Sample { id: i as u64, position: Vec2::new(x, y), label })
            .collect();
        delaunay_triangulate(&LabeledPointCloud::from_samples(samples).unwrap(), 0).unwrap()
    }

    #[test]
    fn single_label_is_unchanged() {
        let m = mesh(&[(0.0, 0.0, 0), (1.0, 0.0, 0), (0.0, 1.0, 0)]);
        let r = refine_label_boundaries(&m).unwrap();
        assert_eq!(r.triangles, m.triangles);
    }

    #[test]
    fn two_labels_split_into_three() {
        let m = mesh(&[(0.0, 0.0, 0), (1.0, 0.0, 1), (0.0, 1.0, 1)]);
        let r = refine_label_boundaries(&m).unwrap();
        assert_eq!(r.vertex_count(), 5);
        assert_eq!(r.triangles.len(), 3);
        assert_eq!(r.triangle_labels.iter().filter(|&&l| l == 0).count(), 1);
        assert_eq!(r.sample_count, 3);
        assert_eq!(&r.vertex_ids[3..], &[3, 4]);
        let area: f64 = (0..3).map(|t| r.signed_area(t)).sum();
        assert!((area - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_labels_meet_at_the_centroid() {
        let m = mesh(&[(0.0, 0.0, 0), (1.0, 0.0, 1), (0.0, 1.0, 2)]);
        let r = refine_label_boundaries(&m).unwrap();
        assert_eq!(r.vertex_count(), 7);
        assert_eq!(r.triangles.len(), 6);
        assert_eq!(r.vertices[6], Vec2::new(1.0 / 3.0, 1.0 / 3.0));
        for l in 0..3 {
            let a: f64 = (0..6).filter(|&t| r.triangle_labels[t] == l).map(|t| r.signed_area(t)).sum();
            assert!((a - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn samples_are_interior_to_their_label() {
        let mut pts = Vec::new();
        for j in 0..6 {
            for i in 0..6 {
                let k = (i * 6 + j) as f64;
                let (x, y) = (i as f64 + 0.2 * k.sin(), j as f64 + 0.2 * (1.7 * k).cos());
                pts.push((x, y, (i >= 3) as Label + 2 * (j >= 3) as Label));
            }
        }
        let r = refine_label_boundaries(&mesh(&pts)).unwrap();
        for (t, tri) in r.triangles.iter().enumerate() {
            for &v in tri {
                if v < r.sample_count {
                    assert_eq!(r.triangle_labels[t], r.vertex_labels[v]);
                }
            }
        }
    }
}
