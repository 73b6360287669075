//! Triangle meshes carrying class labels and an optional feature graph.

use std::collections::{BTreeMap, HashMap};

use super::delaunay::{perturb_duplicates, triangle_neighbors, triangulate};
use super::graph::FeatureGraph;
use super::predicates::{orient, signed_area};
use super::Vec2;
use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DecoratedMesh {
    pub vertices: Vec<Vec2>,
    /// Sample id per vertex; vertices inserted by refinement get fresh ids.
    pub vertex_ids: Vec<u64>,
    /// Original per-vertex class labels, never rewritten by island relabeling.
    pub vertex_labels: Vec<Label>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub triangle_labels: Vec<Label>,
    /// Boundary vertices, counterclockwise, starting at the smallest index.
    pub boundary_loop: Vec<usize>,
    pub graph: Option<FeatureGraph>,
    pub class_count: usize,
    /// Vertices `0..sample_count` are samples; the rest were inserted.
    pub sample_count: usize,
    neighbors: Vec<[Option<usize>; 3]>,
}

impl DecoratedMesh {
    /// Assembles a mesh and checks that it is a positively oriented
    /// triangulated disk.
    pub fn new(
        vertices: Vec<Vec2>,
        vertex_ids: Vec<u64>,
        vertex_labels: Vec<Label>,
        triangles: Vec<[usize; 3]>,
        triangle_labels: Vec<Label>,
        class_count: usize,
    ) -> Result<Self> {
        let n = vertices.len();
        if vertex_ids.len() != n || vertex_labels.len() != n {
            return Err(Error::InvalidMesh("per-vertex arrays differ in length".into()));
        }
        if triangle_labels.len() != triangles.len() {
            return Err(Error::InvalidMesh("per-triangle arrays differ in length".into()));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is not counterclockwise")));
            }
        }
        let neighbors = triangle_neighbors(&triangles);
        let boundary_loop = boundary_loop_of(&triangles, &neighbors)?;
        Ok(Self {
            vertices,
            vertex_ids,
            vertex_labels,
            triangles,
            triangle_labels,
            boundary_loop,
            graph: None,
            class_count,
            sample_count: n,
            neighbors,
        })
    }

    /// Triangle across the edge opposite local vertex `i` of triangle `t`.
    pub fn neighbor(&self, t: usize, i: usize) -> Option<usize> {
        self.neighbors[t][i]
    }

    pub fn triangle_neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Undirected edges `(min, max)` in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| (t[i].min(t[(i + 1) % 3]), t[i].max(t[(i + 1) % 3]))))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Directed edge `(a, b)` -> `(triangle, local index of the opposite vertex)`
    /// for the triangle that has `a -> b` counterclockwise.
    pub fn directed_edges(&self) -> HashMap<(usize, usize), (usize, usize)> {
        let mut m = HashMap::with_capacity(self.triangles.len() * 3);
        for (t, tri) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                m.insert((tri[(i + 1) % 3], tri[(i + 2) % 3]), (t, i));
            }
        }
        m
    }

    /// Sorted mesh neighbors of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    pub fn is_boundary_vertex(&self) -> Vec<bool> {
        let mut out = vec![false; self.vertices.len()];
        for &v in &self.boundary_loop {
            out[v] = true;
        }
        out
    }

    /// Copy of this mesh with the same connectivity at new positions. Fails if
    /// any triangle becomes non-positive.
    pub fn with_positions(&self, positions: Vec<Vec2>) -> Result<Self> {
        assert_eq!(positions.len(), self.vertices.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            if orient(positions[tri[0]], positions[tri[1]], positions[tri[2]]) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is not counterclockwise")));
            }
        }
        let mut m = self.clone();
        m.vertices = positions;
        Ok(m)
    }
}

fn boundary_loop_of(tris: &[[usize; 3]], nbr: &[[Option<usize>; 3]]) -> Result<Vec<usize>> {
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for (t, tri) in tris.iter().enumerate() {
        for i in 0..3 {
            if nbr[t][i].is_none() {
                let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                if next.insert(a, b).is_some() {
                    return Err(Error::InvalidMesh(format!("vertex {a} is a boundary pinch")));
                }
            }
        }
    }
    let Some((&start, _)) = next.iter().next() else {
        return Err(Error::InvalidMesh("mesh has no boundary".into()));
    };
    let mut out = vec![start];
    let mut v = next[&start];
    while v != start {
        if out.len() > next.len() {
            return Err(Error::InvalidMesh("boundary is not a simple loop".into()));
        }
        out.push(v);
        v = *next
            .get(&v)
            .ok_or_else(|| Error::InvalidMesh("open boundary".into()))?;
    }
    if out.len() != next.len() {
        return Err(Error::InvalidMesh("mesh boundary has several loops".into()));
    }
    Ok(out)
}

/// Majority vote of the three vertex labels; ties go to the smallest label.
pub fn majority_label(labels: [Label; 3]) -> Label {
    let [a, b, c] = labels;
    if a == b || a == c {
        a
    } else if b == c {
        b
    } else {
        a.min(b).min(c)
    }
}

/// Delaunay triangulation of a labeled cloud. Duplicate positions are moved by
/// a deterministic per-id offset derived from `seed`. The feature graph is not
/// extracted yet.
pub fn delaunay_triangulate(cloud: &LabeledPointCloud, seed: u64) -> Result<DecoratedMesh> {
    let ids = cloud.ids();
    let (positions, moved) = perturb_duplicates(&cloud.positions(), &ids, seed)?;
    if moved > 0 {
        log::warn!("perturbed {moved} duplicate sample positions");
    }
    let tri = triangulate(&positions)?;
    let labels = cloud.labels();
    let triangle_labels = tri
        .triangles
        .iter()
        .map(|t| majority_label([labels[t[0]], labels[t[1]], labels[t[2]]]))
        .collect();
    let mesh = DecoratedMesh::new(
        positions,
        ids,
        labels,
        tri.triangles,
        triangle_labels,
        cloud.class_count(),
    )?;
    debug_assert_eq!(mesh.boundary_loop, tri.hull);
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Sample;

    #[test]
    fn majority_and_ties() {
        assert_eq!(majority_label([2, 2, 1]), 2);
        assert_eq!(majority_label([1, 3, 3]), 3);
        assert_eq!(majority_label([4, 1, 2]), 1);
    }

    #[test]
    fn boundary_of_delaunay_is_hull() {
        let samples = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.4)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Sample { id: i as u64, position: Vec2::new(x, y), label: 0 })
            .collect();
        let cloud = LabeledPointCloud::new(samples, 1).unwrap();
        let m = delaunay_triangulate(&cloud, 0).unwrap();
        assert_eq!(m.boundary_loop, vec![0, 1, 2, 3]);
        assert_eq!(m.triangles.len(), 4);
        assert_eq!(m.edges().len(), 8);
    }

    #[test]
    fn rejects_clockwise_triangles() {
        let v = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let r = DecoratedMesh::new(v, vec![0, 1, 2], vec![0; 3], vec![[0, 2, 1]], vec![0], 1);
        assert!(r.is_err());
    }
}
