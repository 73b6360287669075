//! Region extraction and the feature graph formed by class boundaries.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::mesh::DecoratedMesh;
use super::Vec2;
use crate::cloud::{bounds_of, Label};
use crate::error::{Error, Result};

/// Default fraction of a label's triangles below which a component is an island.
pub const DEFAULT_ISLAND_THRESHOLD: f64 = 0.02;

/// Ordered path of vertices between two nodes. `left`/`right` are the region
/// labels on either side when walking the path; `None` is the outside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub vertices: Vec<usize>,
    pub left: Option<Label>,
    pub right: Option<Label>,
}

impl Chain {
    pub fn is_boundary(&self) -> bool {
        self.left.is_none() || self.right.is_none()
    }

    pub fn start(&self) -> usize {
        self.vertices[0]
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().unwrap()
    }

    pub fn interior(&self) -> &[usize] {
        &self.vertices[1..self.vertices.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub label: Label,
    pub triangles: Vec<usize>,
    /// Counterclockwise boundary loop of the region.
    pub boundary: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGraph {
    /// Sorted node vertices.
    pub nodes: Vec<usize>,
    pub chains: Vec<Chain>,
    pub faces: Vec<Face>,
    /// Boundary vertices standing for the bottom-left, bottom-right, top-right
    /// and top-left corners of the domain.
    pub corners: [usize; 4],
}

impl FeatureGraph {
    pub fn interior_chains(&self) -> impl Iterator<Item = &Chain> {
        self.chains.iter().filter(|c| !c.is_boundary())
    }

    pub fn face(&self, label: Label) -> Option<&Face> {
        self.faces.iter().find(|f| f.label == label)
    }

    /// `|V| - |E| + |F|`, counting the outer face.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.chains.len() as i64 + self.faces.len() as i64 + 1
    }

    /// Undirected graph adjacency restricted to graph edges.
    pub fn graph_neighbors(&self, vertex_count: usize) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); vertex_count];
        for c in &self.chains {
            for w in c.vertices.windows(2) {
                adj[w[0]].push(w[1]);
                adj[w[1]].push(w[0]);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }

    /// Side index (0 bottom, 1 right, 2 top, 3 left) for each boundary vertex
    /// along `boundary_loop`. Corners report the side they start.
    pub fn boundary_sides(&self, boundary_loop: &[usize]) -> BTreeMap<usize, usize> {
        let pos: BTreeMap<usize, usize> = boundary_loop.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let c0 = pos[&self.corners[0]];
        let m = boundary_loop.len();
        let mut out = BTreeMap::new();
        let mut side = 0;
        for k in 0..m {
            let v = boundary_loop[(c0 + k) % m];
            if side < 3 && v == self.corners[side + 1] {
                side += 1;
            }
            out.insert(v, side);
        }
        out
    }

    /// Region adjacency signature of this graph.
    pub fn adjacency(&self, boundary_loop: &[usize]) -> RegionAdjacency {
        let mut pairs = BTreeSet::new();
        for c in self.interior_chains() {
            let (a, b) = (c.left.unwrap(), c.right.unwrap());
            pairs.insert((a.min(b), a.max(b)));
        }
        let sides = self.boundary_sides(boundary_loop);
        let mut side_contacts = BTreeSet::new();
        // Boundary chains run counterclockwise; an edge belongs to the side of
        // its first vertex.
        for c in self.chains.iter().filter(|c| c.is_boundary()) {
            let label = c.left.or(c.right).unwrap();
            for w in c.vertices.windows(2) {
                side_contacts.insert((label, sides[&w[0]]));
            }
        }
        RegionAdjacency { pairs, side_contacts }
    }
}

/// Which regions touch each other and which square sides each region touches.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionAdjacency {
    pub pairs: BTreeSet<(Label, Label)>,
    pub side_contacts: BTreeSet<(Label, usize)>,
}

impl RegionAdjacency {
    pub fn labels(&self) -> BTreeSet<Label> {
        self.pairs
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .chain(self.side_contacts.iter().map(|&(l, _)| l))
            .collect()
    }

    /// Relabels through `map`; fails on a label the map does not cover.
    pub fn mapped(&self, map: &BTreeMap<Label, Label>) -> Result<RegionAdjacency> {
        let get = |l: Label| map.get(&l).copied().ok_or(Error::UnmappedLabel(l));
        let mut pairs = BTreeSet::new();
        for &(a, b) in &self.pairs {
            let (x, y) = (get(a)?, get(b)?);
            pairs.insert((x.min(y), x.max(y)));
        }
        let mut side_contacts = BTreeSet::new();
        for &(l, s) in &self.side_contacts {
            side_contacts.insert((get(l)?, s));
        }
        Ok(RegionAdjacency { pairs, side_contacts })
    }
}

/// Picks the boundary vertices nearest to the corners of the axis-aligned
/// bounding box of the mesh, bottom-left first, counterclockwise.
pub fn select_corners(mesh: &DecoratedMesh) -> Result<[usize; 4]> {
    let (lo, hi) = bounds_of(mesh.boundary_loop.iter().map(|&v| mesh.vertices[v])).unwrap();
    let targets = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
    let mut corners = [0usize; 4];
    for (k, &t) in targets.iter().enumerate() {
        corners[k] = *mesh
            .boundary_loop
            .iter()
            .min_by(|&&a, &&b| {
                let da = mesh.vertices[a].dist(t);
                let db = mesh.vertices[b].dist(t);
                da.total_cmp(&db).then(mesh.vertex_ids[a].cmp(&mesh.vertex_ids[b]))
            })
            .unwrap();
    }
    let pos: Vec<usize> = corners
        .iter()
        .map(|c| mesh.boundary_loop.iter().position(|v| v == c).unwrap())
        .collect();
    let distinct: BTreeSet<usize> = corners.iter().copied().collect();
    if distinct.len() != 4 {
        return Err(Error::InvalidMesh("boundary has fewer than four distinct corner vertices".into()));
    }
    // Must appear in counterclockwise cyclic order along the loop.
    let m = mesh.boundary_loop.len();
    let rel: Vec<usize> = pos.iter().map(|&p| (p + m - pos[0]) % m).collect();
    if !(rel[0] < rel[1] && rel[1] < rel[2] && rel[2] < rel[3]) {
        return Err(Error::InvalidMesh("corner vertices are not in counterclockwise order".into()));
    }
    Ok(corners)
}

fn components(mesh: &DecoratedMesh, labels: &[Label]) -> BTreeMap<Label, Vec<Vec<usize>>> {
    let nt = mesh.triangles.len();
    let mut seen = vec![false; nt];
    let mut out: BTreeMap<Label, Vec<Vec<usize>>> = BTreeMap::new();
    for t0 in 0..nt {
        if seen[t0] {
            continue;
        }
        let l = labels[t0];
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([t0]);
        seen[t0] = true;
        while let Some(t) = queue.pop_front() {
            comp.push(t);
            for i in 0..3 {
                if let Some(u) = mesh.neighbor(t, i) {
                    if !seen[u] && labels[u] == l {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.entry(l).or_default().push(comp);
    }
    out
}

/// Vertex of the given original label closest to that label's barycenter.
fn anchor_vertex(mesh: &DecoratedMesh, label: Label) -> Option<usize> {
    let members: Vec<usize> = (0..mesh.sample_count).filter(|&v| mesh.vertex_labels[v] == label).collect();
    if members.is_empty() {
        return None;
    }
    let c = members.iter().fold(Vec2::ZERO, |acc, &v| acc + mesh.vertices[v]) / members.len() as f64;
    members
        .into_iter()
        .min_by(|&a, &b| mesh.vertices[a].dist(c).total_cmp(&mesh.vertices[b].dist(c)).then(a.cmp(&b)))
}

/// Relabels label islands, checks that every class forms one simply connected
/// region and extracts the feature graph.
pub fn extract_regions_and_graph(mesh: &DecoratedMesh, island_threshold: f64) -> Result<DecoratedMesh> {
    let mut labels = mesh.triangle_labels.clone();
    let present: BTreeSet<Label> = mesh.vertex_labels.iter().copied().collect();
    let anchors: BTreeMap<Label, usize> =
        present.iter().filter_map(|&l| anchor_vertex(mesh, l).map(|v| (l, v))).collect();

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertex_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            incident[v].push(t);
        }
    }

    for _round in 0..64 {
        let comps = components(mesh, &labels);
        let mut islands: Vec<(Label, Vec<usize>)> = Vec::new();
        for (&label, cs) in &comps {
            let total: usize = cs.iter().map(Vec::len).sum();
            let anchor_tris: HashSet<usize> = anchors
                .get(&label)
                .map(|&v| incident[v].iter().copied().collect())
                .unwrap_or_default();
            let main = cs
                .iter()
                .enumerate()
                .filter(|(_, c)| c.iter().any(|t| anchor_tris.contains(t)))
                .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
                .or_else(|| cs.iter().enumerate().max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0))))
                .map(|(i, _)| i)
                .unwrap();
            for (i, c) in cs.iter().enumerate() {
                if i != main || (c.len() as f64) < island_threshold * total as f64 {
                    islands.push((label, c.clone()));
                }
            }
        }
        if islands.is_empty() {
            break;
        }
        islands.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.1[0].cmp(&b.1[0])));
        let mut changed = false;
        for (label, comp) in islands {
            if comp.iter().any(|&t| labels[t] != label) {
                continue;
            }
            let inside: HashSet<usize> = comp.iter().copied().collect();
            let mut votes: BTreeMap<Label, usize> = BTreeMap::new();
            for &t in &comp {
                for i in 0..3 {
                    if let Some(u) = mesh.neighbor(t, i) {
                        if !inside.contains(&u) && labels[u] != label {
                            *votes.entry(labels[u]).or_default() += 1;
                        }
                    }
                }
            }
            let Some(target) = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&l, _)| l)
            else {
                continue;
            };
            for &t in &comp {
                labels[t] = target;
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let comps = components(mesh, &labels);
    for &l in &present {
        match comps.get(&l).map(Vec::len).unwrap_or(0) {
            0 => return Err(Error::EmptyRegion(l)),
            1 => {}
            _ => return Err(Error::RegionFragmentation(l)),
        }
    }

    let mut out = mesh.clone();
    out.triangle_labels = labels;
    let graph = build_graph(&out)?;
    out.graph = Some(graph);
    Ok(out)
}

fn region_loop(mesh: &DecoratedMesh, label: Label, tris: &[usize]) -> Result<Vec<usize>> {
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in tris {
        let tri = mesh.triangles[t];
        for i in 0..3 {
            let across = mesh.neighbor(t, i);
            if across.map(|u| mesh.triangle_labels[u] != label).unwrap_or(true) {
                let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
                if next.insert(a, b).is_some() {
                    return Err(Error::NotSimplyConnected(label));
                }
            }
        }
    }
    let (&start, _) = next.iter().next().ok_or(Error::EmptyRegion(label))?;
    let mut out = vec![start];
    let mut v = next[&start];
    while v != start {
        out.push(v);
        v = next[&v];
        if out.len() > next.len() {
            return Err(Error::NotSimplyConnected(label));
        }
    }
    if out.len() != next.len() {
        return Err(Error::NotSimplyConnected(label));
    }
    Ok(out)
}

fn build_graph(mesh: &DecoratedMesh) -> Result<FeatureGraph> {
    let directed = mesh.directed_edges();
    let labels = &mesh.triangle_labels;

    // Faces, ascending by label.
    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (t, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(t);
    }
    let mut faces = Vec::with_capacity(by_label.len());
    for (label, tris) in by_label {
        let boundary = region_loop(mesh, label, &tris)?;
        faces.push(Face { label, triangles: tris, boundary });
    }

    // Graph edges: label boundaries and the mesh boundary.
    let n = mesh.vertex_count();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut edge_count = 0usize;
    for (a, b) in mesh.edges() {
        let l_ab = directed.get(&(a, b)).map(|&(t, _)| labels[t]);
        let l_ba = directed.get(&(b, a)).map(|&(t, _)| labels[t]);
        if l_ab != l_ba {
            adj[a].push(b);
            adj[b].push(a);
            edge_count += 1;
        }
    }
    let mut nodes: Vec<usize> = (0..n).filter(|&v| !adj[v].is_empty() && adj[v].len() != 2).collect();
    if nodes.is_empty() {
        nodes.push(mesh.boundary_loop[0]);
    }
    let node_set: HashSet<usize> = nodes.iter().copied().collect();

    let mut used: HashSet<(usize, usize)> = HashSet::with_capacity(edge_count);
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut chains = Vec::new();
    for &start in &nodes {
        for &first in &adj[start] {
            if used.contains(&key(start, first)) {
                continue;
            }
            used.insert(key(start, first));
            let mut path = vec![start, first];
            let (mut prev, mut cur) = (start, first);
            while !node_set.contains(&cur) {
                let next = *adj[cur].iter().find(|&&w| w != prev).unwrap_or(&adj[cur][0]);
                if !used.insert(key(cur, next)) {
                    break;
                }
                path.push(next);
                prev = cur;
                cur = next;
            }
            let is_boundary = |a: usize, b: usize| !directed.contains_key(&(a, b)) || !directed.contains_key(&(b, a));
            let boundary = is_boundary(path[0], path[1]);
            if boundary {
                // Orient counterclockwise: the interior is on the left.
                if !directed.contains_key(&(path[0], path[1])) {
                    path.reverse();
                }
            } else if path[0] > *path.last().unwrap() {
                path.reverse();
            }
            let left = directed.get(&(path[0], path[1])).map(|&(t, _)| labels[t]);
            let right = directed.get(&(path[1], path[0])).map(|&(t, _)| labels[t]);
            chains.push(Chain { vertices: path, left, right });
        }
    }
    if used.len() != edge_count {
        return Err(Error::InvalidMesh("feature graph is disconnected".into()));
    }
    chains.sort_by(|a, b| a.vertices.cmp(&b.vertices));

    let corners = select_corners(mesh)?;
    Ok(FeatureGraph { nodes, chains, faces, corners })
}
