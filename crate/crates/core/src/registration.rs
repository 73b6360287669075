//! Registration between two canonical domains: graph nodes pinned to their
//! counterparts, chain vertices sliding along the counterpart segment, the
//! boundary interpolated between corner and node images, the rest harmonic.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{graph_rows, interior_rows, CanonicalDomain, RESIDUAL_TOLERANCE, UNIT_CORNERS};
use crate::cloud::Label;
use crate::error::{Error, Result};
use crate::geometry::{DecoratedMesh, PiecewiseLinearMap, Vec2};
use crate::linsys::{ConstrainedLaplacianSystem, WeightScheme};

/// Largest distance of a chain vertex from its target segment.
pub const SLIDING_TOLERANCE: f64 = 1e-9;
/// Largest distance of a boundary vertex from the square's sides.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainPair {
    /// Interior chain index in the first domain's graph.
    pub source: usize,
    pub target: usize,
    /// The target chain runs from the image of the source end to the image
    /// of the source start.
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCorrespondence {
    pub class_map: BTreeMap<Label, Label>,
    /// `(source node vertex, target node vertex)`, ascending by source.
    pub nodes: Vec<(usize, usize)>,
    pub chains: Vec<ChainPair>,
}

impl GraphCorrespondence {
    pub fn node_image(&self, v: usize) -> Option<usize> {
        self.nodes.iter().find(|&&(s, _)| s == v).map(|&(_, t)| t)
    }
}

/// Faces around a node (`None` for the outside) and the square sides it lies on.
type NodeSignature = (BTreeSet<Option<Label>>, BTreeSet<usize>);

fn sides_of(p: Vec2) -> BTreeSet<usize> {
    let mut s = BTreeSet::new();
    if p.y.abs() <= BOUNDARY_TOLERANCE {
        s.insert(0);
    }
    if (p.x - 1.0).abs() <= BOUNDARY_TOLERANCE {
        s.insert(1);
    }
    if (p.y - 1.0).abs() <= BOUNDARY_TOLERANCE {
        s.insert(2);
    }
    if p.x.abs() <= BOUNDARY_TOLERANCE {
        s.insert(3);
    }
    s
}

fn node_signatures(d: &CanonicalDomain, map: &dyn Fn(Label) -> Result<Label>) -> Result<BTreeMap<usize, NodeSignature>> {
    let mesh = d.mesh();
    let on_boundary = mesh.is_boundary_vertex();
    let mut around: BTreeMap<usize, BTreeSet<Option<Label>>> = d.graph().nodes.iter().map(|&v| (v, BTreeSet::new())).collect();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for v in tri {
            if let Some(s) = around.get_mut(v) {
                s.insert(Some(map(mesh.triangle_labels[t])?));
            }
        }
    }
    let mut out = BTreeMap::new();
    for (v, mut labels) in around {
        if on_boundary[v] {
            labels.insert(None);
        }
        out.insert(v, (labels, sides_of(d.positions()[v])));
    }
    Ok(out)
}

fn describe(sig: &NodeSignature) -> String {
    let labels: Vec<String> = sig.0.iter().map(|l| l.map_or("outside".into(), |l| l.to_string())).collect();
    format!("faces [{}] sides {:?}", labels.join(", "), sig.1)
}

/// Matches nodes by the faces around them and the square sides they touch,
/// and interior chains by their end nodes and side labels.
pub fn build_correspondence(
    d1: &CanonicalDomain,
    d2: &CanonicalDomain,
    class_map: &BTreeMap<Label, Label>,
) -> Result<GraphCorrespondence> {
    let (g1, g2) = (d1.graph(), d2.graph());
    let map = |l: Label| class_map.get(&l).copied().ok_or(Error::UnmappedLabel(l));
    let labels1: BTreeSet<Label> = g1.faces.iter().map(|f| f.label).collect();
    let labels2: BTreeSet<Label> = g2.faces.iter().map(|f| f.label).collect();
    let mapped: BTreeSet<Label> = labels1.iter().map(|&l| map(l)).collect::<Result<_>>()?;
    if mapped != labels2 || mapped.len() != labels1.len() {
        return Err(Error::NotIsomorphic("class map is not a bijection between the face labels".into()));
    }

    let s1 = node_signatures(d1, &map)?;
    let s2 = node_signatures(d2, &|l| Ok(l))?;
    let mut by_sig: BTreeMap<&NodeSignature, Vec<usize>> = BTreeMap::new();
    for (v, sig) in &s2 {
        by_sig.entry(sig).or_default().push(*v);
    }
    if s1.len() != s2.len() {
        return Err(Error::NotIsomorphic(format!("{} nodes against {}", s1.len(), s2.len())));
    }
    let mut nodes = Vec::with_capacity(s1.len());
    for (&v, sig) in &s1 {
        match by_sig.get(sig).map(Vec::as_slice) {
            Some([w]) => nodes.push((v, *w)),
            Some(many) if many.len() > 1 => {
                return Err(Error::AmbiguousCorrespondence(format!("several nodes with {}", describe(sig))))
            }
            _ => return Err(Error::NotIsomorphic(format!("no counterpart for node with {}", describe(sig)))),
        }
    }
    let images: BTreeSet<usize> = nodes.iter().map(|&(_, w)| w).collect();
    if images.len() != nodes.len() {
        return Err(Error::AmbiguousCorrespondence("two nodes share a counterpart".into()));
    }
    let node_map: BTreeMap<usize, usize> = nodes.iter().copied().collect();

    let interior2: Vec<(usize, &crate::geometry::Chain)> =
        g2.chains.iter().enumerate().filter(|(_, c)| !c.is_boundary()).collect();
    let mut chains = Vec::new();
    let mut used = BTreeSet::new();
    for (i, c) in g1.chains.iter().enumerate().filter(|(_, c)| !c.is_boundary()) {
        let (a, b) = (node_map[&c.start()], node_map[&c.end()]);
        let (l, r) = (map(c.left.unwrap())?, map(c.right.unwrap())?);
        let hits: Vec<ChainPair> = interior2
            .iter()
            .filter_map(|&(j, d)| {
                if d.start() == a && d.end() == b && d.left == Some(l) && d.right == Some(r) {
                    Some(ChainPair { source: i, target: j, reversed: false })
                } else if d.start() == b && d.end() == a && d.left == Some(r) && d.right == Some(l) {
                    Some(ChainPair { source: i, target: j, reversed: true })
                } else {
                    None
                }
            })
            .collect();
        match hits.as_slice() {
            [p] => {
                used.insert(p.target);
                chains.push(*p);
            }
            [] => return Err(Error::NotIsomorphic(format!("no counterpart for the chain between classes {l} and {r}"))),
            _ => {
                return Err(Error::AmbiguousCorrespondence(format!(
                    "several chains between classes {l} and {r} share end nodes"
                )))
            }
        }
    }
    if used.len() != interior2.len() || chains.len() != interior2.len() {
        return Err(Error::NotIsomorphic(format!("{} interior chains against {}", chains.len(), interior2.len())));
    }
    Ok(GraphCorrespondence { class_map: class_map.clone(), nodes, chains })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub node_error: f64,
    /// Largest distance of a mapped chain vertex from its target segment.
    pub chain_sliding: f64,
    /// Largest distance of a mapped boundary vertex from the square's sides.
    pub boundary_sliding: f64,
    pub flipped: usize,
    pub residual: f64,
    pub interior_weights: WeightScheme,
    /// Vertices inside a face whose image lands in a face of another class.
    pub class_mismatches: usize,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub map: PiecewiseLinearMap,
    pub report: RegistrationReport,
}

/// Images of the boundary: corners to corners, boundary nodes to their
/// counterparts, the rest by arc length between consecutive anchors.
fn boundary_images(mesh: &DecoratedMesh, d2: &CanonicalDomain, corr: &GraphCorrespondence) -> BTreeMap<usize, Vec2> {
    let g = mesh.graph.as_ref().unwrap();
    let bl = &mesh.boundary_loop;
    let m = bl.len();
    let start = bl.iter().position(|&v| v == g.corners[0]).unwrap();
    let mut anchors: Vec<(usize, Vec2)> = Vec::new();
    for i in 0..m {
        let v = bl[(start + i) % m];
        if let Some(k) = g.corners.iter().position(|&c| c == v) {
            anchors.push((i, UNIT_CORNERS[k]));
        } else if let Some(w) = corr.node_image(v) {
            anchors.push((i, d2.positions()[w]));
        }
    }
    let mut out = BTreeMap::new();
    for a in 0..anchors.len() {
        let (i0, p0) = anchors[a];
        let (i1, p1) = if a + 1 < anchors.len() { anchors[a + 1] } else { (m, anchors[0].1) };
        let run: Vec<usize> = (i0..=i1).map(|i| bl[(start + i) % m]).collect();
        let mut acc = vec![0.0];
        for w in run.windows(2) {
            acc.push(acc.last().unwrap() + mesh.vertices[w[0]].dist(mesh.vertices[w[1]]));
        }
        let total = *acc.last().unwrap();
        for (j, &v) in run.iter().enumerate().take(run.len() - 1) {
            out.insert(v, p0.lerp(p1, acc[j] / total));
        }
    }
    out
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.norm2();
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

/// Registration system on `mesh`, the first domain's mesh at its canonical
/// positions, with `scheme` rows at the free vertices.
fn assemble(mesh: &DecoratedMesh, d2: &CanonicalDomain, corr: &GraphCorrespondence, scheme: WeightScheme) -> ConstrainedLaplacianSystem {
    let g1 = mesh.graph.as_ref().unwrap();
    let n = mesh.vertex_count();
    let mut sys = ConstrainedLaplacianSystem::new(n);
    let mut constrained = vec![false; n];
    for (v, p) in boundary_images(mesh, d2, corr) {
        sys.fix(v, p);
        constrained[v] = true;
    }
    for &(s, t) in &corr.nodes {
        sys.fix(s, d2.positions()[t]);
        constrained[s] = true;
    }
    graph_rows(mesh, &mut sys, &mesh.vertices, false);
    for c in g1.interior_chains() {
        c.interior().iter().for_each(|&v| constrained[v] = true);
    }
    interior_rows(mesh, &mut sys, &mesh.vertices, scheme, &constrained);
    sys
}

/// Solves for the registration `h` from `d1`'s canonical square into `d2`'s.
pub fn register_canonical(d1: &CanonicalDomain, d2: &CanonicalDomain, corr: &GraphCorrespondence) -> Result<Registration> {
    let mesh = d1.mesh().with_positions(d1.positions().to_vec())?;
    let mut last = None;
    for scheme in [WeightScheme::InteriorCotangent, WeightScheme::InteriorMeanValue] {
        let sys = assemble(&mesh, d2, corr, scheme);
        let x = sys.solve()?;
        let map = PiecewiseLinearMap::new(mesh.clone(), x)?;
        let report = verify(d1, d2, corr, &map, sys.residual(map.target_positions()), scheme);
        if report.flipped == 0 {
            return finish(map, report);
        }
        log::warn!("registration with {scheme:?} rows flips {} triangles", report.flipped);
        last = Some((map, report));
    }
    let (map, report) = last.unwrap();
    finish(map, report)
}

/// Rebuilds a registration from stored images of `d1`'s vertices and
/// recomputes its report against the system for `interior_weights`.
/// Violations are reported, not rejected.
pub fn registration_from_positions(
    d1: &CanonicalDomain,
    d2: &CanonicalDomain,
    corr: &GraphCorrespondence,
    positions: Vec<Vec2>,
    interior_weights: WeightScheme,
) -> Result<Registration> {
    if !matches!(interior_weights, WeightScheme::InteriorCotangent | WeightScheme::InteriorMeanValue) {
        return Err(Error::InvalidMesh(format!("{interior_weights:?} is not an interior weight scheme")));
    }
    let mesh = d1.mesh().with_positions(d1.positions().to_vec())?;
    let sys = assemble(&mesh, d2, corr, interior_weights);
    let map = PiecewiseLinearMap::new(mesh, positions)?;
    let report = verify(d1, d2, corr, &map, sys.residual(map.target_positions()), interior_weights);
    Ok(Registration { map, report })
}

fn finish(map: PiecewiseLinearMap, report: RegistrationReport) -> Result<Registration> {
    if report.flipped > 0 {
        return Err(Error::FlippedTriangles(report.flipped));
    }
    if report.chain_sliding > SLIDING_TOLERANCE || report.boundary_sliding > BOUNDARY_TOLERANCE {
        return Err(Error::ConstraintViolation(format!(
            "sliding error {:.3e} on chains, {:.3e} on the boundary",
            report.chain_sliding, report.boundary_sliding
        )));
    }
    if report.residual > RESIDUAL_TOLERANCE {
        return Err(Error::ConstraintViolation(format!("laplacian residual {:.3e}", report.residual)));
    }
    Ok(Registration { map, report })
}

fn verify(
    d1: &CanonicalDomain,
    d2: &CanonicalDomain,
    corr: &GraphCorrespondence,
    map: &PiecewiseLinearMap,
    residual: f64,
    interior_weights: WeightScheme,
) -> RegistrationReport {
    let x = map.target_positions();
    let (g1, g2) = (d1.graph(), d2.graph());
    let node_error = corr.nodes.iter().map(|&(s, t)| x[s].dist(d2.positions()[t])).fold(0.0, f64::max);
    let mut chain_sliding: f64 = 0.0;
    for p in &corr.chains {
        let target = &g2.chains[p.target];
        let (a, b) = (d2.positions()[target.start()], d2.positions()[target.end()]);
        for &v in g1.chains[p.source].interior() {
            chain_sliding = chain_sliding.max(segment_distance(x[v], a, b));
        }
    }
    let boundary_sliding = d1
        .mesh()
        .boundary_loop
        .iter()
        .map(|&v| {
            let p = x[v];
            p.x.abs().min((1.0 - p.x).abs()).min(p.y.abs()).min((1.0 - p.y).abs())
        })
        .fold(0.0, f64::max);

    let mesh = d1.mesh();
    let mut face_of = vec![BTreeSet::new(); mesh.vertex_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            face_of[v].insert(mesh.triangle_labels[t]);
        }
    }
    let on_boundary = mesh.is_boundary_vertex();
    let class_mismatches = (0..mesh.vertex_count())
        .filter(|&v| face_of[v].len() == 1 && !on_boundary[v])
        .filter(|&v| {
            let l = *face_of[v].iter().next().unwrap();
            Some(d2.locate_class(x[v])) != corr.class_map.get(&l).copied()
        })
        .count();
    RegistrationReport {
        node_error,
        chain_sliding,
        boundary_sliding,
        flipped: map.flipped_count(),
        residual,
        interior_weights,
        class_mismatches,
    }
}
