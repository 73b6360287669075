//! Delaunay triangulation by lexicographic sweep followed by Lawson flips.
//!
//! Cocircular quadrilaterals take the diagonal incident to the lowest vertex
//! index, which is the triangulation induced by lowering each lifted point by
//! an amount that shrinks very fast with its index. The rule is therefore
//! consistent and the flip loop terminates.

use std::collections::HashMap;

use super::predicates::{incircle, orient};
use super::Vec2;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Triangulation {
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Convex hull, counterclockwise, starting at its smallest vertex index.
    pub hull: Vec<usize>,
}

/// Triangulates `points`. Exact duplicates are an error; use
/// [`perturb_duplicates`] first.
pub fn triangulate(points: &[Vec2]) -> Result<Triangulation> {
    let mut out = sweep(points)?;
    let mut mesh = FlipMesh::new(std::mem::take(&mut out.triangles));
    mesh.legalize(|m, t, i| m.delaunay_illegal(points, t, i));
    out.triangles = mesh.tris;
    Ok(out)
}

/// Regular (weighted Delaunay) triangulation: the projection of the lower
/// hull of the points lifted to `|p|^2 - w`. Edges whose quadrilateral is not
/// convex are never flipped, so a point that the exact regular triangulation
/// would hide stays in.
pub fn regular_triangulate(points: &[Vec2], weights: &[f64]) -> Result<Triangulation> {
    assert_eq!(points.len(), weights.len());
    let mut out = sweep(points)?;
    let lifted: Vec<[f64; 3]> = points.iter().zip(weights).map(|(p, w)| [p.x, p.y, p.norm2() - w]).collect();
    let mut mesh = FlipMesh::new(std::mem::take(&mut out.triangles));
    mesh.legalize(|m, t, i| m.regular_illegal(points, &lifted, t, i));
    out.triangles = mesh.tris;
    Ok(out)
}

/// Edge flips that reduce the number of triangles inverted in `other` while
/// keeping every triangle positive in `valid`. Returns the new triangles and
/// the number still inverted in `other`.
pub fn untangle(triangles: Vec<[usize; 3]>, valid: &[Vec2], other: &[Vec2]) -> (Vec<[usize; 3]>, usize) {
    let bad = |t: [usize; 3]| (orient(other[t[0]], other[t[1]], other[t[2]]) <= 0.0) as usize;
    let mut mesh = FlipMesh::new(triangles);
    mesh.legalize(|m, t, i| {
        let Some([c, a, d, b]) = m.quad(t, i) else {
            return false;
        };
        if orient(valid[c], valid[a], valid[d]) <= 0.0 || orient(valid[d], valid[b], valid[c]) <= 0.0 {
            return false;
        }
        let u = m.nbr[t][i].unwrap();
        bad([c, a, d]) + bad([d, b, c]) < bad(m.tris[t]) + bad(m.tris[u])
    });
    let remaining = mesh.tris.iter().filter(|&&t| bad(t) == 1).count();
    (mesh.tris, remaining)
}

/// Lexicographic sweep triangulation (not yet Delaunay) with its hull.
fn sweep(points: &[Vec2]) -> Result<Triangulation> {
    let n = points.len();
    if n < 3 {
        return Err(Error::AllCollinear);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a], points[b]);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.cmp(&b))
    });
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(Error::DuplicateAfterPerturbation(w[0] as u64, w[1] as u64));
        }
    }

    let o0 = points[order[0]];
    let o1 = points[order[1]];
    let Some(k) = (2..n).find(|&k| orient(o0, o1, points[order[k]]) != 0.0) else {
        return Err(Error::AllCollinear);
    };

    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(2 * n);
    let apex = order[k];
    let left = orient(o0, o1, points[apex]) > 0.0;
    for w in order[..k].windows(2) {
        if left {
            triangles.push([w[0], w[1], apex]);
        } else {
            triangles.push([w[1], w[0], apex]);
        }
    }
    let mut hull: Vec<usize> = if left {
        let mut h = order[..k].to_vec();
        h.push(apex);
        h
    } else {
        let mut h: Vec<usize> = order[..k].iter().rev().copied().collect();
        h.push(apex);
        h
    };

    for &pi in &order[k + 1..] {
        let p = points[pi];
        let m = hull.len();
        let visible: Vec<bool> = (0..m)
            .map(|j| orient(points[hull[j]], points[hull[(j + 1) % m]], p) < 0.0)
            .collect();
        // Start of the visible run: a visible edge whose predecessor is not.
        let start = (0..m)
            .find(|&j| visible[j] && !visible[(j + m - 1) % m])
            .expect("lexicographic sweep point must see a hull edge");
        let mut len = 0;
        while visible[(start + len) % m] {
            let a = hull[(start + len) % m];
            let b = hull[(start + len + 1) % m];
            triangles.push([b, a, pi]);
            len += 1;
        }
        // Hull vertices strictly inside the run are removed; p is inserted.
        let first = start;
        let last = (start + len) % m;
        let mut next = Vec::with_capacity(m + 1);
        let mut j = last;
        loop {
            next.push(hull[j]);
            if j == first {
                break;
            }
            j = (j + 1) % m;
        }
        next.push(pi);
        hull = next;
    }

    let start = hull
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| v)
        .map(|(i, _)| i)
        .unwrap_or(0);
    hull.rotate_left(start);

    Ok(Triangulation { triangles, hull })
}

struct FlipMesh {
    tris: Vec<[usize; 3]>,
    /// `nbr[t][i]` is the triangle across the edge opposite vertex `i`.
    nbr: Vec<[Option<usize>; 3]>,
}

impl FlipMesh {
    fn new(tris: Vec<[usize; 3]>) -> Self {
        let nbr = triangle_neighbors(&tris);
        Self { tris, nbr }
    }

    fn legalize(&mut self, illegal: impl Fn(&Self, usize, usize) -> bool) {
        loop {
            let mut flipped = false;
            for t in 0..self.tris.len() {
                for i in 0..3 {
                    if illegal(self, t, i) {
                        self.flip(t, i);
                        flipped = true;
                    }
                }
            }
            if !flipped {
                break;
            }
        }
    }

    /// Quad `(c, a, d, b)` around the edge opposite vertex `i` of `t`.
    fn quad(&self, t: usize, i: usize) -> Option<[usize; 4]> {
        let u = self.nbr[t][i]?;
        let c = self.tris[t][i];
        let a = self.tris[t][(i + 1) % 3];
        let b = self.tris[t][(i + 2) % 3];
        let d = *self.tris[u].iter().find(|&&v| v != a && v != b).unwrap();
        Some([c, a, d, b])
    }

    fn delaunay_illegal(&self, points: &[Vec2], t: usize, i: usize) -> bool {
        let Some([c, a, d, b]) = self.quad(t, i) else {
            return false;
        };
        let s = incircle(points[c], points[a], points[b], points[d]);
        if s > 0.0 {
            true
        } else if s == 0.0 {
            let lowest = a.min(b).min(c).min(d);
            lowest != a && lowest != b
        } else {
            false
        }
    }

    fn regular_illegal(&self, points: &[Vec2], lifted: &[[f64; 3]], t: usize, i: usize) -> bool {
        let Some([c, a, d, b]) = self.quad(t, i) else {
            return false;
        };
        if orient(points[c], points[a], points[d]) <= 0.0 || orient(points[d], points[b], points[c]) <= 0.0 {
            return false;
        }
        // Positive when lifted d lies below the plane through lifted c, a, b.
        let s = robust::orient3d(coord(lifted[c]), coord(lifted[a]), coord(lifted[b]), coord(lifted[d]));
        if s > 0.0 {
            true
        } else if s == 0.0 {
            let lowest = a.min(b).min(c).min(d);
            lowest != a && lowest != b
        } else {
            false
        }
    }

    fn flip(&mut self, t: usize, i: usize) {
        let u = self.nbr[t][i].unwrap();
        let c = self.tris[t][i];
        let a = self.tris[t][(i + 1) % 3];
        let b = self.tris[t][(i + 2) % 3];
        let j = self.tris[u].iter().position(|&v| v != a && v != b).unwrap();
        let d = self.tris[u][j];
        debug_assert_eq!(self.tris[u][(j + 1) % 3], b);
        let nb_t_a = self.nbr[t][(i + 1) % 3];
        let nb_t_b = self.nbr[t][(i + 2) % 3];
        let nb_u_b = self.nbr[u][(j + 1) % 3];
        let nb_u_a = self.nbr[u][(j + 2) % 3];

        self.tris[t] = [c, a, d];
        self.nbr[t] = [nb_u_b, Some(u), nb_t_b];
        self.tris[u] = [d, b, c];
        self.nbr[u] = [nb_t_a, Some(t), nb_u_a];

        if let Some(x) = nb_u_b {
            self.replace_neighbor(x, u, t);
        }
        if let Some(x) = nb_t_a {
            self.replace_neighbor(x, t, u);
        }
    }

    fn replace_neighbor(&mut self, tri: usize, old: usize, new: usize) {
        for slot in self.nbr[tri].iter_mut() {
            if *slot == Some(old) {
                *slot = Some(new);
            }
        }
    }
}

fn coord(p: [f64; 3]) -> robust::Coord3D<f64> {
    robust::Coord3D { x: p[0], y: p[1], z: p[2] }
}

/// `nbr[t][i]`: triangle sharing the edge opposite vertex `i` of `t`.
pub fn triangle_neighbors(tris: &[[usize; 3]]) -> Vec<[Option<usize>; 3]> {
    let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(tris.len() * 3);
    for (t, tri) in tris.iter().enumerate() {
        for i in 0..3 {
            edges.insert((tri[(i + 1) % 3], tri[(i + 2) % 3]), (t, i));
        }
    }
    let mut nbr = vec![[None; 3]; tris.len()];
    for (t, tri) in tris.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
            if let Some(&(u, _)) = edges.get(&(b, a)) {
                nbr[t][i] = Some(u);
            }
        }
    }
    nbr
}

/// Deterministic per-id offset applied to every sample whose position repeats
/// an earlier one. Magnitude is `1e-9` times the diameter of the point set.
pub fn perturb_duplicates(points: &[Vec2], ids: &[u64], seed: u64) -> Result<(Vec<Vec2>, usize)> {
    let Some((lo, hi)) = crate::cloud::bounds_of(points.iter().copied()) else {
        return Ok((Vec::new(), 0));
    };
    let diameter = (hi - lo).norm().max(f64::MIN_POSITIVE);
    let magnitude = 1e-9 * diameter;
    let mut out = points.to_vec();
    let mut seen: HashMap<(u64, u64), usize> = HashMap::with_capacity(points.len());
    let mut moved = 0;
    for i in 0..points.len() {
        let key = (points[i].x.to_bits(), points[i].y.to_bits());
        if let Some(&first) = seen.get(&key) {
            let angle = unit_hash(seed, ids[i]) * std::f64::consts::TAU;
            out[i] = points[i] + Vec2::new(angle.cos(), angle.sin()) * magnitude;
            if out[i] == points[i] {
                return Err(Error::DuplicateAfterPerturbation(ids[first], ids[i]));
            }
            moved += 1;
        } else {
            seen.insert(key, i);
        }
    }
    let mut check: HashMap<(u64, u64), usize> = HashMap::with_capacity(points.len());
    for (i, p) in out.iter().enumerate() {
        if let Some(&j) = check.get(&(p.x.to_bits(), p.y.to_bits())) {
            return Err(Error::DuplicateAfterPerturbation(ids[j], ids[i]));
        }
        check.insert((p.x.to_bits(), p.y.to_bits()), i);
    }
    Ok((out, moved))
}

/// splitmix64 of `(seed, id)` mapped to `[0, 1)`.
fn unit_hash(seed: u64, id: u64) -> f64 {
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
