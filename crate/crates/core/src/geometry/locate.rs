//! Point location over a triangulation with a uniform bucket grid.

use super::delaunay::triangle_neighbors;
use super::predicates::{barycentric, closest_on_segment, signed_area2};
use super::Vec2;
use crate::cloud::bounds_of;

/// Barycentric slack accepted as "inside".
pub const INSIDE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Inside { triangle: usize, coords: [f64; 3] },
    /// Nearest boundary triangle with the clamped coordinates of the nearest
    /// boundary point.
    Outside { triangle: usize, coords: [f64; 3] },
}

impl Location {
    pub fn triangle(&self) -> usize {
        match *self {
            Location::Inside { triangle, .. } | Location::Outside { triangle, .. } => triangle,
        }
    }

    pub fn coords(&self) -> [f64; 3] {
        match *self {
            Location::Inside { coords, .. } | Location::Outside { coords, .. } => coords,
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Location::Outside { .. })
    }
}

/// Bucketed locator. Works on any embedding of the connectivity, including
/// ones with flipped triangles; positively oriented hits are preferred.
#[derive(Debug, Clone)]
pub struct Locator {
    positions: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    lo: Vec2,
    hi: Vec2,
    cell: Vec2,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
    /// `(triangle, local index of the vertex opposite the boundary edge)`.
    boundary: Vec<(usize, usize)>,
}

impl Locator {
    pub fn new(positions: &[Vec2], triangles: &[[usize; 3]]) -> Self {
        let (lo, hi) = bounds_of(triangles.iter().flat_map(|t| t.iter().map(|&v| positions[v])))
            .unwrap_or((Vec2::ZERO, Vec2::ZERO));
        let side = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let (nx, ny) = (side, side);
        let ext = hi - lo;
        let cell = Vec2::new((ext.x / nx as f64).max(f64::MIN_POSITIVE), (ext.y / ny as f64).max(f64::MIN_POSITIVE));
        let mut bins = vec![Vec::new(); nx * ny];
        let clampi = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        for (t, tri) in triangles.iter().enumerate() {
            let (a, b) = bounds_of(tri.iter().map(|&v| positions[v])).unwrap();
            let (i0, i1) = (clampi((a.x - lo.x) / cell.x, nx), clampi((b.x - lo.x) / cell.x, nx));
            let (j0, j1) = (clampi((a.y - lo.y) / cell.y, ny), clampi((b.y - lo.y) / cell.y, ny));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(t as u32);
                }
            }
        }
        let nbr = triangle_neighbors(triangles);
        let boundary = nbr
            .iter()
            .enumerate()
            .flat_map(|(t, n)| (0..3).filter(move |&i| n[i].is_none()).map(move |i| (t, i)))
            .collect();
        Self {
            positions: positions.to_vec(),
            triangles: triangles.to_vec(),
            lo,
            hi,
            cell,
            nx,
            ny,
            bins,
            boundary,
        }
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    fn coords_in(&self, t: usize, q: Vec2) -> Option<[f64; 3]> {
        let [a, b, c] = self.triangles[t];
        barycentric(q, self.positions[a], self.positions[b], self.positions[c])
    }

    /// All triangles whose closed interior (up to tolerance) contains `q`.
    pub fn candidates(&self, q: Vec2) -> Vec<(usize, [f64; 3])> {
        let mut out = Vec::new();
        if q.x < self.lo.x - self.cell.x || q.x > self.hi.x + self.cell.x || q.y < self.lo.y - self.cell.y || q.y > self.hi.y + self.cell.y {
            return out;
        }
        let i = (((q.x - self.lo.x) / self.cell.x).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((q.y - self.lo.y) / self.cell.y).floor().max(0.0) as usize).min(self.ny - 1);
        for &t in &self.bins[j * self.nx + i] {
            let t = t as usize;
            if let Some(l) = self.coords_in(t, q) {
                if l.iter().all(|&v| v >= -INSIDE_TOLERANCE) {
                    out.push((t, l));
                }
            }
        }
        out
    }

    pub fn locate(&self, q: Vec2) -> Location {
        let best = self
            .candidates(q)
            .into_iter()
            .map(|(t, l)| {
                let [a, b, c] = self.triangles[t];
                let positive = signed_area2(self.positions[a], self.positions[b], self.positions[c]) > 0.0;
                (t, l, positive, l[0].min(l[1]).min(l[2]))
            })
            .max_by(|x, y| x.2.cmp(&y.2).then(x.3.total_cmp(&y.3)).then(y.0.cmp(&x.0)));
        if let Some((t, l, _, _)) = best {
            return Location::Inside { triangle: t, coords: clamp_coords(l) };
        }
        self.nearest_boundary(q)
    }

    fn nearest_boundary(&self, q: Vec2) -> Location {
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for &(t, i) in &self.boundary {
            let tri = self.triangles[t];
            let (a, b) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
            let (p, s) = closest_on_segment(q, self.positions[a], self.positions[b]);
            let d = p.dist(q);
            if best.map(|(bd, bt, _, _)| d < bd || (d == bd && t < bt)).unwrap_or(true) {
                best = Some((d, t, i, s));
            }
        }
        let (_, t, i, s) = best.expect("triangulation has a boundary");
        let mut coords = [0.0; 3];
        coords[(i + 1) % 3] = 1.0 - s;
        coords[(i + 2) % 3] = s;
        Location::Outside { triangle: t, coords }
    }
}

fn clamp_coords(l: [f64; 3]) -> [f64; 3] {
    let c = l.map(|v| v.clamp(0.0, 1.0));
    let s = c[0] + c[1] + c[2];
    c.map(|v| v / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::delaunay::triangulate;

    fn unit() -> (Vec<Vec2>, Vec<[usize; 3]>) {
        (vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)], vec![[0, 1, 2]])
    }

    #[test]
    fn centroid_and_vertex_queries() {
        let (p, t) = unit();
        let loc = Locator::new(&p, &t);
        let Location::Inside { coords, .. } = loc.locate(Vec2::new(1.0 / 3.0, 1.0 / 3.0)) else {
            panic!("centroid must be inside");
        };
        for c in coords {
            assert!((c - 1.0 / 3.0).abs() < 1e-15);
        }
        let Location::Inside { coords, .. } = loc.locate(Vec2::new(1.0, 0.0)) else {
            panic!("vertex must be inside");
        };
        assert_eq!(coords, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn outside_snaps_to_nearest_boundary_point() {
        let (p, t) = unit();
        let loc = Locator::new(&p, &t);
        let l = loc.locate(Vec2::new(0.5, -1.0));
        assert!(l.is_outside());
        let c = l.coords();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15 && c[2] == 0.0);
        let l = loc.locate(Vec2::new(2.0, 2.0));
        assert!(l.is_outside());
        let c = l.coords();
        assert!((c[1] - 0.5).abs() < 1e-15 && (c[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_exhaustive_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec2> = (0..300).map(|_| Vec2::new(rng.random(), rng.random())).collect();
        let tri = triangulate(&pts).unwrap();
        let loc = Locator::new(&pts, &tri.triangles);
        for _ in 0..2000 {
            let q = Vec2::new(rng.random(), rng.random());
            let found = loc.locate(q);
            let brute: Vec<usize> = tri
                .triangles
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    let l = barycentric(q, pts[t[0]], pts[t[1]], pts[t[2]]).unwrap();
                    l.iter().all(|&v| v >= -1e-12)
                })
                .map(|(i, _)| i)
                .collect();
            if brute.is_empty() {
                assert!(found.is_outside());
            } else {
                assert!(brute.contains(&found.triangle()));
            }
        }
    }
}
