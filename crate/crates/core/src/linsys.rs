//! Sparse constrained Laplacian systems.
//!
//! Every vertex is either fixed or free. A free vertex `i` has a row
//! `sum_j w_ij (x_i - x_j) = 0` over its stencil. Both coordinates share
//! the matrix and are solved together with a sparse LU factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// How the row of a vertex was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    Fixed,
    InteriorCotangent,
    InteriorMeanValue,
    /// Two chain neighbors weighted by inverse chord length.
    ChainBarycentric,
    NodeMeanValue,
    Uniform,
}

#[derive(Debug, Clone)]
pub struct ConstrainedLaplacianSystem {
    pub schemes: Vec<WeightScheme>,
    /// Stencil `(neighbor, weight)` of each free vertex; empty when fixed.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub fixed: Vec<Option<Vec2>>,
}

impl ConstrainedLaplacianSystem {
    pub fn new(vertex_count: usize) -> Self {
        Self {
            schemes: vec![WeightScheme::Fixed; vertex_count],
            rows: vec![Vec::new(); vertex_count],
            fixed: vec![None; vertex_count],
        }
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn fix(&mut self, v: usize, p: Vec2) {
        self.schemes[v] = WeightScheme::Fixed;
        self.rows[v].clear();
        self.fixed[v] = Some(p);
    }

    pub fn set_row(&mut self, v: usize, scheme: WeightScheme, row: Vec<(usize, f64)>) {
        self.schemes[v] = scheme;
        self.rows[v] = row;
        self.fixed[v] = None;
    }

    /// Negative weights among rows built with `scheme`.
    pub fn negative_weights(&self, scheme: WeightScheme) -> usize {
        (0..self.len())
            .filter(|&v| self.schemes[v] == scheme)
            .map(|v| self.rows[v].iter().filter(|(_, w)| *w < 0.0).count())
            .sum()
    }

    /// Largest `|sum_j w_ij (x_i - x_j)|` over free rows.
    pub fn residual(&self, x: &[Vec2]) -> f64 {
        (0..self.len())
            .filter(|&v| self.fixed[v].is_none())
            .map(|v| {
                self.rows[v]
                    .iter()
                    .fold(Vec2::ZERO, |acc, &(j, w)| acc + (x[v] - x[j]) * w)
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    /// Solves for the free vertices, refining once against the residual.
    pub fn solve(&self) -> Result<Vec<Vec2>> {
        let n = self.len();
        let mut index = vec![usize::MAX; n];
        let mut free = Vec::new();
        for v in 0..n {
            if self.fixed[v].is_none() {
                index[v] = free.len();
                free.push(v);
                if self.rows[v].is_empty() {
                    return Err(Error::SingularSystem(format!("free vertex {v} has an empty row")));
                }
            }
        }
        let mut x: Vec<Vec2> = self.fixed.iter().map(|p| p.unwrap_or(Vec2::ZERO)).collect();
        if free.is_empty() {
            return Ok(x);
        }
        let m = free.len();
        let mut trip = Vec::new();
        let mut rhs = Mat::<f64>::zeros(m, 2);
        for (r, &v) in free.iter().enumerate() {
            let mut diag = 0.0;
            for &(j, w) in &self.rows[v] {
                diag += w;
                match self.fixed[j] {
                    Some(p) => {
                        rhs[(r, 0)] += w * p.x;
                        rhs[(r, 1)] += w * p.y;
                    }
                    None => trip.push(Triplet::new(r, index[j], -w)),
                }
            }
            trip.push(Triplet::new(r, r, diag));
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip)
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        let mut sol = lu.solve(&rhs);
        // One step of iterative refinement.
        let res = &rhs - &a * &sol;
        sol += lu.solve(&res);
        for (r, &v) in free.iter().enumerate() {
            let p = Vec2::new(sol[(r, 0)], sol[(r, 1)]);
            if !p.is_finite() {
                return Err(Error::SingularSystem(format!("non-finite solution at vertex {v}")));
            }
            x[v] = p;
        }
        Ok(x)
    }
}

/// Cotangent weights `(cot a + cot b) / 2` for every mesh edge, keyed by `(min, max)`.
pub fn cotangent_weights(positions: &[Vec2], triangles: &[[usize; 3]]) -> std::collections::BTreeMap<(usize, usize), f64> {
    let mut w = std::collections::BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            let (o, a, b) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let (u, v) = (positions[a] - positions[o], positions[b] - positions[o]);
            let cot = u.dot(v) / u.cross(v).abs();
            *w.entry((a.min(b), a.max(b))).or_insert(0.0) += 0.5 * cot;
        }
    }
    w
}

/// Mean-value weights of `center` over `ring`, which must be sorted by angle
/// around it. Each weight is `(tan(a/2) + tan(b/2)) / |v_i - v_j|` with `a`
/// and `b` the angles to the previous and next ring neighbor.
pub fn mean_value_weights(center: Vec2, ring: &[Vec2]) -> Vec<f64> {
    let k = ring.len();
    let d: Vec<Vec2> = ring.iter().map(|&p| p - center).collect();
    // Counterclockwise angle from `a` to `b` in [0, 2pi).
    let half_tan = |a: Vec2, b: Vec2| {
        let mut angle = a.cross(b).atan2(a.dot(b));
        if angle < 0.0 {
            angle += std::f64::consts::TAU;
        }
        (angle / 2.0).tan()
    };
    (0..k)
        .map(|j| {
            let prev = d[(j + k - 1) % k];
            let next = d[(j + 1) % k];
            (half_tan(prev, d[j]) + half_tan(d[j], next)) / d[j].norm()
        })
        .collect()
}

/// Sorts `ring` counterclockwise by angle around `center`, starting at angle -pi.
pub fn sort_by_angle(center: Vec2, ring: &mut [usize], positions: &[Vec2]) {
    ring.sort_by(|&a, &b| {
        let (pa, pb) = (positions[a] - center, positions[b] - center);
        pa.y.atan2(pa.x).total_cmp(&pb.y.atan2(pb.x)).then(a.cmp(&b))
    });
}

/// Tutte embedding with uniform weights: every vertex not in `boundary` sits
/// at the average of its neighbors.
pub fn tutte_embed(neighbors: &[Vec<usize>], boundary: &[(usize, Vec2)]) -> Result<Vec<Vec2>> {
    let n = neighbors.len();
    let mut sys = ConstrainedLaplacianSystem::new(n);
    for v in 0..n {
        sys.set_row(v, WeightScheme::Uniform, neighbors[v].iter().map(|&j| (j, 1.0)).collect());
    }
    for &(v, p) in boundary {
        sys.fix(v, p);
    }
    // Every component needs a fixed vertex, or its block is singular.
    let mut reached = vec![false; n];
    let mut stack: Vec<usize> = boundary.iter().map(|&(v, _)| v).collect();
    for &v in &stack {
        reached[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &j in &neighbors[v] {
            if !reached[j] {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    if let Some(v) = reached.iter().position(|r| !r) {
        return Err(Error::SingularSystem(format!("vertex {v} is not connected to the boundary")));
    }
    sys.solve()
}
