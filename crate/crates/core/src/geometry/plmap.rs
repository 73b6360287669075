//! Piecewise-linear maps between two embeddings of one triangulation.

use super::locate::{Location, Locator};
use super::mesh::DecoratedMesh;
use super::predicates::{orient, signed_area};
use super::Vec2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEval {
    pub point: Vec2,
    /// The query fell outside the domain and was clamped to its boundary.
    pub extrapolated: bool,
    pub triangle: usize,
    pub coords: [f64; 3],
}

/// A triangulated source domain with one target position per vertex.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearMap {
    source: DecoratedMesh,
    target: Vec<Vec2>,
    source_locator: Locator,
    target_locator: Locator,
    flipped: usize,
}

impl PiecewiseLinearMap {
    pub fn new(source: DecoratedMesh, target_positions: Vec<Vec2>) -> Result<Self> {
        if target_positions.len() != source.vertex_count() {
            return Err(Error::InvalidMesh(format!(
                "{} target positions for {} vertices",
                target_positions.len(),
                source.vertex_count()
            )));
        }
        if target_positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidMesh("non-finite target position".into()));
        }
        let flipped = source
            .triangles
            .iter()
            .filter(|t| orient(target_positions[t[0]], target_positions[t[1]], target_positions[t[2]]) <= 0.0)
            .count();
        let source_locator = Locator::new(&source.vertices, &source.triangles);
        let target_locator = Locator::new(&target_positions, &source.triangles);
        Ok(Self { source, target: target_positions, source_locator, target_locator, flipped })
    }

    pub fn identity(mesh: DecoratedMesh) -> Self {
        let target = mesh.vertices.clone();
        Self::new(mesh, target).expect("identity map is valid")
    }

    pub fn source_mesh(&self) -> &DecoratedMesh {
        &self.source
    }

    pub fn target_positions(&self) -> &[Vec2] {
        &self.target
    }

    /// Source connectivity at the target positions.
    pub fn target_mesh(&self) -> Result<DecoratedMesh> {
        self.source.with_positions(self.target.clone())
    }

    pub fn flipped_count(&self) -> usize {
        self.flipped
    }

    pub fn is_orientation_preserving(&self) -> bool {
        self.flipped == 0
    }

    /// Smallest signed area among mapped triangles.
    pub fn min_target_area(&self) -> f64 {
        self.source
            .triangles
            .iter()
            .map(|t| signed_area(self.target[t[0]], self.target[t[1]], self.target[t[2]]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn locate(&self, q: Vec2, direction: Direction) -> Location {
        match direction {
            Direction::Forward => self.source_locator.locate(q),
            Direction::Inverse => self.target_locator.locate(q),
        }
    }

    pub fn eval(&self, q: Vec2, direction: Direction) -> Result<MapEval> {
        if direction == Direction::Inverse && self.flipped > 0 {
            return Err(Error::NonInvertible(self.flipped));
        }
        let loc = self.locate(q, direction);
        let values = match direction {
            Direction::Forward => &self.target,
            Direction::Inverse => &self.source.vertices,
        };
        let tri = self.source.triangles[loc.triangle()];
        let c = loc.coords();
        let point = values[tri[0]] * c[0] + values[tri[1]] * c[1] + values[tri[2]] * c[2];
        Ok(MapEval { point, extrapolated: loc.is_outside(), triangle: loc.triangle(), coords: c })
    }

    pub fn forward(&self, q: Vec2) -> MapEval {
        self.eval(q, Direction::Forward).expect("forward evaluation cannot fail")
    }

    pub fn inverse(&self, q: Vec2) -> Result<MapEval> {
        self.eval(q, Direction::Inverse)
    }

    /// Operator 2-norm of the linear part on triangle `t`.
    pub fn triangle_operator_norm(&self, t: usize, direction: Direction) -> f64 {
        let [a, b, c] = self.source.triangles[t];
        let (from, to) = match direction {
            Direction::Forward => (&self.source.vertices, &self.target),
            Direction::Inverse => (&self.target, &self.source.vertices),
        };
        let (e1, e2) = (from[b] - from[a], from[c] - from[a]);
        let (f1, f2) = (to[b] - to[a], to[c] - to[a]);
        let det = e1.cross(e2);
        if det == 0.0 {
            return f64::INFINITY;
        }
        // J = [f1 f2] [e1 e2]^-1
        let inv = [[e2.y / det, -e2.x / det], [-e1.y / det, e1.x / det]];
        let j = [
            [f1.x * inv[0][0] + f2.x * inv[1][0], f1.x * inv[0][1] + f2.x * inv[1][1]],
            [f1.y * inv[0][0] + f2.y * inv[1][0], f1.y * inv[0][1] + f2.y * inv[1][1]],
        ];
        spectral_norm(j)
    }

    /// Largest per-triangle operator norm in the given direction.
    pub fn max_operator_norm(&self, direction: Direction) -> f64 {
        (0..self.source.triangles.len())
            .map(|t| self.triangle_operator_norm(t, direction))
            .fold(0.0, f64::max)
    }
}

fn spectral_norm(j: [[f64; 2]; 2]) -> f64 {
    // Largest singular value from the eigenvalues of J^T J.
    let a = j[0][0] * j[0][0] + j[1][0] * j[1][0];
    let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let d = j[0][1] * j[0][1] + j[1][1] * j[1][1];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    (0.5 * (tr + disc)).max(0.0).sqrt()
}
