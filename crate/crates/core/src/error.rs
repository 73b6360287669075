use thiserror::Error;

use crate::cloud::Label;

/// Errors raised anywhere in the alignment workflow.
#[derive(Debug, Error)]
pub enum Error {
    #[error("all input points are collinear; no triangle can be formed")]
    AllCollinear,
    #[error("duplicate positions remain after perturbation (ids {0} and {1})")]
    DuplicateAfterPerturbation(u64, u64),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("class {0} is split into several regions after island relabeling")]
    RegionFragmentation(Label),
    #[error("class {0} has no triangles left")]
    EmptyRegion(Label),
    #[error("region of class {0} is not a simple disk (hole or pinch vertex)")]
    NotSimplyConnected(Label),
    #[error("map has {0} flipped triangles and cannot be inverted")]
    NonInvertible(usize),
    #[error("class {0} has no samples")]
    EmptyClass(Label),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("no consistent layout found after {0} adjustment rounds")]
    NoConsistentLayout(usize),
    #[error("label {0} is not covered by the class correspondence")]
    UnmappedLabel(Label),
    #[error("power cell {0} stayed empty for {1} steps")]
    EmptyCellPersistent(usize, usize),
    #[error("linear system is singular: {0}")]
    SingularSystem(String),
    #[error("{0} mapped triangles are flipped or degenerate")]
    FlippedTriangles(usize),
    #[error("face of class {0} is not convex")]
    NonConvexFace(Label),
    #[error("ambiguous correspondence: {0}")]
    AmbiguousCorrespondence(String),
    #[error("feature graphs are not isomorphic: {0}")]
    NotIsomorphic(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("pipeline stage mismatch: {0}")]
    StageMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
