//! Planar geometry: predicates, Delaunay meshes, feature graphs, point
//! location and piecewise-linear maps.

pub mod delaunay;
pub mod graph;
pub mod locate;
pub mod mesh;
pub mod plmap;
pub mod predicates;
pub mod refine;
mod vec2;

pub use graph::{extract_regions_and_graph, Chain, Face, FeatureGraph, RegionAdjacency};
pub use locate::{Location, Locator};
pub use mesh::{delaunay_triangulate, DecoratedMesh};
pub use refine::refine_label_boundaries;
pub use plmap::{Direction, MapEval, PiecewiseLinearMap};
pub use vec2::Vec2;
