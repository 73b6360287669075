//! Alignment of two cluster-decorated 2D latent spaces through a bijective
//! piecewise-linear map.
//!
//! Each latent space is laid out by per-class translations, merged into a
//! uniformly filled square by semi-discrete optimal transport, and flattened
//! onto a convex subdivision of the unit square by a graph-constrained
//! harmonic map. A constrained harmonic registration between the two convex
//! subdivisions closes the chain, so that every class region of the source
//! lands in the corresponding region of the target.

pub mod canonical;
pub mod cloud;
pub mod error;
pub mod geometry;
pub mod io;
pub mod layout;
pub mod linsys;
pub mod ot;
pub mod pipeline;
pub mod registration;
pub mod synthetic;
pub mod translator;
pub mod verify;

pub use cloud::{Label, LabeledPointCloud, Sample};
pub use error::{Error, Result};
pub use geometry::Vec2;
