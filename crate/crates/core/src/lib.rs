//! Manifold surface reconstruction from sparse structure-from-motion points,
//! refined by photometric mesh sweeping.
//!
//! The pipeline builds a 3D Delaunay triangulation of the input points,
//! weights its cells by tracing camera-to-point viewing rays, and grows a
//! free-space region whose boundary is always a 2-manifold. Each iteration
//! then sweeps the visible facets along the viewing rays of every camera,
//! scores the reprojected neighbor images with Gaussian-weighted NCC, and
//! inserts the best matches back into the triangulation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod delaunay;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod io;
pub mod manifold;
pub mod mesh;
pub mod par;
pub mod pipeline;
pub mod predicates;
pub mod render;
pub mod scenes;
pub mod sweep;
pub mod visibility;

pub use camera::CameraView;
pub use delaunay::{CellId, Triangulation, VertexId, INFINITE};
pub use error::{Error, Result};
pub use eval::ErrorReport;
pub use geometry::Point3;
pub use image::ImageBuffer;
pub use manifold::ManifoldState;
pub use mesh::TriangleMesh;
pub use pipeline::{PipelineConfig, Reconstruction};
pub use scenes::{PyramidVariant, Scene};
pub use sweep::{MatchPoint, SweepConfig};
pub use visibility::{RayStore, WeightConfig};
