//! Registration by template-mesh deformation.
//!
//! A single reference surface mesh is deformed onto each target image. Because
//! the deformation never changes connectivity, every reference vertex keeps its
//! identity, and the pair (reference vertex, deformed vertex) is a point
//! correspondence. Composing two such deformations through the reference gives
//! a correspondence between any two targets.
//!
//! Geometry, volumes, losses, interpolation and metrics are generic over the
//! scalar type ([`Real`], implemented for `f32` and `f64`). The optimizers,
//! the synthetic data generator and the experiment pipeline work in `f64`
//! through the aliases below.

pub mod deform;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod spatial;
pub mod synth;
mod jsonio;
pub mod register;
mod table;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{Mat3, Point3, Vec3};
pub use mesh::{TriMesh, Topology, VertexScalars};
pub use scalar::Real;

pub type Vec3d = Vec3<f64>;
pub type Vec3f = Vec3<f32>;
pub type Mesh = TriMesh<f64>;
pub type MeshF32 = TriMesh<f32>;
