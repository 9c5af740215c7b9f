//! Nearest-neighbor structures over points and triangles.

mod aabb;
mod kdtree;
mod triangle;

pub use aabb::{SurfaceHit, TriangleTree};
pub use kdtree::KdTree;
pub use triangle::closest_point_on_triangle;
