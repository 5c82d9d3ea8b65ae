//! Triangle meshes, spatial acceleration and exact local geometry queries.
//!
//! Everything here is `f64`; these queries are the ground-truth oracle for
//! training data, the body embedding and evaluation.

pub mod bvh;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod query;
pub mod sample;
pub mod shapes;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

pub use bvh::{Bvh, ClosestPointResult, RayHit, SignMethod};
pub use io::{load_mesh, save_mesh};
pub use kdtree::KdTree;
pub use mesh::{normalize_to_cube, Normalization, TriangleMesh};
pub use sample::{sample_surface, SurfaceSamples};
