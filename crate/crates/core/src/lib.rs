//! Single-view textured human reconstruction.
//!
//! From a front image, a back image (provided, or a mirrored front as
//! baseline) and a skinned body mesh, an implicit SDF + RGB field is trained and
//! evaluated with pixel-aligned image features and a body-anchored positional
//! embedding; colored meshes are extracted with marching cubes and scored with
//! Chamfer distance, normal consistency and f-score after ICP registration.

pub mod error;
pub mod geom;
pub mod net;
pub mod embed;
pub mod raster;
pub mod field;
pub mod trainer;
pub mod recon;
pub mod synthetic;
pub mod eval;
pub mod config;

pub use error::{Error, Result};
