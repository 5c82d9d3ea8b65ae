//! Orthographic software rasterizer and image containers.

pub mod camera;
pub mod image;
pub mod render;

pub use camera::{make_view_pair, orbit_azimuths, OrthoCamera, ViewSetup};
pub use image::{Channel, MultiChannelImage};
pub use render::{render, render_mask, RenderOptions};
