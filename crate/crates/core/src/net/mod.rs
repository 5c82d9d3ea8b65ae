//! Hand-differentiated networks: conv encoders, normal predictor, MLP heads,
//! Adam, gradient checking and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod mlp;
pub mod model;
pub mod params;
pub mod real;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use conv::Tensor;
pub use gradcheck::{gradient_check, gradient_check_with_step};
pub use model::{EncoderKind, Head, Model, NetworkConfig};
pub use params::ParameterSet;
pub use real::Real;
