use std::path::PathBuf;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty geometry")]
    EmptyGeometry,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("missing attribute: {0}")]
    MissingAttribute(&'static str),
    #[error("no channels requested")]
    NoChannels,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    IoRaw(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyGeometry => "empty_geometry",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::InvalidCamera(_) => "invalid_camera",
            Error::MissingAttribute(_) => "missing_attribute",
            Error::NoChannels => "no_channels",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteGradient => "non_finite_gradient",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Degenerate(_) => "degenerate",
            Error::Format(_) => "format",
            Error::MissingFiles(_) => "missing_files",
            Error::Io { .. } | Error::IoRaw(_) => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}
