use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible rasters: expected {expected:?} (h, w), found {found:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid RLE: {0}")]
    InvalidRle(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("feature vector {index} has zero norm")]
    ZeroNorm { index: usize },

    #[error("feature vector {index} has dimension {found}, expected {expected}")]
    FeatureDim {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("affinity matrix is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },

    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    #[error("malformed pyramid header: {0}")]
    PyramidHeader(String),

    #[error("pyramid shape mismatch: {0}")]
    PyramidShape(String),

    #[error("predictions for image {image_id} are not sorted by descending score")]
    UnsortedPredictions { image_id: u64 },

    #[error("predictions reference unknown image ids: {0:?}")]
    UnknownImageIds(Vec<u64>),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("schema violation in {}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable class name, used in CLI error records.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidRle(_) => "invalid_rle",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::ZeroNorm { .. } => "zero_norm",
            Error::FeatureDim { .. } => "feature_dim",
            Error::Asymmetric { .. } => "asymmetric_affinity",
            Error::DegenerateBox(_) => "degenerate_box",
            Error::PyramidHeader(_) => "pyramid_header",
            Error::PyramidShape(_) => "pyramid_shape",
            Error::UnsortedPredictions { .. } => "unsorted_predictions",
            Error::UnknownImageIds(_) => "unknown_image_ids",
            Error::MissingFile(_) => "missing_file",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Image { .. } => "image",
            Error::Schema { .. } => "schema",
            Error::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
