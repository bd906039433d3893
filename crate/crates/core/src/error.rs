use std::path::PathBuf;

/// Errors raised by the datacube engine and the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("conflicting array spec for `{name}`: {detail}")]
    Conflict { name: String, detail: String },

    #[error("region not chunk-aligned: {0}")]
    Alignment(String),

    #[error("region out of bounds: {0}")]
    Range(String),

    #[error("unsupported compressor `{0}` (only uncompressed stores are readable)")]
    UnsupportedCompressor(String),

    #[error("unsupported resampling ratio: {0}")]
    UnsupportedRatio(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid shard {path}: {detail} (at byte {offset})")]
    Format { path: PathBuf, offset: u64, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Conflict { .. } => "conflict",
            Error::Alignment(_) => "alignment",
            Error::Range(_) => "range",
            Error::UnsupportedCompressor(_) => "unsupported_compressor",
            Error::UnsupportedRatio(_) => "unsupported_ratio",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Format { .. } => "format",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Image(_) => "image",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Io { context: context(), source })
    }
}
