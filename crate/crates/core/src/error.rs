use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} = {value:e} s does not land on the {fs:e} Hz sample grid")]
    OffGrid {
        what: &'static str,
        value: f64,
        fs: f64,
    },

    #[error("length or rate mismatch: {0}")]
    Mismatch(String),

    #[error("symbol value {0} is not +1 or -1")]
    InvalidSymbol(i64),

    #[error("unknown channel model `{0}` (expected CM1 or CM2)")]
    UnknownModel(String),

    #[error("integration window [{start}, {end}) lies outside the {len}-sample buffer")]
    WindowOutOfRange { start: i64, end: i64, len: usize },

    #[error("decision-variable variance {variance:e} is degenerate (realization unusable at this Eb/N0)")]
    DegenerateVariance { variance: f64 },

    #[error("PSD profile: {0}")]
    Profile(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("realization {realization}: {source}")]
    Realization {
        realization: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn in_realization(self, realization: usize) -> Self {
        Error::Realization {
            realization,
            source: Box::new(self),
        }
    }
}
