use std::path::PathBuf;

use crate::raster::BandRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("unknown band role {0:?}")]
    UnknownBand(String),
    #[error("duplicate band role {0}")]
    DuplicateBand(BandRole),
    #[error("missing band {0}")]
    MissingBand(BandRole),
    #[error("invalid mask code {0}")]
    InvalidMaskCode(u8),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("no feasible window in {scene_id} after {attempts} attempts")]
    NoFeasibleWindow { scene_id: String, attempts: usize },
    #[error("{image_id} has {valid} valid pixels, fewer than the {requested} requested")]
    InsufficientPixels {
        image_id: String,
        valid: usize,
        requested: usize,
    },
    #[error("empty evaluation region")]
    EmptyRegion,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("predictor failed on {image_id}")]
    Predictor {
        image_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid record: {0}")]
    Record(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
