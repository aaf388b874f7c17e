use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown brick type {0}")]
    UnknownBrickType(usize),

    #[error("cell ({x}, {y}, {z}) is out of bounds for grid {dims:?}")]
    OutOfBounds {
        x: i64,
        y: i64,
        z: i64,
        dims: [usize; 3],
    },

    #[error("cell ({x}, {y}, {z}) is already occupied")]
    Collision { x: usize, y: usize, z: usize },

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("no overlap: no correspondences within {threshold} at the first threshold")]
    NoOverlap { threshold: f64 },

    #[error("action index {index} out of range (action space size {size})")]
    ActionIndex { index: usize, size: usize },

    #[error("action component out of range: {0}")]
    ActionComponent(String),

    #[error("action {0} is not valid in the current state")]
    InvalidAction(usize),

    #[error("no valid action available")]
    NoValidAction,

    #[error("match failed for every library entry: {}", .0.join("; "))]
    MatchFailure(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("library entry `{0}` is not grounded")]
    UngroundedEntry(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// `field` is the dotted path to the offending value, empty when unknown.
    #[error("{path}: {}{source}", if field.is_empty() { String::new() } else { format!("at `{field}`: ") })]
    Json {
        path: String,
        field: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            field: String::new(),
            source,
        }
    }
}
