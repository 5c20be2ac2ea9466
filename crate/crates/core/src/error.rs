use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GspError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GspError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("tensor has {got} values but shape {shape:?} needs {expected}")]
    TensorSize {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid snapshot {id}: {reason}")]
    Snapshot { id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("negative lead time on edge {src}->{dst}: shipped {ship}, received {receive}")]
    NegativeLeadTime {
        src: String,
        dst: String,
        ship: String,
        receive: String,
    },

    #[error("degenerate dataset for {metric}: {reason}")]
    Degenerate { metric: &'static str, reason: &'static str },

    #[error("training diverged on snapshot {snapshot} (loss = {loss})")]
    Diverged { snapshot: String, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

impl GspError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        GspError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GspError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            GspError::Shape { .. } | GspError::TensorSize { .. } => "shape",
            GspError::NonFinite(_) => "non_finite",
            GspError::NonScalarOutput(_) => "non_scalar_output",
            GspError::Graph(_) | GspError::UnknownNode(_) => "graph",
            GspError::Snapshot { .. } => "snapshot",
            GspError::InvalidArgument(_) => "invalid_argument",
            GspError::NegativeLeadTime { .. } => "negative_lead_time",
            GspError::Degenerate { .. } => "degenerate_dataset",
            GspError::Diverged { .. } => "diverged",
            GspError::Checkpoint(_) => "checkpoint",
            GspError::Io { .. } => "io",
            GspError::Parse { .. } | GspError::Json(_) | GspError::Csv(_) => "parse",
            GspError::Config(_) => "config",
        }
    }
}
