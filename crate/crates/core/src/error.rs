use thiserror::Error;

/// Errors raised across the simulator, the analytic evaluators and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape mismatch: expected {expected} modes, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("lossy transform: {modes} modes cannot be recovered from {grid} grid points")]
    LossyTransform { modes: usize, grid: usize },

    #[error("integration blow-up at t = {time} (|u|_L2 = {norm:e}){}", path_suffix(*.path))]
    BlowUp {
        time: f64,
        norm: f64,
        path: Option<u64>,
    },

    #[error("divergent series: {0}")]
    Divergence(String),

    #[error("configuration rejected: {hypothesis} ({detail})")]
    Hypothesis {
        hypothesis: &'static str,
        detail: String,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

fn path_suffix(path: Option<u64>) -> String {
    match path {
        Some(p) => format!(" on path {p}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Attaches a path id to a blow-up error; other errors pass through.
    pub fn on_path(self, id: u64) -> Self {
        match self {
            Error::BlowUp { time, norm, .. } => Error::BlowUp {
                time,
                norm,
                path: Some(id),
            },
            other => other,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
