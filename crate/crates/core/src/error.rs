use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("index {index} out of range for {count} categories")]
    Index { index: usize, count: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error{}: {message}", location(.line, .sample))]
    Data {
        message: String,
        line: Option<usize>,
        sample: Option<String>,
    },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("gradient oracle error: {0}")]
    Oracle(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn location(line: &Option<usize>, sample: &Option<String>) -> String {
    match (line, sample) {
        (Some(l), Some(s)) => format!(" at line {l} (sample {s})"),
        (Some(l), None) => format!(" at line {l}"),
        (None, Some(s)) => format!(" in sample {s}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            message: msg.into(),
            line: None,
            sample: None,
        }
    }

    pub fn data_at(msg: impl Into<String>, line: usize) -> Self {
        Error::Data {
            message: msg.into(),
            line: Some(line),
            sample: None,
        }
    }

    pub fn data_in(msg: impl Into<String>, sample: impl Into<String>) -> Self {
        Error::Data {
            message: msg.into(),
            line: None,
            sample: Some(sample.into()),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 validation/usage, 2 numeric divergence, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::NumericDomain(_) => 2,
            Error::Oracle(_) => 3,
            _ => 1,
        }
    }
}
