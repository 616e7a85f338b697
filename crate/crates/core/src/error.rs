use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite value while probing at coordinate {coordinate}")]
    ProbeFailure { coordinate: usize },

    #[error("training diverged at epoch {epoch}: main={main} denoise={denoise} l2={l2}")]
    Divergence {
        epoch: usize,
        main: f64,
        denoise: f64,
        l2: f64,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 is a configuration problem, 2 a data problem, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => 1,
            Error::UnknownRelation(_)
            | Error::UnknownNodeType(_)
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Io { .. } => 2,
            Error::Divergence { .. } | Error::ProbeFailure { .. } => 3,
        }
    }
}
