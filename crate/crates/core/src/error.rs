use numcore::NumError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },
    #[error("{0}")]
    Contract(String),
    #[error("travel-time spread must be positive, got {0}")]
    DegenerateSpread(f64),
    #[error("every detector was dropped by the cleaning rules")]
    EmptyNetwork,
    #[error("insufficient history: first hour with complete history is {first_valid_hour}")]
    InsufficientHistory { first_valid_hour: usize },
    #[error("scaler cannot be fitted: min == max == {0}")]
    DegenerateScaler(f64),
    #[error("no samples: {0}")]
    EmptySamples(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("transfer model has no pretrained block loaded")]
    UnloadedModel,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed input {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn shape(what: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            msg: msg.to_string(),
        }
    }
}
