use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty tagger corpus")]
    EmptyTaggerCorpus,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty sentence")]
    EmptySentence,
    #[error("empty input")]
    EmptyInput,
    #[error("class `{0}` has no documents")]
    EmptyClass(String),
    #[error("model is not trained")]
    Untrained,
    #[error("retrieval index is empty")]
    EmptyIndex,
    #[error("standard response set is empty")]
    EmptyResponseSet,
    #[error("component not loaded: {0}")]
    ComponentMissing(&'static str),
    #[error("non-finite training loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing cells: {}", .0.join("; "))]
    MissingCells(Vec<String>),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("unsupported artifact: expected {expected} v{version}, found {found}")]
    ArtifactFormat {
        expected: &'static str,
        version: u32,
        found: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
