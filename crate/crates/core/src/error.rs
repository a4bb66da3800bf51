use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("duplicate pair_id {pair_id} on line {line}")]
    DuplicatePairId { pair_id: u32, line: usize },

    #[error("empty repository")]
    EmptyRepository,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} missing")]
    MissingModel(&'static str),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("vocabulary emptied by frequency filter")]
    VocabularyEmptied,

    #[error("degenerate training data")]
    DegenerateTrainingData,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("degenerate t-test")]
    DegenerateTTest,

    #[error("word `{0}` does not occur in the text")]
    WordAbsent(String),

    #[error("bad index header")]
    BadIndexHeader,

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("version tag mismatch: {left} has `{left_tag}` but {right} has `{right_tag}`")]
    VersionMismatch {
        left: String,
        left_tag: String,
        right: String,
        right_tag: String,
    },

    #[error("missing required file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
