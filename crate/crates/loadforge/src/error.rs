use std::path::PathBuf;

use loadforge_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("duplicate sample key: {0}")]
    DuplicateKey(String),

    #[error("input is empty")]
    EmptyInput,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("file is truncated")]
    TruncatedFile,

    #[error("bad container format: {0}")]
    Format(String),

    #[error("container index failed its CRC check")]
    CorruptIndex,

    #[error("record {index} is corrupt")]
    CorruptRecord { index: u64 },

    #[error("index {index} out of range (size {len})")]
    IndexOutOfRange { index: u64, len: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {key}: {source}")]
    Sample {
        key: String,
        #[source]
        source: Box<Error>,
    },

    #[error("pipeline failure: {0}")]
    Pipeline(String),

    #[error("missing container artifact {} (run `loadforge pack` first)", .0.display())]
    MissingArtifact(PathBuf),

    #[error("report has no records")]
    EmptyReport,
}

impl Error {
    /// Attach the sample key a failure belongs to.
    pub fn for_sample(self, key: &str) -> Error {
        Error::Sample { key: key.to_string(), source: Box::new(self) }
    }

    /// CLI exit code: 2 for data/format/environment problems the user can
    /// fix, 3 for internal failures. (Usage errors exit 1 via clap.)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Pipeline(_) => 3,
            Error::Sample { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
