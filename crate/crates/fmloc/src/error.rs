use std::path::PathBuf;

use fmloc_core::{
    DescriptorError, EvaluationError, GatewayError, LandmarkError, RetrievalError, SimilarityError,
    VocabularyError,
};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const BACKEND: i32 = 2;
    pub const INVARIANT: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{0}")]
    Invariant(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Format { .. } | Self::Config(_) | Self::Vocabulary(_) => {
                exit::INPUT
            }
            Self::Evaluation(_) => exit::INPUT,
            Self::Gateway(_) => exit::BACKEND,
            Self::Descriptor(DescriptorError::Gateway { .. }) => exit::BACKEND,
            Self::Descriptor(DescriptorError::VocabularyTooSmall { .. }) => exit::INPUT,
            Self::Descriptor(_) => exit::INVARIANT,
            Self::Retrieval(
                RetrievalError::Similarity { .. }
                | RetrievalError::DegeneratePatchTable
                | RetrievalError::EmptyPatchTable,
            ) => exit::INVARIANT,
            Self::Retrieval(_) => exit::INPUT,
            Self::Similarity(SimilarityError::InvalidTheta(_)) => exit::INPUT,
            Self::Similarity(_) => exit::INVARIANT,
            Self::Landmark(LandmarkError::Retrieval(e)) => Self::Retrieval(e.clone()).exit_code(),
            Self::Landmark(LandmarkError::EmptyLandmarkSet { .. }) => exit::INVARIANT,
            Self::Landmark(_) => exit::INPUT,
            Self::Invariant(_) => exit::INVARIANT,
        }
    }
}
