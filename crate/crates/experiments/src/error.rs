use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Problems found while reading an experiment config.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key `{key}` set twice (lines {first} and {second})")]
    Duplicate { key: String, first: usize, second: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("cannot parse `{key}` value {value:?}")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Pipeline stage an error surfaced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Build,
    Train,
    Evaluate,
    Baseline,
    Write,
    Apply,
    Gradcheck,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Build => "build",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Baseline => "baseline",
            Stage::Write => "write",
            Stage::Apply => "apply",
            Stage::Gradcheck => "gradcheck",
        })
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{error}")]
    Core { stage: Stage, error: morphlearn::Error },
    #[error("{path}: {error}")]
    Io {
        stage: Stage,
        path: PathBuf,
        error: std::io::Error,
    },
    #[error("{message}")]
    Invalid { stage: Stage, message: String },
}

impl ExperimentError {
    pub fn stage(&self) -> Stage {
        match self {
            ExperimentError::Config(_) => Stage::Config,
            ExperimentError::Core { stage, .. }
            | ExperimentError::Io { stage, .. }
            | ExperimentError::Invalid { stage, .. } => *stage,
        }
    }

    pub(crate) fn invalid(stage: Stage, message: impl Into<String>) -> Self {
        ExperimentError::Invalid {
            stage,
            message: message.into(),
        }
    }

    pub(crate) fn io(stage: Stage, path: impl Into<PathBuf>, error: std::io::Error) -> Self {
        ExperimentError::Io {
            stage,
            path: path.into(),
            error,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Tags core errors with the stage they surfaced in.
pub(crate) trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T> AtStage<T> for morphlearn::Result<T> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|error| ExperimentError::Core { stage, error })
    }
}
