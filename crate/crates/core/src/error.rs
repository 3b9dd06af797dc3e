use std::path::PathBuf;

use crate::model::OpId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid plan {plan}: {violations:?}")]
    InvalidPlan { plan: String, violations: Vec<String> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown structure or application `{0}`")]
    UnknownStructure(String),

    #[error("unknown cluster profile `{0}`")]
    UnknownProfile(String),

    #[error("filter {filter} on plan {plan}: no literal with selectivity above {floor} after {draws} draws")]
    SelectivityBudgetExhausted { plan: String, filter: OpId, floor: f64, draws: usize },

    #[error("plan {index}: {source}")]
    AtPlan {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run {index}: {source}")]
    AtRun {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("strategy {strategy}: {source}")]
    AtStrategy {
        strategy: String,
        #[source]
        source: Box<Error>,
    },

    #[error("enumeration: {0}")]
    Enumeration(String),

    #[error("placement needs {needed} slots but cluster {cluster} offers {available}")]
    Placement { cluster: String, needed: usize, available: usize },

    #[error("instance {instance} failed: {message}")]
    Worker { instance: String, message: String },

    #[error("run produced no sink output")]
    NoOutput,

    #[error("training: {0}")]
    Training(String),

    #[error("model expects feature version {expected}, record featurized as {found}")]
    FeatureVersion { expected: String, found: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn at_plan(index: usize, err: Error) -> Self {
        Error::AtPlan { index, source: Box::new(err) }
    }

    pub fn stage(stage: &'static str, err: Error) -> Self {
        Error::Stage { stage, source: Box::new(err) }
    }

    /// Whether the failure was caused by user input (exit code 1) rather
    /// than an internal fault (exit code 2).
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Worker { .. } | Error::Json(_) | Error::Csv(_) => false,
            Error::Training(_) => false,
            Error::AtPlan { source, .. }
            | Error::AtRun { source, .. }
            | Error::AtStrategy { source, .. }
            | Error::Stage { source, .. } => {
                source.is_user_error()
            }
            _ => true,
        }
    }
}
