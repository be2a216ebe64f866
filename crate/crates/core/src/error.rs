use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network generation failed: {0}")]
    Generation(String),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid contact bounds: min {min} > max {max}")]
    InvalidBounds { min: f64, max: f64 },

    #[error("node {0} is already hospitalized")]
    AlreadyAdmitted(usize),

    #[error("node {0} is not hospitalized")]
    NotAdmitted(usize),

    #[error("node {0} belongs to the hospital-bed group and cannot be admitted")]
    NotAPerson(usize),

    #[error("schedule gap: schedule covers [{covered_from}, {covered_to}) but simulation needs [{needed_from}, {needed_to})")]
    ScheduleGap {
        covered_from: f64,
        covered_to: f64,
        needed_from: f64,
        needed_to: f64,
    },

    #[error("integration failed at t = {t}: step size {step:e} underflowed (worst node {node}, member {member})")]
    StepUnderflow {
        t: f64,
        step: f64,
        node: usize,
        member: usize,
    },

    #[error("non-finite ensemble value at node {node}, member {member} during {stage}")]
    NonFinite {
        node: usize,
        member: usize,
        stage: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("conflicting policies: {0}")]
    PolicyConflict(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Bincode(#[from] bincode::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
