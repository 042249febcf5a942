//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Invalid or physically inconsistent device parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parameter `{name}` must be finite and positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` is not finite: {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("deadband is empty: t_min = {t_min}, t_max = {t_max}")]
    EmptyDeadband { t_min: f64, t_max: f64 },
    #[error("ambient {ambient} must exceed the upper limit {t_max}")]
    AmbientBelowLimit { ambient: f64, t_max: f64 },
    #[error("cooling span {span} cannot pull the device below {t_min} at ambient {ambient}")]
    InsufficientCooling { span: f64, ambient: f64, t_min: f64 },
    #[error("invalid population: {0}")]
    Population(String),
}

/// Frequency-signal loading and synthesis failures.
#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp {t} does not increase")]
    NonMonotone { line: u64, t: f64 },
    #[error("line {line}: gap of {gap} s before timestamp {t}, the signal must be sampled at 1 Hz")]
    Gap { line: u64, t: f64, gap: f64 },
    #[error("line {line}: deviation {value} Hz exceeds the 1 Hz sanity bound")]
    OutOfRange { line: u64, value: f64 },
    #[error("no samples")]
    NoSamples,
    #[error("invalid signal parameter: {0}")]
    InvalidParameter(String),
}

/// Invalid controller configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("invalid controller configuration: {0}")]
    Config(String),
}

/// Failures of the closed-form analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no gain satisfies the bounds: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Scenario loading, simulation, and output failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("cannot parse scenario {path}: {message}")]
    ScenarioParse { path: PathBuf, message: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    /// Stable short code for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Model(_) => "model",
            Error::Signal(_) => "signal",
            Error::Controller(_) => "controller",
            Error::Analysis(_) => "analysis",
            Error::Scenario(_) | Error::ScenarioParse { .. } => "scenario",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::ThreadPool(_) => "threads",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
