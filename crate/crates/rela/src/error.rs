use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("image is {got:?}, model expects {want:?}")]
    ImageShape { got: [usize; 2], want: [usize; 2] },
    #[error("{gts} target boxes but only {regions} regions")]
    TooManyTargets { gts: usize, regions: usize },
    #[error("training diverged at iteration {iteration}: loss is {loss}")]
    Divergence { iteration: usize, loss: f64 },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Strategy(#[from] grex_core::metrics::StrategyError),
    #[error(transparent)]
    Metric(#[from] grex_core::MetricError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: not a grex checkpoint")]
    BadMagic(PathBuf),
    #[error("{path}: unsupported checkpoint version {version}")]
    Version { path: PathBuf, version: u32 },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("checkpoint does not match config: {0}")]
    Mismatch(String),
}
