use std::path::PathBuf;

use grex_core::dataset::{AnnId, ImageId};
use grex_core::DatasetError;
use thiserror::Error;

use crate::task::{TaskId, TaskState};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("unknown image {0}")]
    UnknownImage(ImageId),
    #[error("task {task_id} is {state}; {operation} is not allowed")]
    WrongState {
        task_id: TaskId,
        state: TaskState,
        operation: &'static str,
    },
    #[error("instance {ann_id} is not a candidate of task {task_id}")]
    UnknownInstance { task_id: TaskId, ann_id: AnnId },
    #[error("expression is empty")]
    EmptyExpression,
    #[error("player id is empty")]
    EmptyPlayer,
    #[error("player {player:?} may not validate task {task_id}")]
    NotEligible { task_id: TaskId, player: String },
    #[error("no expressions from other images in the {split} split")]
    EmptyPool { split: String },
    #[error("no image file for image {0}")]
    MissingImage(ImageId),
    #[error("corrupt log {path} line {line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl AnnotateError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AnnotateError::Io { path: path.into(), source }
    }

    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            AnnotateError::UnknownTask(_) => "unknown_task",
            AnnotateError::UnknownImage(_) => "unknown_image",
            AnnotateError::WrongState { .. } => "wrong_state",
            AnnotateError::UnknownInstance { .. } => "unknown_instance",
            AnnotateError::EmptyExpression => "empty_expression",
            AnnotateError::EmptyPlayer => "empty_player",
            AnnotateError::NotEligible { .. } => "not_eligible",
            AnnotateError::EmptyPool { .. } => "empty_pool",
            AnnotateError::MissingImage(_) => "missing_image",
            AnnotateError::CorruptLog { .. } => "corrupt_log",
            AnnotateError::Io { .. } => "io",
            AnnotateError::Dataset(_) => "dataset",
        }
    }
}
