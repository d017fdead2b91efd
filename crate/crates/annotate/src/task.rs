use std::collections::BTreeSet;
use std::fmt;

use grex_core::dataset::{AnnId, ImageId, Split};
use serde::{Deserialize, Serialize};

use crate::error::AnnotateError;

pub type TaskId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskState {
    PendingAnnotation,
    PendingValidation,
    SecondCheck,
    Valid,
    Discarded,
    Rejected,
}

impl TaskState {
    pub const ALL: [TaskState; 6] = [
        TaskState::PendingAnnotation,
        TaskState::PendingValidation,
        TaskState::SecondCheck,
        TaskState::Valid,
        TaskState::Discarded,
        TaskState::Rejected,
    ];

    pub fn is_terminal(&self) -> bool {
        matches!(self, TaskState::Valid | TaskState::Discarded | TaskState::Rejected)
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, TaskState::PendingValidation | TaskState::SecondCheck)
    }

    /// The whole transition relation.
    pub fn can_move_to(&self, next: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, next),
            (PendingAnnotation, PendingValidation)
                | (PendingValidation, Valid)
                | (PendingValidation, SecondCheck)
                | (PendingValidation, Rejected)
                | (SecondCheck, Valid)
                | (SecondCheck, Discarded)
                | (SecondCheck, Rejected)
        )
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskState::PendingAnnotation => "PENDING_ANNOTATION",
            TaskState::PendingValidation => "PENDING_VALIDATION",
            TaskState::SecondCheck => "SECOND_CHECK",
            TaskState::Valid => "VALID",
            TaskState::Discarded => "DISCARDED",
            TaskState::Rejected => "REJECTED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationAttempt {
    pub validator: String,
    pub selection: BTreeSet<AnnId>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub validator: String,
    pub reason: String,
}

/// Server-side record. Never sent to validators as is: see
/// [`crate::ValidationView`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: TaskId,
    pub image_id: ImageId,
    pub split: Split,
    pub candidate_instances: Vec<AnnId>,
    pub state: TaskState,
    pub annotator: Option<String>,
    pub annotator_selection: BTreeSet<AnnId>,
    pub expression: String,
    pub validation_attempts: Vec<ValidationAttempt>,
    pub rejection: Option<Rejection>,
    /// Set on a task re-created from a discarded one.
    pub replaces: Option<TaskId>,
}

impl AnnotationTask {
    pub fn new(task_id: TaskId, image_id: ImageId, split: Split, candidate_instances: Vec<AnnId>) -> Self {
        Self {
            task_id,
            image_id,
            split,
            candidate_instances,
            state: TaskState::PendingAnnotation,
            annotator: None,
            annotator_selection: BTreeSet::new(),
            expression: String::new(),
            validation_attempts: Vec::new(),
            rejection: None,
            replaces: None,
        }
    }

    fn expect_state(&self, ok: bool, operation: &'static str) -> Result<(), AnnotateError> {
        if ok {
            Ok(())
        } else {
            Err(AnnotateError::WrongState {
                task_id: self.task_id,
                state: self.state,
                operation,
            })
        }
    }

    fn check_selection(&self, selection: &BTreeSet<AnnId>) -> Result<(), AnnotateError> {
        match selection.iter().find(|id| !self.candidate_instances.contains(id)) {
            Some(&ann_id) => Err(AnnotateError::UnknownInstance {
                task_id: self.task_id,
                ann_id,
            }),
            None => Ok(()),
        }
    }

    /// Whether `player` may validate or reject this task now.
    pub fn eligible_validator(&self, player: &str) -> bool {
        self.annotator.as_deref() != Some(player) && self.validation_attempts.iter().all(|a| a.validator != player)
    }

    fn check_validator(&self, player: &str) -> Result<(), AnnotateError> {
        if self.eligible_validator(player) {
            Ok(())
        } else {
            Err(AnnotateError::NotEligible {
                task_id: self.task_id,
                player: player.to_string(),
            })
        }
    }

    pub fn submit_annotation(
        &mut self,
        annotator: &str,
        selection: BTreeSet<AnnId>,
        expression: &str,
    ) -> Result<TaskState, AnnotateError> {
        self.expect_state(self.state == TaskState::PendingAnnotation, "submit_annotation")?;
        let expression = expression.trim();
        if expression.is_empty() {
            return Err(AnnotateError::EmptyExpression);
        }
        if annotator.trim().is_empty() {
            return Err(AnnotateError::EmptyPlayer);
        }
        self.check_selection(&selection)?;
        self.annotator = Some(annotator.to_string());
        self.annotator_selection = selection;
        self.expression = expression.to_string();
        self.state = TaskState::PendingValidation;
        Ok(self.state)
    }

    /// Exact set equality against the hidden selection.
    pub fn submit_validation(&mut self, validator: &str, selection: BTreeSet<AnnId>) -> Result<TaskState, AnnotateError> {
        self.expect_state(self.state.is_validation(), "submit_validation")?;
        if validator.trim().is_empty() {
            return Err(AnnotateError::EmptyPlayer);
        }
        self.check_validator(validator)?;
        self.check_selection(&selection)?;
        let matched = selection == self.annotator_selection;
        self.validation_attempts.push(ValidationAttempt {
            validator: validator.to_string(),
            selection,
            matched,
        });
        self.state = match (matched, self.state) {
            (true, _) => TaskState::Valid,
            (false, TaskState::PendingValidation) => TaskState::SecondCheck,
            (false, _) => TaskState::Discarded,
        };
        Ok(self.state)
    }

    pub fn reject(&mut self, validator: &str, reason: &str) -> Result<TaskState, AnnotateError> {
        self.expect_state(self.state.is_validation(), "reject")?;
        if validator.trim().is_empty() {
            return Err(AnnotateError::EmptyPlayer);
        }
        self.check_validator(validator)?;
        self.rejection = Some(Rejection {
            validator: validator.to_string(),
            reason: reason.trim().to_string(),
        });
        self.state = TaskState::Rejected;
        Ok(self.state)
    }
}
