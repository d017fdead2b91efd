//! Server side of the two-player annotation game: an annotator picks target
//! instances and writes an expression, validators re-find the targets blind,
//! and only matched samples are exported as a gRefCOCO-style dataset.
//!
//! ```text
//! PENDING_ANNOTATION -> PENDING_VALIDATION -> VALID
//!                                          -> SECOND_CHECK -> VALID | DISCARDED
//! (either validation state) -> REJECTED
//! ```

pub mod error;
pub mod project;
pub mod server;
pub mod store;
pub mod task;

pub use error::AnnotateError;
pub use project::{
    AnnotationView, Board, Catalog, Event, ExportSummary, InstanceView, NoTargetSuggestion, Outcome, Project,
    ValidationView,
};
pub use task::{AnnotationTask, TaskId, TaskState, ValidationAttempt};
