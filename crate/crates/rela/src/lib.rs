//! Toy-scale ReLA: region-based queries attend to the image (RIA) and to
//! the expression (RLA); region filters, region probabilities, boxes and a
//! target count are decoded from the fused region features.
//!
//! ```no_run
//! use grex_rela::{Model, ModelConfig, Vocab};
//! let model = Model::new(ModelConfig::default(), Vocab::build(["the red square"]), 0).unwrap();
//! assert_eq!(model.params.len(), grex_rela::model::param_names().len());
//! ```

pub mod boxes;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod loss;
pub mod model;
pub mod predict;
pub mod tape;
pub mod train;

pub use boxes::{match_for_box_loss, minimap_target};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{BoxAssignment, LossWeights, MinimapTarget, ModelConfig};
pub use error::{CheckpointError, ConfigError, ModelError};
pub use loss::{compute_loss, LossBreakdown, Targets};
pub use model::{aggregate_mask, Model, Vocab};
pub use predict::{ModelOutput, Prediction};
pub use train::{evaluate, train_toy, EvalPoint, LrSchedule, TrainConfig, TrainTrace};
