//! Evaluation for the three generalized referring tasks.

pub mod det;
pub mod files;
pub mod gen;
pub mod seg;
pub mod strategy;

pub use det::{average_precision, evaluate_grec, match_boxes, sample_success, DetPrediction, DetReport, MatchResult};
pub use gen::{cider, evaluate_greg, meteor, CaptionPair, CiderScorer, GregItem, GregReport};
pub use seg::{evaluate_gres, per_sample_iou, SegPrediction, SegReport};
pub use strategy::{select_outputs, CountClass, OutputStrategy, StrategyError};
