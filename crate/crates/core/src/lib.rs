//! Geometry primitives, gRefCOCO-style dataset handling and the evaluation
//! metrics for generalized referring expression segmentation (GRES),
//! comprehension (GREC) and generation (GREG).

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod text;

pub use error::{DatasetError, GeometryError, MetricError};
