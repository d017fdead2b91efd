//! Generalized referring expressions end to end.
//!
//! - [`core`]: masks, boxes, RLE, gRefCOCO-style datasets, synthetic scenes
//!   and the GRES / GREC / GREG metrics.
//! - [`rela`]: a toy-scale region-attention model with its own autograd,
//!   trainer and checkpoint format.
//! - [`annotate`]: the two-player annotation game as a library and an HTTP
//!   service.
//! - [`cli`]: the `grex` command line.
//!
//! Runnable walkthroughs live in `examples/`.

pub use grex_annotate as annotate;
pub use grex_core as core;
pub use grex_rela as rela;

pub mod cli;
pub mod report;
