//! Mask, run-length and box primitives.

mod boxes;
mod mask;
mod rle;

pub use boxes::{box_giou, box_iou, BBox, ScoredBox};
pub use mask::{mask_iou, BinaryMask};
pub use rle::{rle_decode, rle_encode, RleMask};
