//! Uncompressed COCO run-length encoding.
//!
//! Runs are taken over the mask in column-major order and always start with
//! a background run, which may be zero.

use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::GeometryError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    /// `[height, width]`, as in COCO.
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

impl RleMask {
    pub fn height(&self) -> usize {
        self.size[0]
    }

    pub fn width(&self) -> usize {
        self.size[1]
    }

    /// Foreground pixel count, read directly off the odd runs.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            size: [height, width],
            counts: vec![(height * width) as u64],
        }
    }
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (h, w) = (mask.height(), mask.width());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(y, x);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask { size: [h, w], counts }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask, GeometryError> {
    let (h, w) = (rle.height(), rle.width());
    if h == 0 || w == 0 {
        return Err(GeometryError::EmptyDimensions);
    }
    let total: u64 = rle.counts.iter().sum();
    let n = (h * w) as u64;
    if total != n {
        return Err(GeometryError::MalformedRle { expected: n, actual: total });
    }
    let mut mask = BinaryMask::new(h, w);
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let c = c as usize;
        if i % 2 == 1 {
            for p in pos..pos + c {
                // column-major position -> (y, x)
                mask.set(p % h, p / h, true);
            }
        }
        pos += c;
    }
    Ok(mask)
}
