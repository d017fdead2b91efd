use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::geometry::{BBox, BinaryMask, RleMask};

pub type RefId = u64;
pub type ImageId = u64;
pub type AnnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Val,
    #[serde(rename = "testA")]
    TestA,
    #[serde(rename = "testB")]
    TestB,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::TestA, Split::TestB];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::TestA => "testA",
            Split::TestB => "testB",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| DatasetError::UnknownSplit(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    SingleTarget,
    MultiTarget,
    NoTarget,
}

impl SampleKind {
    pub fn from_target_count(n: usize) -> Self {
        match n {
            0 => SampleKind::NoTarget,
            1 => SampleKind::SingleTarget,
            _ => SampleKind::MultiTarget,
        }
    }
}

/// One segmented object instance, as stored in the instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub ann_id: AnnId,
    pub image_id: ImageId,
    pub mask: RleMask,
    pub bbox: BBox,
    pub category: String,
}

/// One (image, expression, targets) record with its materialized ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GrexSample {
    pub ref_id: RefId,
    pub image_id: ImageId,
    /// `(height, width)` in pixels.
    pub image_size: (usize, usize),
    pub expression: String,
    pub target_ids: Vec<AnnId>,
    pub gt_mask: BinaryMask,
    pub gt_boxes: Vec<BBox>,
    pub no_target: bool,
    pub split: Split,
}

impl GrexSample {
    pub fn kind(&self) -> SampleKind {
        classify_sample(self)
    }

    /// Checks the no-target equivalences and mask geometry.
    pub fn validate(&self) -> Result<(), String> {
        let (h, w) = self.image_size;
        if self.gt_mask.height() != h || self.gt_mask.width() != w {
            return Err(format!(
                "gt_mask is {}x{}, image is {h}x{w}",
                self.gt_mask.height(),
                self.gt_mask.width()
            ));
        }
        let empty_targets = self.target_ids.is_empty();
        let checks = [
            (self.no_target == empty_targets, "no_target flag disagrees with target_ids"),
            (self.gt_boxes.is_empty() == empty_targets, "gt_boxes disagree with target_ids"),
            (self.gt_mask.is_empty() == empty_targets, "gt_mask emptiness disagrees with target_ids"),
            (self.gt_boxes.len() == self.target_ids.len(), "one box per target expected"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(msg.to_string());
            }
        }
        Ok(())
    }
}

pub fn classify_sample(sample: &GrexSample) -> SampleKind {
    SampleKind::from_target_count(sample.target_ids.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyCounts {
    pub single_target: usize,
    pub multi_target: usize,
    pub no_target: usize,
}

impl TaxonomyCounts {
    pub fn of<'a>(samples: impl IntoIterator<Item = &'a GrexSample>) -> Self {
        let mut c = Self::default();
        for s in samples {
            match s.kind() {
                SampleKind::SingleTarget => c.single_target += 1,
                SampleKind::MultiTarget => c.multi_target += 1,
                SampleKind::NoTarget => c.no_target += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.single_target + self.multi_target + self.no_target
    }
}
