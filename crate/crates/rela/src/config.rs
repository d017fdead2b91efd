use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub mask: f64,
    pub boxes: f64,
    pub minimap: f64,
    pub count: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mask: 2.0,
            boxes: 5.0,
            minimap: 0.2,
            count: 1.0,
        }
    }
}

/// Which regions receive box supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxAssignment {
    /// Every region overlapping a target learns the box of the target it
    /// overlaps most.
    #[default]
    Dense,
    /// One region per target, optimal under L1 + (1 - GIoU).
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimapTarget {
    /// 1 for every cell holding any foreground pixel.
    #[default]
    Binary,
    /// Foreground fraction of each cell.
    Soft,
}

/// Model shape and loss weights. Image size is fixed at 4x the feature
/// size (two stride-2 stages) and the mask feature at 2x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    pub regions_per_side: usize,
    pub image_size: [usize; 2],
    pub feature_size: [usize; 2],
    pub text_len: usize,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub box_assignment: BoxAssignment,
    #[serde(default)]
    pub minimap: MinimapTarget,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            regions_per_side: 4,
            image_size: [64, 64],
            feature_size: [16, 16],
            text_len: 16,
            loss_weights: LossWeights::default(),
            box_assignment: BoxAssignment::default(),
            minimap: MinimapTarget::default(),
        }
    }
}

impl ModelConfig {
    /// Smallest useful shape: C=8, P=2, 8x8 features, 4 tokens.
    pub fn tiny() -> Self {
        Self {
            channels: 8,
            regions_per_side: 2,
            image_size: [32, 32],
            feature_size: [8, 8],
            text_len: 4,
            ..Self::default()
        }
    }

    pub fn num_regions(&self) -> usize {
        self.regions_per_side * self.regions_per_side
    }

    pub fn mask_size(&self) -> [usize; 2] {
        [self.feature_size[0] * 2, self.feature_size[1] * 2]
    }

    /// Channel widths of the three encoder stages.
    pub fn stage_channels(&self) -> [usize; 3] {
        [self.channels / 4, self.channels / 2, self.channels]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, msg: String| Err(ConfigError::Invalid { field, message: msg });
        if self.channels < 4 || self.channels % 4 != 0 {
            return bad("channels", format!("{} is not a positive multiple of 4", self.channels));
        }
        if self.regions_per_side == 0 {
            return bad("regions_per_side", "must be at least 1".into());
        }
        let [h, w] = self.feature_size;
        if h < self.regions_per_side || w < self.regions_per_side {
            return bad(
                "feature_size",
                format!("{h}x{w} is smaller than the {0}x{0} region grid", self.regions_per_side),
            );
        }
        if self.image_size != [h * 4, w * 4] {
            return bad(
                "image_size",
                format!("{:?} must be 4x feature_size ({}x{})", self.image_size, h * 4, w * 4),
            );
        }
        if self.text_len == 0 {
            return bad("text_len", "must be at least 1".into());
        }
        let l = &self.loss_weights;
        for (field, v) in [
            ("loss_weights.mask", l.mask),
            ("loss_weights.boxes", l.boxes),
            ("loss_weights.minimap", l.minimap),
            ("loss_weights.count", l.count),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, format!("{v} is not a non-negative number"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let c: ModelConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
