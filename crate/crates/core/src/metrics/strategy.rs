//! Rules that turn raw per-region outputs into final masks and box sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BinaryMask, ScoredBox};

pub const DEFAULT_TAU: f64 = 0.7;
pub const MIN_MASK_PIXELS: u64 = 50;

/// Target-count class: 0..=5 exactly, 6 for "5+".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountClass(u8);

impl CountClass {
    pub const NUM_CLASSES: usize = 7;
    pub const FIVE_PLUS: CountClass = CountClass(6);

    pub fn from_target_count(n: usize) -> Self {
        CountClass(n.min(6) as u8)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < Self::NUM_CLASSES).then_some(CountClass(i as u8))
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }

    /// Exact count for classes 0..=5, `None` for "5+".
    pub fn exact(&self) -> Option<usize> {
        (self.0 <= 5).then_some(self.0 as usize)
    }
}

impl fmt::Display for CountClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact() {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("5+"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputStrategy {
    /// Keep boxes scoring at least `tau`.
    Threshold { tau: f64 },
    /// Keep the `k` best boxes, whatever their scores.
    TopK { k: usize },
    /// Gate on the predicted count: 0 empties everything, 1..=5 keeps that
    /// many boxes, 5+ falls back to `Threshold { tau }` with small-mask cleanup.
    CountDriven { tau: f64 },
    /// Clear masks with fewer than 50 foreground pixels; boxes as `Threshold { tau }`.
    FiftyPixel { tau: f64 },
}

impl Default for OutputStrategy {
    fn default() -> Self {
        OutputStrategy::CountDriven { tau: DEFAULT_TAU }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("unknown output strategy {0:?}; expected threshold[:tau], top-<k>, count[:tau] or fifty-pixel[:tau]")]
    Unknown(String),
    #[error("count-driven selection needs a predicted count")]
    MissingCount,
}

impl FromStr for OutputStrategy {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || StrategyError::Unknown(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let tau = || -> Result<f64, StrategyError> {
            match arg {
                None => Ok(DEFAULT_TAU),
                Some(a) => a.parse::<f64>().ok().filter(|t| (0.0..=1.0).contains(t)).ok_or_else(err),
            }
        };
        if let Some(k) = name.strip_prefix("top-") {
            if arg.is_some() {
                return Err(err());
            }
            return k.parse().map(|k| OutputStrategy::TopK { k }).map_err(|_| err());
        }
        match name {
            "threshold" => Ok(OutputStrategy::Threshold { tau: tau()? }),
            "count" => Ok(OutputStrategy::CountDriven { tau: tau()? }),
            "fifty-pixel" => Ok(OutputStrategy::FiftyPixel { tau: tau()? }),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for OutputStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputStrategy::Threshold { tau } => write!(f, "threshold:{tau}"),
            OutputStrategy::TopK { k } => write!(f, "top-{k}"),
            OutputStrategy::CountDriven { tau } => write!(f, "count:{tau}"),
            OutputStrategy::FiftyPixel { tau } => write!(f, "fifty-pixel:{tau}"),
        }
    }
}

fn ranked(boxes: &[ScoredBox]) -> Vec<ScoredBox> {
    let mut v = boxes.to_vec();
    // stable: equal scores keep region order
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
    v
}

fn threshold(boxes: &[ScoredBox], tau: f64) -> Vec<ScoredBox> {
    ranked(boxes).into_iter().filter(|b| b.score >= tau).collect()
}

/// Zero the mask if it has fewer than `MIN_MASK_PIXELS` foreground pixels.
pub fn clear_small_mask(mut mask: BinaryMask) -> BinaryMask {
    if mask.area() < MIN_MASK_PIXELS {
        mask.clear();
    }
    mask
}

/// Apply a strategy to a binarized mask and scored boxes. Returned boxes are
/// sorted by descending score.
pub fn select_outputs(
    mask: BinaryMask,
    boxes: &[ScoredBox],
    strategy: OutputStrategy,
    count: Option<CountClass>,
) -> Result<(BinaryMask, Vec<ScoredBox>), StrategyError> {
    Ok(match strategy {
        OutputStrategy::Threshold { tau } => (mask, threshold(boxes, tau)),
        OutputStrategy::TopK { k } => (mask, ranked(boxes).into_iter().take(k).collect()),
        OutputStrategy::FiftyPixel { tau } => (clear_small_mask(mask), threshold(boxes, tau)),
        OutputStrategy::CountDriven { tau } => {
            let count = count.ok_or(StrategyError::MissingCount)?;
            match count.exact() {
                Some(0) => {
                    let mut m = mask;
                    m.clear();
                    (m, Vec::new())
                }
                Some(c) => (mask, ranked(boxes).into_iter().take(c).collect()),
                None => (clear_small_mask(mask), threshold(boxes, tau)),
            }
        }
    })
}
