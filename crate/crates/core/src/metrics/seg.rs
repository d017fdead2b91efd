//! GRES metrics: gIoU, cIoU, Pr@X, N-acc and T-acc.
//!
//! No-target samples score IoU 1 when the prediction has no foreground pixel
//! and 0 otherwise. cIoU accumulates intersections and unions over every
//! sample, so a no-target sample adds nothing when predicted empty and adds
//! its false-positive pixels to the union otherwise.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GrexSample, RefId};
use crate::error::MetricError;
use crate::geometry::BinaryMask;

pub const PR_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub struct SegPrediction {
    pub ref_id: RefId,
    pub mask: BinaryMask,
    /// Output of a dedicated no-target head, when the model has one.
    pub declared_no_target: Option<bool>,
}

impl SegPrediction {
    pub fn new(ref_id: RefId, mask: BinaryMask) -> Self {
        Self {
            ref_id,
            mask,
            declared_no_target: None,
        }
    }

    /// Zero the mask when a no-target head fired. Scoring itself only looks
    /// at mask emptiness.
    pub fn apply_declared_no_target(mut self) -> Self {
        if self.declared_no_target == Some(true) {
            self.mask.clear();
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    #[serde(rename = "gIoU")]
    pub giou: f64,
    #[serde(rename = "cIoU")]
    pub ciou: f64,
    /// Raised when the accumulated union is zero and cIoU was reported as 0.
    pub ciou_degenerate: bool,
    /// Keys are the thresholds formatted with one decimal, e.g. `"0.7"`.
    pub pr_at: BTreeMap<String, f64>,
    /// `None` when the set has no no-target samples.
    pub n_acc: Option<f64>,
    /// `None` when the set has no target samples.
    pub t_acc: Option<f64>,
    pub num_samples: usize,
    pub num_no_target: usize,
    pub total_intersection: u64,
    pub total_union: u64,
    pub per_sample_iou: Vec<(RefId, f64)>,
}

impl SegReport {
    pub fn pr(&self, threshold: f64) -> Option<f64> {
        self.pr_at.get(&format!("{threshold:.1}")).copied()
    }
}

fn check_shape(pred: &SegPrediction, gt: &GrexSample) -> Result<(), MetricError> {
    if !pred.mask.same_shape(&gt.gt_mask) {
        return Err(crate::error::GeometryError::DimensionMismatch {
            left: (pred.mask.height(), pred.mask.width()),
            right: (gt.gt_mask.height(), gt.gt_mask.width()),
        }
        .into());
    }
    Ok(())
}

pub fn per_sample_iou(pred: &SegPrediction, gt: &GrexSample) -> Result<f64, MetricError> {
    check_shape(pred, gt)?;
    if gt.no_target {
        return Ok(if pred.mask.is_empty() { 1.0 } else { 0.0 });
    }
    Ok(crate::geometry::mask_iou(&pred.mask, &gt.gt_mask)?)
}

pub fn evaluate_gres(pairs: &[(SegPrediction, GrexSample)]) -> Result<SegReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mismatched: Vec<String> = pairs
        .iter()
        .filter(|(p, g)| p.ref_id != g.ref_id)
        .map(|(p, g)| format!("{} != {}", p.ref_id, g.ref_id))
        .collect();
    if !mismatched.is_empty() {
        return Err(MetricError::RefMismatch(mismatched));
    }

    // per-sample work in parallel, accumulation in input order
    let stats: Vec<(f64, u64, u64)> = pairs
        .par_iter()
        .map(|(pred, gt)| {
            Ok((
                per_sample_iou(pred, gt)?,
                pred.mask.intersection_area(&gt.gt_mask)?,
                pred.mask.union_area(&gt.gt_mask)?,
            ))
        })
        .collect::<Result<_, MetricError>>()?;

    let mut per_sample = Vec::with_capacity(pairs.len());
    let (mut inter, mut union) = (0u64, 0u64);
    let mut above = [0usize; PR_THRESHOLDS.len()];
    let (mut nt_tp, mut nt_total) = (0usize, 0usize);
    let (mut t_tn, mut t_total) = (0usize, 0usize);

    for ((pred, gt), (iou, i, u)) in pairs.iter().zip(stats) {
        per_sample.push((gt.ref_id, iou));
        inter += i;
        union += u;
        let predicted_empty = pred.mask.is_empty();
        for (slot, &x) in above.iter_mut().zip(&PR_THRESHOLDS) {
            let hit = if gt.no_target { predicted_empty } else { iou > x };
            *slot += hit as usize;
        }
        if gt.no_target {
            nt_total += 1;
            nt_tp += predicted_empty as usize;
        } else {
            t_total += 1;
            t_tn += (!predicted_empty) as usize;
        }
    }

    let n = pairs.len() as f64;
    let giou = per_sample.iter().map(|(_, v)| v).sum::<f64>() / n;
    let (ciou, degenerate) = if union == 0 {
        (0.0, true)
    } else {
        (inter as f64 / union as f64, false)
    };
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(SegReport {
        giou,
        ciou,
        ciou_degenerate: degenerate,
        pr_at: PR_THRESHOLDS
            .iter()
            .zip(above)
            .map(|(x, c)| (format!("{x:.1}"), c as f64 / n))
            .collect(),
        n_acc: ratio(nt_tp, nt_total),
        t_acc: ratio(t_tn, t_total),
        num_samples: pairs.len(),
        num_no_target: nt_total,
        total_intersection: inter,
        total_union: union,
        per_sample_iou: per_sample,
    })
}
