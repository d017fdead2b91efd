//! GREC metrics.
//!
//! A sample is a success when its predicted boxes, matched one-to-one to the
//! ground truth at IoU ≥ 0.5, leave no false positive and no false negative.
//! A no-target sample is a success exactly when no box is predicted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{GrexSample, RefId};
use crate::error::MetricError;
use crate::geometry::{box_iou, BBox, ScoredBox};

pub const SUCCESS_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DetPrediction {
    pub ref_id: RefId,
    pub boxes: Vec<BBox>,
    /// Confidence per box; only average precision needs it.
    pub scores: Option<Vec<f64>>,
    /// Predicted number of targets, if the producer emitted one (values
    /// above 5 stand for the "5+" class).
    pub count: Option<u32>,
}

impl DetPrediction {
    pub fn unscored(ref_id: RefId, boxes: Vec<BBox>) -> Self {
        Self {
            ref_id,
            boxes,
            scores: None,
            count: None,
        }
    }

    pub fn scored(ref_id: RefId, boxes: &[ScoredBox]) -> Self {
        Self {
            ref_id,
            boxes: boxes.iter().map(|b| b.bbox).collect(),
            scores: Some(boxes.iter().map(|b| b.score).collect()),
            count: None,
        }
    }

    pub fn scored_boxes(&self) -> Result<Vec<ScoredBox>, MetricError> {
        let missing = || MetricError::MissingScore {
            ref_id: self.ref_id.to_string(),
        };
        let scores = self.scores.as_ref().ok_or_else(missing)?;
        if scores.len() != self.boxes.len() {
            return Err(missing());
        }
        self.boxes
            .iter()
            .zip(scores)
            .map(|(b, s)| ScoredBox::new(*b, *s).map_err(MetricError::from))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(pred index, gt index, iou)`
    pub tp_pairs: Vec<(usize, usize, f64)>,
    pub fp_preds: Vec<usize>,
    pub fn_gts: Vec<usize>,
}

/// Greedy one-to-one matching by descending IoU.
///
/// Every (pred, gt) pair with IoU ≥ `iou_threshold` is a candidate; candidates
/// are accepted in order of IoU (ties: lower pred index, then lower gt index)
/// when both endpoints are still free. A ground truth covered by several
/// predictions therefore keeps only its highest-IoU one.
pub fn match_boxes(preds: &[BBox], gts: &[BBox], iou_threshold: f64) -> MatchResult {
    assert!(
        iou_threshold > 0.0 && iou_threshold <= 1.0,
        "iou threshold must lie in (0, 1]"
    );
    let mut candidates = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let iou = box_iou(p, g);
            if iou >= iou_threshold {
                candidates.push((i, j, iou));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut tp_pairs = Vec::new();
    for (i, j, iou) in candidates {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            tp_pairs.push((i, j, iou));
        }
    }
    MatchResult {
        tp_pairs,
        fp_preds: (0..preds.len()).filter(|&i| !pred_used[i]).collect(),
        fn_gts: (0..gts.len()).filter(|&j| !gt_used[j]).collect(),
    }
}

pub fn sample_success(pred: &[BBox], gt: &GrexSample, iou_threshold: f64) -> bool {
    if gt.no_target {
        return pred.is_empty();
    }
    let m = match_boxes(pred, &gt.gt_boxes, iou_threshold);
    m.fp_preds.is_empty() && m.fn_gts.is_empty()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetReport {
    /// Precision@(F1=1, IoU≥0.5)
    pub pr_f1: f64,
    pub n_acc: Option<f64>,
    pub t_acc: Option<f64>,
    pub ap: Option<ApReport>,
    pub num_samples: usize,
    pub num_no_target: usize,
    pub successes: Vec<(RefId, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// Mean over IoU thresholds 0.50, 0.55, ..., 0.95.
    pub ap: f64,
    pub per_threshold: Vec<(f64, f64)>,
}

fn check_alignment(pairs: &[(DetPrediction, GrexSample)]) -> Result<(), MetricError> {
    let bad: Vec<String> = pairs
        .iter()
        .filter(|(p, g)| p.ref_id != g.ref_id)
        .map(|(p, g)| format!("{} != {}", p.ref_id, g.ref_id))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(MetricError::RefMismatch(bad))
    }
}

pub fn evaluate_grec(pairs: &[(DetPrediction, GrexSample)], with_ap: bool) -> Result<DetReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    check_alignment(pairs)?;
    let ap = if with_ap { Some(average_precision(pairs)?) } else { None };
    let successes: Vec<(RefId, bool)> = pairs
        .par_iter()
        .map(|(pred, gt)| (gt.ref_id, sample_success(&pred.boxes, gt, SUCCESS_IOU)))
        .collect();
    let (mut nt_tp, mut nt_total, mut t_tn, mut t_total) = (0usize, 0usize, 0usize, 0usize);
    for (pred, gt) in pairs {
        if gt.no_target {
            nt_total += 1;
            nt_tp += pred.boxes.is_empty() as usize;
        } else {
            t_total += 1;
            t_tn += (!pred.boxes.is_empty()) as usize;
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(DetReport {
        pr_f1: successes.iter().filter(|(_, s)| *s).count() as f64 / pairs.len() as f64,
        n_acc: ratio(nt_tp, nt_total),
        t_acc: ratio(t_tn, t_total),
        ap,
        num_samples: pairs.len(),
        num_no_target: nt_total,
        successes,
    })
}

pub fn ap_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// COCO-range AP: mean over IoU thresholds of the all-point interpolated area
/// under the dataset-wide precision/recall curve.
pub fn average_precision(pairs: &[(DetPrediction, GrexSample)]) -> Result<ApReport, MetricError> {
    check_alignment(pairs)?;
    let scored: Vec<Vec<ScoredBox>> = pairs.iter().map(|(p, _)| p.scored_boxes()).collect::<Result<_, _>>()?;
    let per_threshold: Vec<(f64, f64)> = ap_thresholds()
        .into_iter()
        .map(|t| (t, ap_at(&scored, pairs, t)))
        .collect();
    let ap = per_threshold.iter().map(|(_, v)| v).sum::<f64>() / per_threshold.len() as f64;
    Ok(ApReport { ap, per_threshold })
}

fn ap_at(scored: &[Vec<ScoredBox>], pairs: &[(DetPrediction, GrexSample)], threshold: f64) -> f64 {
    let total_gt: usize = pairs.iter().map(|(_, g)| g.gt_boxes.len()).sum();
    // (score, sample, box index), ranked by score; ties keep input order
    let mut ranked: Vec<(f64, usize, usize)> = scored
        .iter()
        .enumerate()
        .flat_map(|(s, boxes)| boxes.iter().enumerate().map(move |(i, b)| (b.score, s, i)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    if total_gt == 0 || ranked.is_empty() {
        return 0.0;
    }
    let mut gt_used: Vec<Vec<bool>> = pairs.iter().map(|(_, g)| vec![false; g.gt_boxes.len()]).collect();
    let mut is_tp = Vec::with_capacity(ranked.len());
    for &(_, s, i) in &ranked {
        let pred = &scored[s][i].bbox;
        let gts = &pairs[s].1.gt_boxes;
        let best = gts
            .iter()
            .enumerate()
            .filter(|(j, _)| !gt_used[s][*j])
            .map(|(j, g)| (j, box_iou(pred, g)))
            .filter(|(_, iou)| *iou >= threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((j, _)) => {
                gt_used[s][j] = true;
                is_tp.push(true);
            }
            None => is_tp.push(false),
        }
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(is_tp.len());
    let mut precision = Vec::with_capacity(is_tp.len());
    for hit in is_tp {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / total_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    area_all_point(&recall, &precision)
}

/// All-point interpolated PR area: precision is replaced by its running
/// maximum from the right, then summed over recall steps.
pub fn area_all_point(recall: &[f64], precision: &[f64]) -> f64 {
    let mut envelope = precision.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev_r = 0.0;
    let mut area = 0.0;
    for (r, p) in recall.iter().zip(envelope) {
        area += (r - prev_r) * p;
        prev_r = *r;
    }
    area
}
