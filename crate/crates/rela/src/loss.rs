//! Multi-task training objective.

use grex_core::dataset::GrexSample;
use grex_core::metrics::CountClass;
use serde::{Deserialize, Serialize};

use crate::boxes::{box_pair_loss, dense_assignment, match_for_box_loss, minimap_target, normalize_box};
use crate::config::{BoxAssignment, MinimapTarget, ModelConfig};
use crate::error::ModelError;
use crate::model::ForwardVars;
use crate::tape::{Mat, Tape, Var};

/// Supervision derived once per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `H x W` of 0/1.
    pub mask: Mat,
    /// `P^2 x 1` occupancy fractions.
    pub minimap: Mat,
    pub count: CountClass,
    /// Normalized `(cx, cy, w, h)`, one per target.
    pub boxes: Vec<[f64; 4]>,
    /// `(region, target)` pairs for the dense box assignment.
    pub dense: Vec<(usize, usize)>,
}

impl Targets {
    pub fn from_sample(sample: &GrexSample, config: &ModelConfig) -> Result<Self, ModelError> {
        let [h, w] = config.image_size;
        let m = &sample.gt_mask;
        if [m.height(), m.width()] != [h, w] {
            return Err(ModelError::ImageShape {
                got: [m.height(), m.width()],
                want: [h, w],
            });
        }
        let p = config.regions_per_side;
        if sample.gt_boxes.len() > p * p {
            return Err(ModelError::TooManyTargets {
                gts: sample.gt_boxes.len(),
                regions: p * p,
            });
        }
        let occupancy = minimap_target(m, p);
        let minimap = match config.minimap {
            MinimapTarget::Binary => occupancy.iter().map(|&o| if o > 0.0 { 1.0 } else { 0.0 }).collect(),
            MinimapTarget::Soft => occupancy.clone(),
        };
        Ok(Targets {
            mask: Mat::from_shape_fn((h, w), |(y, x)| m.get(y, x) as u8 as f64),
            dense: dense_assignment(&sample.gt_boxes, &occupancy, p, h, w),
            minimap: Mat::from_shape_vec((p * p, 1), minimap).expect("p^2 cells"),
            count: CountClass::from_target_count(sample.target_ids.len()),
            boxes: sample.gt_boxes.iter().map(|b| normalize_box(b, h, w)).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mask: f64,
    pub boxes: f64,
    pub minimap: f64,
    pub count: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.total, self.mask, self.boxes, self.minimap, self.count].iter().all(|v| v.is_finite())
    }
}

/// Mean `L1 + (1 - GIoU)` over the assigned regions and its gradient.
fn box_term(pred: &Mat, targets: &Targets, assignment: BoxAssignment) -> Result<(f64, Mat), ModelError> {
    let mut grad = Mat::zeros(pred.dim());
    if targets.boxes.is_empty() {
        return Ok((0.0, grad));
    }
    let rows: Vec<[f64; 4]> = pred.rows().into_iter().map(|r| [r[0], r[1], r[2], r[3]]).collect();
    let pairs = match assignment {
        BoxAssignment::Dense if !targets.dense.is_empty() => targets.dense.clone(),
        _ => match_for_box_loss(&rows, &targets.boxes)?,
    };
    let n = pairs.len() as f64;
    let mut total = 0.0;
    for (r, g) in pairs {
        let (v, d) = box_pair_loss(rows[r], targets.boxes[g]);
        total += v / n;
        for k in 0..4 {
            grad[[r, k]] += d[k] / n;
        }
    }
    Ok((total, grad))
}

/// Record the weighted loss on the tape; returns the scalar variable and
/// the per-term values (unweighted, `total` weighted).
pub fn compute_loss(
    tape: &mut Tape,
    fv: &ForwardVars,
    targets: &Targets,
    config: &ModelConfig,
) -> Result<(Var, LossBreakdown), ModelError> {
    let lw = config.loss_weights;
    let mask = tape.bce_logits(fv.image_logits, targets.mask.clone());
    let minimap = tape.bce_logits(fv.xr_logits, targets.minimap.clone());
    let count = tape.cross_entropy(fv.count_logits, targets.count.index());
    let (bv, bg) = box_term(tape.value(fv.boxes), targets, config.box_assignment)?;
    let boxes = tape.precomputed(fv.boxes, bv, bg);
    let total = tape.weighted_sum(&[(mask, lw.mask), (boxes, lw.boxes), (minimap, lw.minimap), (count, lw.count)]);
    let b = LossBreakdown {
        total: tape.scalar(total),
        mask: tape.scalar(mask),
        boxes: tape.scalar(boxes),
        minimap: tape.scalar(minimap),
        count: tape.scalar(count),
    };
    Ok((total, b))
}
