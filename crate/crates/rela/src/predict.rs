//! Inference: raw model outputs and their conversion to task predictions.

use grex_core::dataset::{GrexSample, RgbImage};
use grex_core::geometry::{box_iou, BinaryMask, ScoredBox};
use grex_core::metrics::det::DetPrediction;
use grex_core::metrics::seg::SegPrediction;
use grex_core::metrics::{select_outputs, CountClass, OutputStrategy};
use ndarray::Axis;

use crate::boxes::denormalize_box;
use crate::error::ModelError;
use crate::model::Model;
use crate::tape::{Mat, Tape};

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `H_m x W_m`
    pub mask_logits: Mat,
    /// Mask logits resampled to image size.
    pub image_logits: Mat,
    /// `P^2 x (H_m*W_m)`
    pub region_masks: Mat,
    pub x_r: Vec<f64>,
    /// Normalized `(cx, cy, w, h)` per region.
    pub boxes: Vec<[f64; 4]>,
    pub count_logits: Vec<f64>,
}

impl ModelOutput {
    pub fn count(&self) -> CountClass {
        let best = self
            .count_logits
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > self.count_logits[b] { i } else { b });
        CountClass::from_index(best).expect("7 count logits")
    }

    /// Sigmoid of the image-size logits, binarized at 0.5 (logit > 0).
    pub fn binary_mask(&self) -> BinaryMask {
        let (h, w) = self.image_logits.dim();
        BinaryMask::from_fn(h, w, |y, x| self.image_logits[[y, x]] > 0.0)
    }

    /// Region boxes in pixels, scored by their region's `x_r`.
    pub fn scored_boxes(&self, image_h: usize, image_w: usize) -> Vec<ScoredBox> {
        self.boxes
            .iter()
            .zip(&self.x_r)
            .map(|(b, &s)| ScoredBox::new(denormalize_box(*b, image_h, image_w), s).expect("sigmoid score"))
            .collect()
    }
}

/// Drop boxes overlapping a higher-scored kept box at IoU above `iou`.
pub fn suppress_duplicates(boxes: &[ScoredBox], iou: f64) -> Vec<ScoredBox> {
    let mut order: Vec<&ScoredBox> = boxes.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<ScoredBox> = Vec::new();
    for b in order {
        if kept.iter().all(|k| box_iou(&k.bbox, &b.bbox) <= iou) {
            kept.push(*b);
        }
    }
    kept
}

pub const NMS_IOU: f64 = 0.5;

/// Final outputs for one sample under a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mask: BinaryMask,
    pub boxes: Vec<ScoredBox>,
    pub count: CountClass,
}

impl Prediction {
    pub fn seg(&self, ref_id: u64) -> SegPrediction {
        SegPrediction::new(ref_id, self.mask.clone())
    }

    pub fn det(&self, ref_id: u64) -> DetPrediction {
        let mut d = DetPrediction::scored(ref_id, &self.boxes);
        d.count = self.count.exact().map(|n| n as u32);
        d
    }
}

impl Model {
    pub fn run(&self, image: &RgbImage, expression: &str) -> Result<ModelOutput, ModelError> {
        let img = self.image_matrix(image)?;
        let tokens = self.vocab.encode(expression, self.config.text_len);
        let mut tape = Tape::new();
        let fv = self.forward(&mut tape, &self.params.values, &img, &tokens);
        let rows = |m: &Mat| m.axis_iter(Axis(0)).map(|r| [r[0], r[1], r[2], r[3]]).collect();
        Ok(ModelOutput {
            mask_logits: tape.value(fv.mask_logits).clone(),
            image_logits: tape.value(fv.image_logits).clone(),
            region_masks: tape.value(fv.region_masks).clone(),
            x_r: tape.value(fv.x_r).iter().copied().collect(),
            boxes: rows(tape.value(fv.boxes)),
            count_logits: tape.value(fv.count_logits).iter().copied().collect(),
        })
    }

    /// Forward pass plus output selection.
    pub fn predict(&self, image: &RgbImage, expression: &str, strategy: OutputStrategy) -> Result<Prediction, ModelError> {
        let out = self.run(image, expression)?;
        let [h, w] = self.config.image_size;
        let candidates = suppress_duplicates(&out.scored_boxes(h, w), NMS_IOU);
        let count = out.count();
        let (mask, boxes) = select_outputs(out.binary_mask(), &candidates, strategy, Some(count))?;
        Ok(Prediction { mask, boxes, count })
    }

    /// Predictions for every sample, paired with its ground truth. Work is
    /// split across threads; the result is in input order.
    pub fn predict_all<'a>(
        &self,
        items: &[(&'a GrexSample, &'a RgbImage)],
        strategy: OutputStrategy,
    ) -> Result<Vec<Prediction>, ModelError> {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
        let chunk = items.len().div_ceil(threads).max(1);
        let parts: Vec<Result<Vec<Prediction>, ModelError>> = std::thread::scope(|s| {
            let handles: Vec<_> = items
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|(sample, img)| self.predict(img, &sample.expression, strategy))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("prediction thread")).collect()
        });
        let mut out = Vec::with_capacity(items.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}
