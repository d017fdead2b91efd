//! Prediction and candidate file formats consumed by the evaluators.
//!
//! All three are JSON arrays keyed by `ref_id`:
//!
//! - segmentation: `{ref_id, mask: {size: [h, w], counts: [...]}, no_target?}`
//! - detection: `{ref_id, boxes: [{bbox: [x, y, w, h], score?}], count?}`
//! - generation: `{ref_id, expression}`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::det::DetPrediction;
use super::gen::{CaptionPair, GregItem};
use super::seg::SegPrediction;
use crate::dataset::{AnnId, GrexSample, ImageId, RefId, SampleKind};
use crate::error::{DatasetError, MetricError};
use crate::geometry::{rle_decode, rle_encode, BBox, RleMask};
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegPredictionRecord {
    pub ref_id: RefId,
    pub mask: RleMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_target: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetBoxRecord {
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetPredictionRecord {
    pub ref_id: RefId,
    pub boxes: Vec<DetBoxRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenCandidateRecord {
    pub ref_id: RefId,
    pub expression: String,
}

pub trait HasRefId {
    fn ref_id(&self) -> RefId;
}

impl HasRefId for SegPrediction {
    fn ref_id(&self) -> RefId {
        self.ref_id
    }
}

impl HasRefId for DetPrediction {
    fn ref_id(&self) -> RefId {
        self.ref_id
    }
}

impl HasRefId for GenCandidateRecord {
    fn ref_id(&self) -> RefId {
        self.ref_id
    }
}

impl SegPredictionRecord {
    pub fn from_prediction(p: &SegPrediction) -> Self {
        Self {
            ref_id: p.ref_id,
            mask: rle_encode(&p.mask),
            no_target: p.declared_no_target,
        }
    }
}

impl DetPredictionRecord {
    pub fn from_prediction(p: &DetPrediction) -> Self {
        Self {
            ref_id: p.ref_id,
            boxes: p
                .boxes
                .iter()
                .enumerate()
                .map(|(i, b)| DetBoxRecord {
                    bbox: b.to_xywh(),
                    score: p.scores.as_ref().map(|s| s[i]),
                })
                .collect(),
            count: p.count,
        }
    }
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        DatasetError::schema(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string())
    })
}

/// Serialize records as pretty JSON. Output is byte-stable for equal input.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(records).expect("records serialize");
    fs::write(path, text + "\n").map_err(|e| DatasetError::io(path, e))
}

/// Read segmentation predictions; a record flagged `no_target` has its mask
/// cleared.
pub fn read_seg_predictions(path: &Path) -> Result<Vec<SegPrediction>, DatasetError> {
    let records: Vec<SegPredictionRecord> = read_records(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mask = rle_decode(&r.mask)
                .map_err(|e| DatasetError::schema(format!("{} [{i}] (ref_id {})", path.display(), r.ref_id), e.to_string()))?;
            Ok(SegPrediction {
                ref_id: r.ref_id,
                mask,
                declared_no_target: r.no_target,
            }
            .apply_declared_no_target())
        })
        .collect()
}

pub fn read_det_predictions(path: &Path) -> Result<Vec<DetPrediction>, DatasetError> {
    let records: Vec<DetPredictionRecord> = read_records(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let loc = format!("{} [{i}] (ref_id {})", path.display(), r.ref_id);
            let boxes = r
                .boxes
                .iter()
                .map(|b| BBox::from_xywh(b.bbox).map_err(|e| DatasetError::schema(&loc, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let scores: Option<Vec<f64>> = r.boxes.iter().map(|b| b.score).collect();
            if scores.is_none() && r.boxes.iter().any(|b| b.score.is_some()) {
                return Err(DatasetError::schema(&loc, "scores must be given for all boxes or none"));
            }
            if let Some(s) = scores.iter().flatten().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(DatasetError::schema(&loc, format!("score {s} outside [0, 1]")));
            }
            Ok(DetPrediction {
                ref_id: r.ref_id,
                boxes,
                scores,
                count: r.count,
            })
        })
        .collect()
}

pub fn read_gen_candidates(path: &Path) -> Result<Vec<GenCandidateRecord>, DatasetError> {
    read_records(path)
}

/// Pair predictions with ground truth by `ref_id`, in sample order. Any ref
/// that is missing, duplicated or unknown is reported.
pub fn align_by_ref<P: HasRefId>(preds: Vec<P>, samples: &[GrexSample]) -> Result<Vec<(P, GrexSample)>, MetricError> {
    let mut by_ref: HashMap<RefId, P> = HashMap::with_capacity(preds.len());
    let mut problems = Vec::new();
    for p in preds {
        let id = p.ref_id();
        if by_ref.insert(id, p).is_some() {
            problems.push(format!("{id} (duplicate prediction)"));
        }
    }
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        match by_ref.remove(&s.ref_id) {
            Some(p) => out.push((p, s.clone())),
            None => problems.push(format!("{} (no prediction)", s.ref_id)),
        }
    }
    let mut extra: Vec<RefId> = by_ref.into_keys().collect();
    extra.sort_unstable();
    problems.extend(extra.into_iter().map(|id| format!("{id} (not in dataset split)")));
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(MetricError::RefMismatch(problems))
    }
}

/// Build GREG items: each target sample's references are all expressions in
/// the split written for the same image and the same target set. No-target
/// samples are skipped, there is no set to describe.
pub fn greg_items(candidates: Vec<GenCandidateRecord>, samples: &[GrexSample]) -> Result<Vec<GregItem>, MetricError> {
    let targets: Vec<&GrexSample> = samples.iter().filter(|s| !s.no_target).collect();
    let owned: Vec<GrexSample> = targets.iter().map(|s| (*s).clone()).collect();
    let keep: BTreeSet<RefId> = owned.iter().map(|s| s.ref_id).collect();
    let candidates: Vec<GenCandidateRecord> = candidates.into_iter().filter(|c| keep.contains(&c.ref_id)).collect();
    let pairs = align_by_ref(candidates, &owned)?;

    let mut groups: BTreeMap<(ImageId, Vec<AnnId>), Vec<Vec<String>>> = BTreeMap::new();
    for s in &owned {
        let mut key = s.target_ids.clone();
        key.sort_unstable();
        groups.entry((s.image_id, key)).or_default().push(tokenize(&s.expression));
    }
    Ok(pairs
        .into_iter()
        .map(|(c, s)| {
            let mut key = s.target_ids.clone();
            key.sort_unstable();
            GregItem {
                pair: CaptionPair {
                    candidate: tokenize(&c.expression),
                    references: groups[&(s.image_id, key)].clone(),
                },
                kind: SampleKind::from_target_count(s.target_ids.len()),
            }
        })
        .collect())
}
