//! gRefCOCO-style files.
//!
//! A dataset root holds:
//!
//! - `instances.json`: COCO-like `{images: [...], annotations: [...]}` where
//!   every annotation carries `ann_id`, `image_id`, `category`,
//!   `bbox: [x, y, w, h]` and an uncompressed RLE `segmentation`.
//! - `refs_<split>.json`: a list of `{ref_id, image_id, split, sentence,
//!   ann_ids}` records. An optional `mask` (RLE) is checked against the
//!   union of the listed instances.
//! - `images/<image_id>.png` (optional, needed only for model training).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sample::{AnnId, GrexSample, ImageId, InstanceRecord, RefId, Split};
use crate::error::DatasetError;
use crate::geometry::{rle_decode, rle_encode, BBox, BinaryMask, RleMask};

pub const INSTANCES_FILE: &str = "instances.json";
pub const IMAGES_DIR: &str = "images";

pub fn refs_file_name(split: Split) -> String {
    format!("refs_{split}.json")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub ann_id: AnnId,
    pub image_id: ImageId,
    pub category: String,
    pub bbox: [f64; 4],
    pub segmentation: RleMask,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<AnnotationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefEntry {
    pub ref_id: RefId,
    pub image_id: ImageId,
    pub split: Split,
    pub sentence: String,
    pub ann_ids: Vec<AnnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
}

/// In-memory form of a whole dataset root, used for writing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetFiles {
    pub instances: InstanceFile,
    pub refs: BTreeMap<Split, Vec<RefEntry>>,
}

impl InstanceRecord {
    pub fn to_entry(&self) -> AnnotationEntry {
        AnnotationEntry {
            ann_id: self.ann_id,
            image_id: self.image_id,
            category: self.category.clone(),
            bbox: self.bbox.to_xywh(),
            segmentation: self.mask.clone(),
        }
    }

    /// Instance from a decoded mask, box taken as the tight pixel bounds.
    pub fn from_mask(ann_id: AnnId, image_id: ImageId, category: &str, mask: &BinaryMask) -> Option<Self> {
        let (x1, y1, x2, y2) = mask.bounds()?;
        Some(Self {
            ann_id,
            image_id,
            mask: rle_encode(mask),
            bbox: BBox::new(x1 as f64, y1 as f64, x2 as f64, y2 as f64).ok()?,
            category: category.to_string(),
        })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        DatasetError::schema(
            format!("{}:{}:{}", path.display(), e.line(), e.column()),
            e.to_string(),
        )
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value).expect("dataset records serialize");
    fs::write(path, text).map_err(|e| DatasetError::io(path, e))
}

/// Validated instance table keyed by annotation id.
pub struct InstanceIndex {
    pub images: HashMap<ImageId, ImageInfo>,
    pub instances: HashMap<AnnId, (InstanceRecord, BinaryMask)>,
}

impl InstanceIndex {
    pub fn from_file(file: &InstanceFile, source: &str) -> Result<Self, DatasetError> {
        let mut images = HashMap::new();
        for (i, img) in file.images.iter().enumerate() {
            if img.height == 0 || img.width == 0 {
                return Err(DatasetError::schema(format!("{source} images[{i}]"), "zero-sized image"));
            }
            if images.insert(img.id, img.clone()).is_some() {
                return Err(DatasetError::schema(
                    format!("{source} images[{i}]"),
                    format!("duplicate image id {}", img.id),
                ));
            }
        }
        let mut instances = HashMap::new();
        for (i, ann) in file.annotations.iter().enumerate() {
            let loc = format!("{source} annotations[{i}] (ann_id {})", ann.ann_id);
            let img = images
                .get(&ann.image_id)
                .ok_or_else(|| DatasetError::schema(&loc, format!("unknown image_id {}", ann.image_id)))?;
            if ann.segmentation.size != [img.height, img.width] {
                return Err(DatasetError::schema(
                    &loc,
                    format!(
                        "segmentation size {:?} differs from image {}x{}",
                        ann.segmentation.size, img.height, img.width
                    ),
                ));
            }
            let mask = rle_decode(&ann.segmentation).map_err(|e| DatasetError::schema(&loc, e.to_string()))?;
            let bbox = BBox::from_xywh(ann.bbox).map_err(|e| DatasetError::schema(&loc, e.to_string()))?;
            let Some((x1, y1, x2, y2)) = mask.bounds() else {
                return Err(DatasetError::schema(&loc, "instance mask is empty"));
            };
            let tight = [x1 as f64, y1 as f64, x2 as f64, y2 as f64];
            let given = [bbox.x1, bbox.y1, bbox.x2, bbox.y2];
            if tight.iter().zip(given).any(|(t, g)| (t - g).abs() > 1.0) {
                return Err(DatasetError::schema(
                    &loc,
                    format!("bbox {:?} does not bound mask (tight {:?})", ann.bbox, tight),
                ));
            }
            let record = InstanceRecord {
                ann_id: ann.ann_id,
                image_id: ann.image_id,
                mask: ann.segmentation.clone(),
                bbox,
                category: ann.category.clone(),
            };
            if instances.insert(ann.ann_id, (record, mask)).is_some() {
                return Err(DatasetError::schema(&loc, "duplicate ann_id"));
            }
        }
        Ok(Self { images, instances })
    }

    pub fn load(root: &Path) -> Result<Self, DatasetError> {
        let path = root.join(INSTANCES_FILE);
        let file: InstanceFile = read_json(&path)?;
        Self::from_file(&file, &path.display().to_string())
    }

    /// Materialize a sample from a reference record.
    pub fn build_sample(&self, entry: &RefEntry, location: &str) -> Result<GrexSample, DatasetError> {
        let img = self
            .images
            .get(&entry.image_id)
            .ok_or_else(|| DatasetError::schema(location, format!("unknown image_id {}", entry.image_id)))?;
        let mut gt_mask = BinaryMask::new(img.height, img.width);
        let mut gt_boxes = Vec::with_capacity(entry.ann_ids.len());
        let mut seen = HashSet::new();
        for &ann_id in &entry.ann_ids {
            if !seen.insert(ann_id) {
                return Err(DatasetError::schema(location, format!("ann_id {ann_id} listed twice")));
            }
            let (record, mask) = self
                .instances
                .get(&ann_id)
                .ok_or_else(|| DatasetError::schema(location, format!("unknown ann_id {ann_id}")))?;
            if record.image_id != entry.image_id {
                return Err(DatasetError::schema(
                    location,
                    format!("ann_id {ann_id} belongs to image {}", record.image_id),
                ));
            }
            gt_mask.or_assign(mask).expect("instance sizes checked at index time");
            gt_boxes.push(record.bbox);
        }
        if let Some(stored) = &entry.mask {
            let stored = rle_decode(stored).map_err(|e| DatasetError::schema(location, e.to_string()))?;
            if stored != gt_mask {
                return Err(DatasetError::schema(
                    location,
                    "stored union mask differs from the union of the listed instances",
                ));
            }
        }
        let sample = GrexSample {
            ref_id: entry.ref_id,
            image_id: entry.image_id,
            image_size: (img.height, img.width),
            expression: entry.sentence.clone(),
            target_ids: entry.ann_ids.clone(),
            gt_mask,
            gt_boxes,
            no_target: entry.ann_ids.is_empty(),
            split: entry.split,
        };
        sample.validate().map_err(|m| DatasetError::schema(location, m))?;
        Ok(sample)
    }
}

/// Load every sample of one split. Records tagged with another split are a
/// schema violation.
pub fn load_dataset(root: &Path, split: Split) -> Result<Vec<GrexSample>, DatasetError> {
    let index = InstanceIndex::load(root)?;
    load_split_with_index(root, split, &index)
}

pub fn load_split_with_index(root: &Path, split: Split, index: &InstanceIndex) -> Result<Vec<GrexSample>, DatasetError> {
    let path = root.join(refs_file_name(split));
    let refs: Vec<RefEntry> = read_json(&path)?;
    let mut ids = HashSet::new();
    refs.iter()
        .enumerate()
        .map(|(i, entry)| {
            let loc = format!("{} [{i}] (ref_id {})", path.display(), entry.ref_id);
            if entry.split != split {
                return Err(DatasetError::schema(
                    &loc,
                    format!("record tagged {} in the {split} file", entry.split),
                ));
            }
            if !ids.insert(entry.ref_id) {
                return Err(DatasetError::schema(&loc, "duplicate ref_id"));
            }
            index.build_sample(entry, &loc)
        })
        .collect()
}

/// Parse a split name as given on the command line and load it.
pub fn load_dataset_named(root: &Path, split: &str) -> Result<Vec<GrexSample>, DatasetError> {
    load_dataset(root, split.parse()?)
}

pub fn write_dataset(root: &Path, files: &DatasetFiles) -> Result<(), DatasetError> {
    fs::create_dir_all(root).map_err(|e| DatasetError::io(root, e))?;
    write_json(&root.join(INSTANCES_FILE), &files.instances)?;
    for split in Split::ALL {
        let empty = Vec::new();
        let refs = files.refs.get(&split).unwrap_or(&empty);
        write_json(&root.join(refs_file_name(split)), refs)?;
    }
    Ok(())
}

pub fn image_path(root: &Path, image_id: ImageId) -> PathBuf {
    root.join(IMAGES_DIR).join(format!("{image_id}.png"))
}

/// RGB pixels of an image, row-major, channel values scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn blank(height: usize, width: usize, fill: [f32; 3]) -> Self {
        Self {
            height,
            width,
            pixels: vec![fill; height * width],
        }
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        let raw: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer sized to image");
        img.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Png)
            .expect("in-memory png encode");
        buf
    }
}

pub fn load_image(root: &Path, image_id: ImageId) -> Result<RgbImage, DatasetError> {
    let path = image_path(root, image_id);
    if !path.exists() {
        return Err(DatasetError::MissingFile(path));
    }
    let img = image::open(&path)
        .map_err(|e| DatasetError::Image {
            path: path.clone(),
            message: e.to_string(),
        })?
        .to_rgb8();
    Ok(RgbImage {
        height: img.height() as usize,
        width: img.width() as usize,
        pixels: img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect(),
    })
}

pub fn write_image(root: &Path, image_id: ImageId, img: &RgbImage) -> Result<(), DatasetError> {
    let dir = root.join(IMAGES_DIR);
    fs::create_dir_all(&dir).map_err(|e| DatasetError::io(&dir, e))?;
    let path = image_path(root, image_id);
    fs::write(&path, img.to_png_bytes()).map_err(|e| DatasetError::io(&path, e))
}

/// Image ids that appear in more than one of the evaluation splits.
pub fn eval_split_overlap(splits: &[(Split, &[GrexSample])]) -> Vec<ImageId> {
    let mut owner: HashMap<ImageId, Split> = HashMap::new();
    let mut leaked = Vec::new();
    for (split, samples) in splits {
        if *split == Split::Train {
            continue;
        }
        for s in samples.iter() {
            match owner.get(&s.image_id) {
                Some(o) if o != split => leaked.push(s.image_id),
                Some(_) => {}
                None => {
                    owner.insert(s.image_id, *split);
                }
            }
        }
    }
    leaked.sort_unstable();
    leaked.dedup();
    leaked
}
