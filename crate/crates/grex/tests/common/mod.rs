#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grex_core::dataset::io::{ImageInfo, RefEntry};
use grex_core::dataset::{write_dataset, DatasetFiles, InstanceRecord, Split};
use grex_core::geometry::{BBox, BinaryMask};

pub fn square(y0: usize, x0: usize, side: usize) -> BinaryMask {
    BinaryMask::from_fn(32, 32, |y, x| (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x))
}

/// `(ann_id, image_id, mask)`: two 8x8 squares on image 1, one 4x4 on image 2.
pub fn instances() -> Vec<(u64, u64, BinaryMask)> {
    vec![(11, 1, square(0, 0, 8)), (12, 1, square(16, 16, 8)), (21, 2, square(0, 0, 4))]
}

pub fn bbox(ann: u64) -> BBox {
    match ann {
        11 => BBox::new(0., 0., 8., 8.).unwrap(),
        12 => BBox::new(16., 16., 24., 24.).unwrap(),
        21 => BBox::new(0., 0., 4., 4.).unwrap(),
        _ => BBox::new(28., 28., 32., 32.).unwrap(),
    }
}

/// val: 1 single, 2 multi, 3 no-target, 4 single (small), 5 no-target.
/// testA: the multi and the two no-target refs only.
pub const VAL: [(u64, u64, &[u64], &str); 5] = [
    (1, 1, &[11], "the top left square"),
    (2, 1, &[11, 12], "two squares"),
    (3, 1, &[], "the green circle"),
    (4, 2, &[21], "the small square"),
    (5, 2, &[], "the square on the right"),
];

pub fn write_fixture(root: &Path) {
    let mut files = DatasetFiles::default();
    for id in [1u64, 2] {
        files.instances.images.push(ImageInfo { id, height: 32, width: 32, file_name: format!("{id}.png") });
    }
    for (ann, img, m) in instances() {
        files.instances.annotations.push(InstanceRecord::from_mask(ann, img, "square", &m).unwrap().to_entry());
    }
    let entry = |(ref_id, image_id, anns, text): (u64, u64, &[u64], &str), split| RefEntry {
        ref_id,
        image_id,
        split,
        sentence: text.to_string(),
        ann_ids: anns.to_vec(),
        mask: None,
    };
    files.refs.insert(Split::Val, VAL.iter().map(|r| entry(*r, Split::Val)).collect());
    files.refs.insert(
        Split::TestA,
        VAL.iter().filter(|r| r.2.len() != 1).map(|r| entry(*r, Split::TestA)).collect(),
    );
    write_dataset(root, &files).unwrap();
}

pub fn gt_mask(anns: &[u64]) -> BinaryMask {
    let masks: Vec<BinaryMask> = instances().into_iter().filter(|(id, _, _)| anns.contains(id)).map(|i| i.2).collect();
    BinaryMask::from_fn(32, 32, |y, x| masks.iter().any(|m| m.get(y, x)))
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_grex"))
}

pub fn grex(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("GREX_DATASET_ROOT").output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}
