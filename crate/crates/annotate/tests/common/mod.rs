#![allow(dead_code)]

pub mod model;

use std::path::Path;

use grex_annotate::project::PoolEntry;
use grex_annotate::Catalog;
use grex_core::dataset::io::{ImageInfo, InstanceFile, RefEntry};
use grex_core::dataset::{write_dataset, DatasetFiles, InstanceRecord, Split};
use grex_core::geometry::BinaryMask;

/// Images 1..=4 hold 0, 1, 2 and 3 instances. Instance `10 * image + k` is
/// an 4x4 square at column `8k`.
pub fn instance_file() -> InstanceFile {
    let mut file = InstanceFile::default();
    for image_id in 1..=4u64 {
        file.images.push(ImageInfo {
            id: image_id,
            height: 32,
            width: 32,
            file_name: format!("{image_id}.png"),
        });
        for k in 0..(image_id - 1) {
            let x0 = 8 * k as usize;
            let mask = BinaryMask::from_fn(32, 32, |y, x| (4..8).contains(&y) && (x0..x0 + 4).contains(&x));
            let rec = InstanceRecord::from_mask(10 * image_id + k, image_id, "square", &mask).unwrap();
            file.annotations.push(rec.to_entry());
        }
    }
    file
}

pub fn pool() -> Vec<PoolEntry> {
    vec![
        PoolEntry { split: Split::Train, image_id: 2, expression: "the square on the left".into() },
        PoolEntry { split: Split::Train, image_id: 3, expression: "two squares".into() },
        PoolEntry { split: Split::Train, image_id: 4, expression: "the middle square".into() },
        PoolEntry { split: Split::Val, image_id: 3, expression: "the right square".into() },
    ]
}

pub fn catalog() -> Catalog {
    let mut c = Catalog::from_instances(&instance_file()).unwrap();
    c.expressions = pool();
    c
}

/// Same catalog on disk, with the pool as `refs_<split>.json`.
pub fn write_project(dir: &Path) {
    let mut files = DatasetFiles { instances: instance_file(), ..Default::default() };
    for (i, p) in pool().into_iter().enumerate() {
        let targets = if p.image_id == 3 { vec![30, 31] } else { vec![p.image_id * 10] };
        files.refs.entry(p.split).or_default().push(RefEntry {
            ref_id: i as u64 + 1,
            image_id: p.image_id,
            split: p.split,
            sentence: p.expression,
            ann_ids: targets,
            mask: None,
        });
    }
    write_dataset(dir, &files).unwrap();
}
