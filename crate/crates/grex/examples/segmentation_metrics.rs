//! GRES scoring: gIoU, cIoU, Pr@X, N-acc and T-acc on a handful of samples,
//! including no-target expressions.
//!
//!     cargo run -p grex --example segmentation_metrics

use grex::core::dataset::{GrexSample, Split};
use grex::core::geometry::{BBox, BinaryMask};
use grex::core::metrics::{evaluate_gres, SegPrediction};

fn rows(lo: usize, hi: usize) -> BinaryMask {
    BinaryMask::from_fn(8, 8, |y, _| (lo..hi).contains(&y))
}

fn sample(ref_id: u64, gt: BinaryMask) -> GrexSample {
    let no_target = gt.is_empty();
    GrexSample {
        ref_id,
        image_id: 1,
        image_size: (8, 8),
        expression: format!("expression {ref_id}"),
        target_ids: if no_target { vec![] } else { vec![ref_id] },
        gt_boxes: if no_target { vec![] } else { vec![BBox::new(0., 0., 8., 8.).unwrap()] },
        no_target,
        gt_mask: gt,
        split: Split::Val,
    }
}

fn main() {
    let empty = BinaryMask::new(8, 8);
    let pairs = vec![
        // exact hit
        (SegPrediction::new(1, rows(0, 4)), sample(1, rows(0, 4))),
        // half of the target
        (SegPrediction::new(2, rows(0, 2)), sample(2, rows(0, 4))),
        // no-target, correctly left empty
        (SegPrediction::new(3, empty.clone()), sample(3, empty.clone())),
        // no-target, but something was segmented
        (SegPrediction::new(4, rows(6, 8)), sample(4, empty)),
    ];
    let r = evaluate_gres(&pairs).unwrap();
    println!("gIoU  {:.4}", r.giou);
    println!("cIoU  {:.4}  ({} / {} pixels)", r.ciou, r.total_intersection, r.total_union);
    for (t, v) in &r.pr_at {
        println!("Pr@{t} {v:.4}");
    }
    println!("N-acc {:?}  T-acc {:?}", r.n_acc, r.t_acc);
    for (id, iou) in &r.per_sample_iou {
        println!("  ref {id}: IoU {iou:.3}");
    }
}
