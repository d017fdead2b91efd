//! Greedy IoU matching between predicted and ground-truth boxes.
//!
//!     cargo run -p grex --example box_matching

use grex::core::geometry::{box_giou, box_iou, BBox};
use grex::core::metrics::match_boxes;

fn main() {
    let gts = [BBox::new(0., 0., 10., 10.).unwrap(), BBox::new(8., 0., 18., 10.).unwrap()];
    let preds = [
        BBox::new(1., 0., 11., 10.).unwrap(),
        BBox::new(7., 0., 17., 10.).unwrap(),
        BBox::new(30., 30., 40., 40.).unwrap(),
    ];
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            println!("pred {i} / gt {j}: IoU {:.3}  GIoU {:+.3}", box_iou(p, g), box_giou(p, g));
        }
    }
    let m = match_boxes(&preds, &gts, 0.5);
    for (p, g, iou) in &m.tp_pairs {
        println!("matched pred {p} -> gt {g} (IoU {iou:.3})");
    }
    println!("false positives {:?}, missed {:?}", m.fp_preds, m.fn_gts);
}
