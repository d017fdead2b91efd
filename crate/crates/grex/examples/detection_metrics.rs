//! GREC scoring. A sample counts as a success only when every target is
//! found and nothing else is predicted. Output strategies decide which of
//! a model's scored boxes are kept.
//!
//!     cargo run -p grex --example detection_metrics

use grex::core::dataset::{GrexSample, Split};
use grex::core::geometry::{BBox, BinaryMask, ScoredBox};
use grex::core::metrics::{evaluate_grec, select_outputs, CountClass, DetPrediction, OutputStrategy};

fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::from_xywh([x, y, w, h]).unwrap()
}

fn sample(ref_id: u64, gt: Vec<BBox>) -> GrexSample {
    GrexSample {
        ref_id,
        image_id: 1,
        image_size: (64, 64),
        expression: String::new(),
        target_ids: (0..gt.len() as u64).collect(),
        no_target: gt.is_empty(),
        gt_mask: BinaryMask::new(64, 64),
        gt_boxes: gt,
        split: Split::Val,
    }
}

fn main() {
    let (left, right, far) = (b(0., 0., 20., 20.), b(40., 0., 20., 20.), b(30., 40., 10., 10.));
    let samples = vec![sample(1, vec![left]), sample(2, vec![left, right]), sample(3, vec![])];
    // what a detector might emit for each expression, with a count estimate
    let raw: Vec<(Vec<ScoredBox>, usize)> = vec![
        (vec![ScoredBox::new(left, 0.9).unwrap(), ScoredBox::new(far, 0.3).unwrap()], 1),
        (vec![ScoredBox::new(left, 0.8).unwrap(), ScoredBox::new(right, 0.6).unwrap()], 2),
        (vec![ScoredBox::new(far, 0.4).unwrap()], 0),
    ];

    for strategy in ["top-1", "threshold:0.5", "threshold:0.2", "count:0.7"] {
        let strategy: OutputStrategy = strategy.parse().unwrap();
        let pairs: Vec<_> = samples
            .iter()
            .zip(&raw)
            .map(|(s, (boxes, count))| {
                let (_, kept) =
                    select_outputs(BinaryMask::new(1, 1), boxes, strategy, Some(CountClass::from_target_count(*count))).unwrap();
                (DetPrediction::scored(s.ref_id, &kept), s.clone())
            })
            .collect();
        let r = evaluate_grec(&pairs, true).unwrap();
        println!(
            "{strategy:<14} Pr@F1 {:.3}  N-acc {:?}  T-acc {:?}  AP {:.3}",
            r.pr_f1,
            r.n_acc,
            r.t_acc,
            r.ap.as_ref().map_or(0.0, |a| a.ap)
        );
    }
}
