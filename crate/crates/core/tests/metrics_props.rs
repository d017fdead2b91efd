use grex_core::dataset::{GrexSample, Split};
use grex_core::geometry::{box_iou, BBox, BinaryMask, ScoredBox};
use grex_core::metrics::det::{average_precision, evaluate_grec, match_boxes, sample_success, DetPrediction};
use grex_core::metrics::gen::{CaptionPair, CiderScorer};
use grex_core::metrics::seg::{evaluate_gres, SegPrediction};
use grex_core::metrics::strategy::{select_outputs, OutputStrategy};
use grex_core::metrics::meteor;
use grex_core::text::tokenize;
use proptest::prelude::*;

fn det_sample(ref_id: u64, boxes: Vec<BBox>) -> GrexSample {
    let mut mask = BinaryMask::new(2, 2);
    if !boxes.is_empty() {
        mask.set(0, 0, true);
    }
    GrexSample {
        ref_id,
        image_id: ref_id,
        image_size: (2, 2),
        expression: String::new(),
        target_ids: (0..boxes.len() as u64).collect(),
        no_target: boxes.is_empty(),
        gt_boxes: boxes,
        gt_mask: mask,
        split: Split::Val,
    }
}

/// Exhaustive one-to-one assignment: maximize TP count, then total IoU.
fn brute_force(preds: &[BBox], gts: &[BBox], thr: f64) -> (usize, f64) {
    fn go(i: usize, preds: &[BBox], gts: &[BBox], used: &mut Vec<bool>, thr: f64) -> (usize, f64) {
        if i == preds.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, preds, gts, used, thr);
        for j in 0..gts.len() {
            let iou = box_iou(&preds[i], &gts[j]);
            if !used[j] && iou >= thr {
                used[j] = true;
                let (c, s) = go(i + 1, preds, gts, used, thr);
                used[j] = false;
                let cand = (c + 1, s + iou);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1 + 1e-12) {
                    best = cand;
                }
            }
        }
        best
    }
    go(0, preds, gts, &mut vec![false; gts.len()], thr)
}

fn small_box() -> impl Strategy<Value = BBox> {
    (0u8..12, 0u8..12, 2u8..10, 2u8..10)
        .prop_map(|(x, y, w, h)| BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn greedy_matches_exhaustive(
        preds in prop::collection::vec(small_box(), 0..=4),
        gts in prop::collection::vec(small_box(), 0..=4),
    ) {
        let m = match_boxes(&preds, &gts, 0.5);
        let (count, total) = brute_force(&preds, &gts, 0.5);
        prop_assert_eq!(m.tp_pairs.len(), count);
        let greedy_total: f64 = m.tp_pairs.iter().map(|t| t.2).sum();
        prop_assert!((greedy_total - total).abs() < 1e-9);
    }

    #[test]
    fn matching_is_one_to_one(
        preds in prop::collection::vec(small_box(), 0..=6),
        gts in prop::collection::vec(small_box(), 0..=6),
        thr in 0.1f64..=1.0,
    ) {
        let m = match_boxes(&preds, &gts, thr);
        let mut p_seen = vec![0; preds.len()];
        let mut g_seen = vec![0; gts.len()];
        for &(i, j, iou) in &m.tp_pairs {
            p_seen[i] += 1;
            g_seen[j] += 1;
            prop_assert!(iou >= thr);
        }
        for &i in &m.fp_preds { p_seen[i] += 1; }
        for &j in &m.fn_gts { g_seen[j] += 1; }
        prop_assert!(p_seen.iter().all(|&c| c == 1));
        prop_assert!(g_seen.iter().all(|&c| c == 1));
        prop_assert!(m.tp_pairs.len() <= preds.len().min(gts.len()));
        prop_assert_eq!(m.tp_pairs.len() + m.fp_preds.len(), preds.len());
        prop_assert_eq!(m.tp_pairs.len() + m.fn_gts.len(), gts.len());
    }

    #[test]
    fn redundant_box_breaks_success(gts in prop::collection::vec(small_box(), 1..=3), extra in small_box()) {
        let s = det_sample(1, gts.clone());
        prop_assert!(sample_success(&gts, &s, 0.5));
        let mut more = gts.clone();
        more.push(extra);
        prop_assert!(!sample_success(&more, &s, 0.5));
    }

    #[test]
    fn giou_is_permutation_invariant(ious in prop::collection::vec(0usize..=8, 1..12), rot in 0usize..12) {
        let pairs: Vec<_> = ious.iter().enumerate().map(|(i, &k)| {
            let gt = BinaryMask::from_fn(2, 4, |y, _| y == 0);
            let pred = BinaryMask::from_fn(2, 4, |y, x| y == 0 && x < k.min(4) || (k > 4 && y == 1 && x < k - 4));
            (SegPrediction::new(i as u64, pred), mask_sample(i as u64, gt))
        }).collect();
        let mut rotated = pairs.clone();
        rotated.rotate_left(rot % pairs.len());
        let a = evaluate_gres(&pairs).unwrap();
        let b = evaluate_gres(&rotated).unwrap();
        prop_assert!((a.giou - b.giou).abs() < 1e-12);
        let mean = a.per_sample_iou.iter().map(|v| v.1).sum::<f64>() / pairs.len() as f64;
        prop_assert_eq!(a.giou, mean);
        prop_assert_eq!(a.ciou, b.ciou);
    }
}

fn mask_sample(ref_id: u64, gt: BinaryMask) -> GrexSample {
    let empty = gt.is_empty();
    GrexSample {
        ref_id,
        image_id: ref_id,
        image_size: (gt.height(), gt.width()),
        expression: String::new(),
        target_ids: if empty { vec![] } else { vec![1] },
        gt_boxes: if empty { vec![] } else { vec![BBox::new(0., 0., 1., 1.).unwrap()] },
        no_target: empty,
        gt_mask: gt,
        split: Split::Val,
    }
}

#[test]
fn ciou_favors_large_objects() {
    let big = BinaryMask::full(40, 40);
    let mut pairs = vec![(SegPrediction::new(0, big.clone()), mask_sample(0, big))];
    for i in 1..10 {
        let gt = BinaryMask::from_fn(40, 40, |y, x| y < 2 && x < 2);
        let pred = BinaryMask::from_fn(40, 40, |y, x| y == 39 && x == 39);
        pairs.push((SegPrediction::new(i, pred), mask_sample(i, gt)));
    }
    let r = evaluate_gres(&pairs).unwrap();
    assert!(r.ciou > r.giou, "cIoU {} gIoU {}", r.ciou, r.giou);
    assert!((r.giou - 0.1).abs() < 1e-12);
}

#[test]
fn ciou_of_identical_equal_area_predictions() {
    let gt = BinaryMask::from_fn(6, 6, |y, _| y < 3);
    let pred = BinaryMask::from_fn(6, 6, |y, _| (1..4).contains(&y));
    let pairs: Vec<_> = (0..5).map(|i| (SegPrediction::new(i, pred.clone()), mask_sample(i, gt.clone()))).collect();
    let r = evaluate_gres(&pairs).unwrap();
    assert_eq!(r.ciou, grex_core::geometry::mask_iou(&pred, &gt).unwrap());
}

#[test]
fn nacc_tacc_partition() {
    let pairs: Vec<_> = (0..7)
        .map(|i| {
            let gt = if i % 3 == 0 { BinaryMask::new(4, 4) } else { BinaryMask::full(4, 4) };
            let pred = if i % 2 == 0 { BinaryMask::new(4, 4) } else { BinaryMask::full(4, 4) };
            (SegPrediction::new(i, pred), mask_sample(i, gt))
        })
        .collect();
    let r = evaluate_gres(&pairs).unwrap();
    assert_eq!(r.num_no_target, 3);
    assert_eq!(r.num_no_target + (r.num_samples - r.num_no_target), 7);
    // no-target ids 0,3,6: empty preds at 0 and 6
    assert_eq!(r.n_acc, Some(2.0 / 3.0));
    // target ids 1,2,4,5: non-empty at 1 and 5
    assert_eq!(r.t_acc, Some(0.5));
}

#[test]
fn top1_on_multi_and_no_target_set() {
    let mk = |x: f64| BBox::new(x, 0., x + 10., 10.).unwrap();
    let mut pairs = Vec::new();
    for i in 0..6u64 {
        let gt = if i % 2 == 0 { vec![mk(0.), mk(20.)] } else { vec![] };
        let raw = [ScoredBox::new(mk(0.), 0.9).unwrap(), ScoredBox::new(mk(20.), 0.8).unwrap()];
        let (_, kept) = select_outputs(BinaryMask::new(1, 1), &raw, OutputStrategy::TopK { k: 1 }, None).unwrap();
        pairs.push((DetPrediction::scored(i, &kept), det_sample(i, gt)));
    }
    let r = evaluate_grec(&pairs, false).unwrap();
    assert_eq!((r.pr_f1, r.n_acc, r.t_acc), (0.0, Some(0.0), Some(1.0)));
}

#[test]
fn ap_with_leading_false_positive() {
    let g = vec![BBox::new(0., 0., 10., 10.).unwrap(), BBox::new(20., 0., 30., 10.).unwrap()];
    let boxes = [
        ScoredBox::new(BBox::new(50., 50., 60., 60.).unwrap(), 0.9).unwrap(),
        ScoredBox::new(g[0], 0.8).unwrap(),
        ScoredBox::new(g[1], 0.7).unwrap(),
    ];
    let r = average_precision(&[(DetPrediction::scored(1, &boxes), det_sample(1, g))]).unwrap();
    // hand PR curve: (r, p) = (0, 0), (.5, .5), (1, 2/3); envelope 2/3 on both steps
    assert!((r.ap - 2.0 / 3.0).abs() < 1e-12);
    assert!(r.per_threshold.iter().all(|(_, v)| (v - 2.0 / 3.0).abs() < 1e-12));
}

#[test]
fn ap_partial_localization() {
    // one box with IoU 0.6 against its gt: TP for thresholds 0.50..=0.60, FP above
    let g = vec![BBox::new(0., 0., 10., 10.).unwrap()];
    let b = [ScoredBox::new(BBox::new(0., 0., 10., 6.).unwrap(), 0.5).unwrap()];
    let r = average_precision(&[(DetPrediction::scored(1, &b), det_sample(1, g))]).unwrap();
    assert!((r.ap - 0.3).abs() < 1e-12, "{}", r.ap);
}

#[test]
fn cider_reference_order_and_lower_bound() {
    let refs_a = vec![tokenize("the red box"), tokenize("red square on the left")];
    let refs_b: Vec<_> = refs_a.iter().rev().cloned().collect();
    let corpus = vec![refs_a.clone(), vec![tokenize("all blue circles")], vec![tokenize("the two triangles")]];
    let s = CiderScorer::new(&corpus).unwrap();
    let cand = tokenize("the red box");
    assert_eq!(s.score(&cand, &refs_a), s.score(&cand, &refs_b));
    assert!(s.score(&cand, &refs_a) >= s.score(&tokenize("yellow hexagon"), &refs_a));
    assert_eq!(s.score(&tokenize("yellow hexagon"), &refs_a), 0.0);
}

#[test]
fn meteor_bounds_and_monotonicity() {
    let r = &["the big red box on the left"];
    let one = meteor(&CaptionPair::from_text("the red box", r));
    let more = meteor(&CaptionPair::from_text("the big red box", r));
    assert!((0.0..=1.0).contains(&one) && (0.0..=1.0).contains(&more));
    assert!(more > one);
}
