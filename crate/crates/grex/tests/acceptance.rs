//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero on any FAIL.
//!
//!     cargo test -p grex --release --test acceptance
//!
//! Set GREX_ACCEPTANCE_ONLY=3,5 to run a subset.

#[allow(dead_code)]
#[path = "../../annotate/tests/common/mod.rs"]
mod annotate_fixture;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use grex_annotate::{Project, TaskState};
use grex_core::dataset::{generate_synthetic, load_dataset, load_image, write_dataset, GrexSample, Split, SyntheticConfig};
use grex_core::geometry::{box_giou, box_iou, mask_iou, rle_decode, rle_encode, BBox, BinaryMask, RleMask, ScoredBox};
use grex_core::metrics::det::{evaluate_grec, match_boxes, sample_success, DetPrediction};
use grex_core::metrics::seg::{evaluate_gres, SegPrediction};
use grex_core::metrics::{meteor, select_outputs, CaptionPair, CiderScorer, OutputStrategy};
use grex_core::text::tokenize;
use grex_rela::tape::{Mat, Tape};
use grex_rela::train::sample_gradients;
use grex_rela::{aggregate_mask, compute_loss, train_toy, BoxAssignment, Model, ModelConfig, Targets, TrainConfig, Vocab};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad())
    }
}

// ---------------------------------------------------------------- oracles

fn pixel_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for y in 0..a.height() {
        for x in 0..a.width() {
            inter += (a.get(y, x) && b.get(y, x)) as u32;
            union += (a.get(y, x) || b.get(y, x)) as u32;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Unit cells of a 32x32 grid covered by an integer box.
fn cells(b: &BBox) -> BTreeSet<(u32, u32)> {
    let mut s = BTreeSet::new();
    for y in b.y1 as u32..b.y2 as u32 {
        for x in b.x1 as u32..b.x2 as u32 {
            s.insert((y, x));
        }
    }
    s
}

fn cell_iou_giou(a: &BBox, b: &BBox) -> (f64, f64) {
    let (ca, cb) = (cells(a), cells(b));
    let inter = ca.intersection(&cb).count() as f64;
    let union = ca.union(&cb).count() as f64;
    let hull = BBox::new(a.x1.min(b.x1), a.y1.min(b.y1), a.x2.max(b.x2), a.y2.max(b.y2)).unwrap();
    let c = cells(&hull).len() as f64;
    let iou = inter / union;
    (iou, iou - (c - union) / c)
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let (x, y) = (rng.random_range(0..31u32), rng.random_range(0..31u32));
    let (w, h) = (rng.random_range(1..=32 - x), rng.random_range(1..=32 - y));
    BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BinaryMask {
    let density = rng.random_range(0.0..1.0);
    BinaryMask::from_fn(h, w, |_, _| rng.random_bool(density))
}

/// Column-major runs, starting with background.
fn rle_oracle(m: &BinaryMask) -> Vec<u64> {
    let mut counts = vec![0u64];
    let mut current = false;
    for x in 0..m.width() {
        for y in 0..m.height() {
            if m.get(y, x) != current {
                counts.push(0);
                current = !current;
            }
            *counts.last_mut().unwrap() += 1;
        }
    }
    counts
}

/// Best one-to-one assignment by enumeration: most TPs, then most IoU.
fn exhaustive(preds: &[BBox], gts: &[BBox], thr: f64) -> (usize, f64) {
    fn go(i: usize, preds: &[BBox], gts: &[BBox], used: &mut Vec<bool>, thr: f64) -> (usize, f64) {
        if i == preds.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, preds, gts, used, thr);
        for j in 0..gts.len() {
            let iou = box_iou(&preds[i], &gts[j]);
            if used[j] || iou < thr {
                continue;
            }
            used[j] = true;
            let (c, s) = go(i + 1, preds, gts, used, thr);
            used[j] = false;
            if c + 1 > best.0 || (c + 1 == best.0 && s + iou > best.1 + 1e-12) {
                best = (c + 1, s + iou);
            }
        }
        best
    }
    go(0, preds, gts, &mut vec![false; gts.len()], thr)
}

fn det_sample(ref_id: u64, boxes: Vec<BBox>) -> GrexSample {
    let covered: BTreeSet<(u32, u32)> = boxes.iter().flat_map(cells).collect();
    GrexSample {
        ref_id,
        image_id: ref_id,
        image_size: (32, 32),
        expression: String::new(),
        target_ids: (0..boxes.len() as u64).collect(),
        no_target: boxes.is_empty(),
        gt_mask: BinaryMask::from_fn(32, 32, |y, x| covered.contains(&(y as u32, x as u32))),
        gt_boxes: boxes,
        split: Split::Val,
    }
}

fn mask_sample(ref_id: u64, gt: BinaryMask) -> GrexSample {
    let no_target = gt.is_empty();
    GrexSample {
        ref_id,
        image_id: ref_id,
        image_size: (gt.height(), gt.width()),
        expression: String::new(),
        target_ids: if no_target { vec![] } else { vec![1] },
        gt_boxes: if no_target { vec![] } else { vec![BBox::new(0., 0., 1., 1.).unwrap()] },
        no_target,
        gt_mask: gt,
        split: Split::Val,
    }
}

// ---------------------------------------------------------------- criteria

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = Vec::new();
    for i in 0..1000 {
        let (a, b) = (random_mask(&mut rng, 32, 32), random_mask(&mut rng, 32, 32));
        if mask_iou(&a, &b).unwrap() != pixel_iou(&a, &b) {
            bad.push(format!("mask case {i}"));
        }
    }
    for i in 0..1000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let (iou, giou) = cell_iou_giou(&a, &b);
        if box_iou(&a, &b) != iou {
            bad.push(format!("box_iou case {i}"));
        }
        if box_giou(&a, &b) != giou {
            bad.push(format!("box_giou case {i}: {} vs {giou}", box_giou(&a, &b)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(bad.is_empty() && secs < 30.0, format!("3 x 1000 cases exact in {secs:.2}s"), || {
        format!("{} mismatches ({:?}), {secs:.2}s", bad.len(), bad.first())
    })
}

fn top1_degenerate_row() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = SyntheticConfig::default().with_quota(Split::Val, 0, 12, 12);
    generate_synthetic(&config, 11).unwrap().write(dir.path()).unwrap();
    let samples = load_dataset(dir.path(), Split::Val).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pairs: Vec<_> = samples
        .into_iter()
        .map(|s| {
            // raw candidates: every gt box with a high score plus distractors
            let mut raw: Vec<ScoredBox> =
                s.gt_boxes.iter().map(|b| ScoredBox::new(*b, rng.random_range(0.6..1.0)).unwrap()).collect();
            for _ in 0..rng.random_range(1..4) {
                raw.push(ScoredBox::new(random_box(&mut rng), rng.random_range(0.0..1.0)).unwrap());
            }
            let (_, kept) = select_outputs(BinaryMask::new(1, 1), &raw, OutputStrategy::TopK { k: 1 }, None).unwrap();
            (DetPrediction::scored(s.ref_id, &kept), s)
        })
        .collect();
    let multi = pairs.iter().filter(|p| p.1.gt_boxes.len() >= 2).count();
    let none = pairs.iter().filter(|p| p.1.no_target).count();
    let r = evaluate_grec(&pairs, false).unwrap();
    let got = (r.pr_f1, r.n_acc, r.t_acc);
    check(
        multi + none == pairs.len() && none > 0 && multi > 0 && got == (0.0, Some(0.0), Some(1.0)),
        format!("{multi} multi + {none} no-target: Pr@F1 0.00, N-acc 0.00, T-acc 100.00"),
        || format!("{multi} multi + {none} no-target of {}: got {got:?}", pairs.len()),
    )
}

fn single_target_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pairs = Vec::new();
    let mut hits = 0;
    for i in 0..1000u64 {
        let gt = random_box(&mut rng);
        // half the predictions are jittered copies so both outcomes are common
        let pred = if rng.random_bool(0.5) {
            let d = |rng: &mut ChaCha8Rng| rng.random_range(-3.0..3.0f64).round();
            let x1 = (gt.x1 + d(&mut rng)).clamp(0.0, 30.0);
            let y1 = (gt.y1 + d(&mut rng)).clamp(0.0, 30.0);
            BBox::new(x1, y1, (gt.x2 + d(&mut rng)).clamp(x1 + 1.0, 32.0), (gt.y2 + d(&mut rng)).clamp(y1 + 1.0, 32.0)).unwrap()
        } else {
            random_box(&mut rng)
        };
        hits += (cell_iou_giou(&pred, &gt).0 >= 0.5) as usize;
        pairs.push((DetPrediction::unscored(i, vec![pred]), det_sample(i, vec![gt])));
    }
    let classic = hits as f64 / pairs.len() as f64;
    let r = evaluate_grec(&pairs, false).unwrap();
    check(
        r.pr_f1 == classic && hits > 100 && hits < 900,
        format!("1000 single-target samples: Pr@F1 = Precision@0.5 = {classic:.3}"),
        || format!("Pr@F1 {} vs classic {classic} ({hits} hits)", r.pr_f1),
    )
}

fn greedy_vs_exhaustive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let small = |rng: &mut ChaCha8Rng| {
        let (x, y) = (rng.random_range(0..12u32) as f64, rng.random_range(0..12u32) as f64);
        BBox::new(x, y, x + rng.random_range(2..10u32) as f64, y + rng.random_range(2..10u32) as f64).unwrap()
    };
    let mut cases = 0;
    let mut bad = Vec::new();
    for np in 0..=4 {
        for ng in 0..=4 {
            for _ in 0..300 {
                let preds: Vec<BBox> = (0..np).map(|_| small(&mut rng)).collect();
                let gts: Vec<BBox> = (0..ng).map(|_| small(&mut rng)).collect();
                let m = match_boxes(&preds, &gts, 0.5);
                let (tp, total) = exhaustive(&preds, &gts, 0.5);
                let greedy_total: f64 = m.tp_pairs.iter().map(|t| t.2).sum();
                let success = sample_success(&preds, &det_sample(0, gts.clone()), 0.5);
                let want_success = if ng == 0 { np == 0 } else { tp == np && tp == ng };
                if m.tp_pairs.len() != tp || (greedy_total - total).abs() > 1e-9 || success != want_success {
                    bad.push((np, ng));
                }
                cases += 1;
            }
        }
    }
    check(bad.is_empty(), format!("{cases} fixtures up to 4x4: TP count and success agree"), || {
        format!("{} disagreements, first at {:?}", bad.len(), bad[0])
    })
}

fn giou_no_target_fixture() -> Outcome {
    let rows = |lo: usize, hi: usize| BinaryMask::from_fn(10, 10, |y, _| (lo..hi).contains(&y));
    let empty = BinaryMask::new(10, 10);
    let dot = BinaryMask::from_fn(10, 10, |y, x| y == 0 && x == 0);
    let pair = BinaryMask::from_fn(10, 10, |y, x| y == 0 && x < 2);
    // (gt, prediction, hand IoU)
    let fixture = [
        (rows(0, 5), rows(0, 5), 1.0),
        (rows(0, 5), rows(0, 2), 20.0 / 50.0),
        (rows(0, 5), rows(3, 8), 20.0 / 80.0),
        (rows(0, 5), empty.clone(), 0.0),
        (rows(0, 5), rows(5, 10), 0.0),
        (empty.clone(), empty.clone(), 1.0),
        (empty.clone(), dot.clone(), 0.0),
        (empty.clone(), empty.clone(), 1.0),
        (dot, pair, 0.5),
        (rows(0, 10), rows(0, 9), 0.9),
    ];
    let hand = fixture.iter().map(|f| f.2).sum::<f64>() / fixture.len() as f64;
    let pairs: Vec<_> = fixture
        .iter()
        .enumerate()
        .map(|(i, (gt, pred, _))| (SegPrediction::new(i as u64, pred.clone()), mask_sample(i as u64, gt.clone())))
        .collect();
    let r = evaluate_gres(&pairs).unwrap();
    check((r.giou - hand).abs() < 1e-9, format!("gIoU {:.6} = hand mean {hand:.6}", r.giou), || {
        format!("gIoU {} vs hand {hand}", r.giou)
    })
}

fn two_target_sample() -> GrexSample {
    let a = BBox::new(2., 3., 12., 11.).unwrap();
    let b = BBox::new(18., 16., 29., 30.).unwrap();
    let inside = |bb: &BBox, y: usize, x: usize| {
        (x as f64) >= bb.x1 && (x as f64) < bb.x2 && (y as f64) >= bb.y1 && (y as f64) < bb.y2
    };
    GrexSample {
        ref_id: 1,
        image_id: 1,
        image_size: (32, 32),
        expression: "two red boxes".into(),
        target_ids: vec![1, 2],
        gt_mask: BinaryMask::from_fn(32, 32, |y, x| inside(&a, y, x) || inside(&b, y, x)),
        gt_boxes: vec![a, b],
        no_target: false,
        split: Split::Train,
    }
}

fn loss_at(model: &Model, params: &[Mat], image: &Mat, tokens: &[usize], targets: &Targets) -> f64 {
    let mut tape = Tape::new();
    let fv = model.forward(&mut tape, params, image, tokens);
    compute_loss(&mut tape, &fv, targets, &model.config).unwrap().1.total
}

fn gradient_check() -> Outcome {
    let mut worst = (String::new(), 0.0f64);
    let mut groups = 0;
    for assignment in [BoxAssignment::Dense, BoxAssignment::Hungarian] {
        let config = ModelConfig {
            box_assignment: assignment,
            ..ModelConfig::tiny()
        };
        let mut model = Model::new(config, Vocab::build(["two red boxes"]), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // generic point away from the near-symmetric init
        for v in model.params.values.iter_mut() {
            v.mapv_inplace(|x| x + rng.random_range(-0.1..0.1));
        }
        let q = model.params.index("ria_q").unwrap();
        model.params.values[q].mapv_inplace(|x| x * 6.0);
        let image = Mat::from_shape_simple_fn((32 * 32, 3), || rng.random_range(-1.0..1.0));
        let tokens = [1, 2, 3, 0];
        let targets = Targets::from_sample(&two_target_sample(), &model.config).unwrap();
        let (_, analytic) = sample_gradients(&model, &model.params.values, &image, &tokens, &targets).unwrap();

        let h = 1e-4;
        let mut params = model.params.values.clone();
        for (g, name) in model.params.names.iter().enumerate() {
            let mut numeric = Mat::zeros(params[g].dim());
            for idx in 0..params[g].len() {
                let orig = params[g].as_slice().unwrap()[idx];
                params[g].as_slice_mut().unwrap()[idx] = orig + h;
                let up = loss_at(&model, &params, &image, &tokens, &targets);
                params[g].as_slice_mut().unwrap()[idx] = orig - h;
                let down = loss_at(&model, &params, &image, &tokens, &targets);
                params[g].as_slice_mut().unwrap()[idx] = orig;
                numeric.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * h);
            }
            let norm = |m: &Mat| m.mapv(|v| v * v).sum().sqrt();
            let scale = norm(&analytic[g]).max(norm(&numeric));
            let err = if scale == 0.0 { 0.0 } else { norm(&(&analytic[g] - &numeric)) / scale };
            if err >= worst.1 {
                worst = (format!("{assignment:?}/{name}"), err);
            }
            groups += 1;
        }
    }
    check(worst.1 < 1e-4, format!("{groups} groups, worst {} at {:.2e}", worst.0, worst.1), || {
        format!("worst group {} relative error {:e}", worst.0, worst.1)
    })
}

fn softmax_rows() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut rows = 0;
    for pass in 0..100u64 {
        let mut model = Model::new(ModelConfig::tiny(), Vocab::build(["a b c d e f"]), pass).unwrap();
        for v in model.params.values.iter_mut() {
            let noise = Mat::from_shape_simple_fn(v.dim(), || rng.random_range(-2.0..2.0));
            *v += &noise;
        }
        let image = Mat::from_shape_simple_fn((32 * 32, 3), || rng.random_range(-1.0..1.0));
        let n = rng.random_range(1..=4);
        let tokens: Vec<usize> = (0..n).map(|_| rng.random_range(0..model.vocab.len())).collect();
        let mut t = Tape::new();
        let f = model.forward(&mut t, &model.params.values, &image, &tokens);
        for a in [f.ria_attention, f.self_attention, f.rla_attention] {
            for r in t.value(a).rows() {
                worst = worst.max((r.sum() - 1.0).abs());
                rows += 1;
            }
        }
    }
    check(worst < 1e-6, format!("{rows} RIA/self/RLA rows over 100 passes, max |sum - 1| = {worst:.1e}"), || {
        format!("max |sum - 1| = {worst:e}")
    })
}

fn overfit_sixteen() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic(&SyntheticConfig::default(), 0).unwrap().write(dir.path()).unwrap();
    let data: Vec<_> = load_dataset(dir.path(), Split::Train)
        .unwrap()
        .into_iter()
        .map(|s| {
            let img = load_image(dir.path(), s.image_id).unwrap();
            (s, img)
        })
        .collect();
    if data.len() != 16 {
        return Err(format!("fixture has {} samples", data.len()));
    }
    let vocab = Vocab::build(data.iter().map(|(s, _)| s.expression.as_str()));
    let mut model = Model::new(ModelConfig::default(), vocab, 0).unwrap();
    let cfg = TrainConfig {
        eval_every: 50,
        stop_at: Some(0.9),
        ..TrainConfig::default()
    };
    let trace = train_toy(&mut model, &data, &cfg).map_err(|e| e.to_string())?;
    let last = trace.last_eval().ok_or("no evaluation ran")?;
    check(
        cfg.iterations <= 2000 && last.iteration <= 2000 && last.giou >= 0.9 && last.pr_f1 >= 0.9 && trace.seconds < 600.0,
        format!(
            "gIoU {:.3}, Pr@F1 {:.3} at iteration {} in {:.0}s",
            last.giou, last.pr_f1, last.iteration, trace.seconds
        ),
        || format!("{last:?} after {:.0}s", trace.seconds),
    )
}

fn one_hot_selection() -> Outcome {
    let mut checked = 0;
    for seed in 0..20u64 {
        let model = Model::new(ModelConfig::tiny(), Vocab::build(["a b c"]), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Mat::from_shape_simple_fn((32 * 32, 3), || rng.random_range(-1.0..1.0));
        let mut t = Tape::new();
        let f = model.forward(&mut t, &model.params.values, &image, &[1, 2, 3]);
        let mr = t.value(f.region_masks).clone();
        for k in 0..mr.nrows() {
            let mut x = vec![0.0; mr.nrows()];
            x[k] = 1.0;
            let agg = aggregate_mask(&x, &mr);
            let binarize = |v: &f64| 1.0 / (1.0 + (-v).exp()) > 0.5;
            let same_bits = agg.iter().zip(mr.row(k)).all(|(a, b)| a.to_bits() == b.to_bits());
            let same_mask = agg.iter().map(binarize).eq(mr.row(k).iter().map(binarize));
            if !(same_bits && same_mask) {
                return Err(format!("seed {seed} region {k} differs"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} one-hot selections bit-exact"))
}

fn caption_fixture() -> Outcome {
    let corpus = vec![vec![tokenize("a red box")], vec![tokenize("green circles everywhere")]];
    let c = CiderScorer::new(&corpus).unwrap().score(&tokenize("a red box"), &corpus[0]);
    let m = meteor(&CaptionPair::from_text("the red box", &["the red box"]));
    let hand_meteor = 1.0 - 0.5 * (1.0f64 / 3.0).powi(3);
    check(
        (c - 7.5).abs() < 1e-6 && (m - hand_meteor).abs() < 1e-6 && (m - 0.9815).abs() < 5e-5,
        format!("CIDEr {c:.6}, METEOR {m:.6}"),
        || format!("CIDEr {c} (want 7.5), METEOR {m} (want {hand_meteor})"),
    )
}

fn rle_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..1000 {
        let (h, w) = (rng.random_range(1..=48), rng.random_range(1..=48));
        let m = match i % 4 {
            0 => BinaryMask::new(h, w),
            1 => BinaryMask::full(h, w),
            _ => random_mask(&mut rng, h, w),
        };
        let rle: RleMask = rle_encode(&m);
        if rle.counts != rle_oracle(&m) {
            return Err(format!("case {i}: counts differ from the column-major oracle"));
        }
        if rle_decode(&rle).unwrap() != m {
            return Err(format!("case {i}: decode(encode(m)) != m"));
        }
    }
    Ok("1000 masks, counts match the oracle, decode(encode(m)) == m".into())
}

fn annotation_state_machine() -> Outcome {
    use annotate_fixture::model::{check_sequence, ops};

    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let states = std::cell::RefCell::new(BTreeSet::new());
    runner
        .run(&ops(40), |seq| {
            let mut project = Project::in_memory(annotate_fixture::catalog());
            check_sequence(&mut project, &seq).map_err(proptest::test_runner::TestCaseError::fail)?;
            states.borrow_mut().extend(project.board().tasks.values().map(|t| t.state));
            Ok(())
        })
        .map_err(|e| format!("illegal transition: {e}"))?;

    // export then load
    let mut runner = TestRunner::deterministic();
    let mut exported = 0;
    for _ in 0..300 {
        let seq = ops(60).new_tree(&mut runner).unwrap().current();
        let mut project = Project::in_memory(annotate_fixture::catalog());
        let model = check_sequence(&mut project, &seq)?;
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &project.export_files()).map_err(|e| e.to_string())?;
        let mut loaded = BTreeMap::new();
        for split in Split::ALL {
            for s in load_dataset(dir.path(), split).map_err(|e| e.to_string())? {
                loaded.insert(s.ref_id, s);
            }
        }
        let valid: BTreeMap<u64, _> =
            model.tasks.iter().filter(|(_, t)| t.state == TaskState::Valid).map(|(k, t)| (*k, t)).collect();
        if loaded.keys().ne(valid.keys()) {
            return Err(format!("exported ids {:?} vs VALID {:?}", loaded.keys(), valid.keys()));
        }
        for (id, t) in valid {
            let s = &loaded[&id];
            let targets: BTreeSet<u64> = s.target_ids.iter().copied().collect();
            let same = s.image_id == t.image
                && s.split == t.split
                && s.expression == t.expression
                && targets == t.selection
                && s.no_target == t.selection.is_empty()
                && s.gt_mask.area() == 16 * t.selection.len() as u64;
            if !same {
                return Err(format!("task {id} changed through export and load"));
            }
            exported += 1;
        }
    }
    let states = states.into_inner();
    check(
        states.len() == TaskState::ALL.len(),
        format!("10000 sequences legal, {} states reached; {exported} exported samples reload unchanged", states.len()),
        || format!("only reached {states:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("mask/box IoU and gIoU oracles", metric_oracles),
        ("top-1 on multi + no-target set", top1_degenerate_row),
        ("Pr@F1 equals Precision@0.5 on single targets", single_target_equivalence),
        ("greedy matching equals exhaustive", greedy_vs_exhaustive),
        ("gIoU no-target fixture", giou_no_target_fixture),
        ("gradient check, tiny config", gradient_check),
        ("attention rows sum to 1", softmax_rows),
        ("overfit 16 samples", overfit_sixteen),
        ("one-hot x_r selects its region mask", one_hot_selection),
        ("CIDEr / METEOR hand fixture", caption_fixture),
        ("RLE round trip", rle_round_trip),
        ("annotation state machine", annotation_state_machine),
    ];
    let only: Option<Vec<usize>> = std::env::var("GREX_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
