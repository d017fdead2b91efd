//! GREG scoring with METEOR and CIDEr, split by target count.
//!
//!     cargo run -p grex --example caption_metrics

use grex::core::dataset::SampleKind;
use grex::core::metrics::{evaluate_greg, meteor, CaptionPair, GregItem};

fn main() {
    for (cand, refs) in [
        ("the red box", vec!["the red box"]),
        ("the red boxes", vec!["the red box"]),
        ("box red the", vec!["the red box"]),
        ("a green circle", vec!["the red box", "a green circle on the left"]),
    ] {
        println!("METEOR {:.4}  {cand:?} vs {refs:?}", meteor(&CaptionPair::from_text(cand, &refs)));
    }

    let items = vec![
        GregItem {
            pair: CaptionPair::from_text("the red box", &["the red box", "red square"]),
            kind: SampleKind::SingleTarget,
        },
        GregItem {
            pair: CaptionPair::from_text("two blue circles", &["both blue circles", "the two circles"]),
            kind: SampleKind::MultiTarget,
        },
        GregItem {
            pair: CaptionPair::from_text("everything", &["all yellow triangles"]),
            kind: SampleKind::MultiTarget,
        },
    ];
    let r = evaluate_greg(&items).unwrap();
    for (name, s) in [("single", r.single_target), ("multi", r.multi_target), ("overall", r.overall)] {
        println!("{name:<8} n={}  METEOR {:.4}  CIDEr {:.4}", s.count, s.meteor, s.cider);
    }
}
