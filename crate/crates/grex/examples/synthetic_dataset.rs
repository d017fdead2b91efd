//! Generate a small shapes dataset in gRefCOCO layout, load it back and
//! print its taxonomy and word statistics.
//!
//!     cargo run -p grex --example synthetic_dataset [out_dir]

use grex::core::dataset::{generate_synthetic, load_dataset, sample_vocab_stats, Split, SyntheticConfig, TaxonomyCounts};

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let config = SyntheticConfig::default()
        .with_quota(Split::Train, 6, 4, 2)
        .and_quota(Split::Val, 3, 2, 2);
    let data = generate_synthetic(&config, 42).unwrap();
    data.write(&root).unwrap();
    println!("{} images written to {}", data.images.len(), root.display());

    for split in [Split::Train, Split::Val] {
        let samples = load_dataset(&root, split).unwrap();
        let c = TaxonomyCounts::of(&samples);
        println!("{split}: {} single, {} multi, {} no-target", c.single_target, c.multi_target, c.no_target);
        for s in samples.iter().take(4) {
            println!("  #{:<3} {:<40} targets {:?} ({} px)", s.ref_id, s.expression, s.target_ids, s.gt_mask.area());
        }
    }
    let train = load_dataset(&root, Split::Train).unwrap();
    let words: Vec<String> = sample_vocab_stats(&train).iter().take(8).map(|w| format!("{} {}", w.word, w.count)).collect();
    println!("top words: {}", words.join(", "));
}
