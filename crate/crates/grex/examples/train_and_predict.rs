//! Train the toy ReLA model on a few synthetic samples, checkpoint it and
//! run predictions with different output strategies.
//!
//!     cargo run -p grex --release --example train_and_predict [iterations]

use grex::core::dataset::{generate_synthetic, load_dataset, load_image, Split, SyntheticConfig};
use grex::core::metrics::OutputStrategy;
use grex::rela::{load_checkpoint, save_checkpoint, train_toy, Model, ModelConfig, TrainConfig, Vocab};

fn main() {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let dir = tempfile::tempdir().unwrap();
    let config = SyntheticConfig::default().with_quota(Split::Train, 4, 2, 2);
    generate_synthetic(&config, 5).unwrap().write(dir.path()).unwrap();
    let data: Vec<_> = load_dataset(dir.path(), Split::Train)
        .unwrap()
        .into_iter()
        .map(|s| {
            let img = load_image(dir.path(), s.image_id).unwrap();
            (s, img)
        })
        .collect();

    let vocab = Vocab::build(data.iter().map(|(s, _)| s.expression.as_str()));
    let mut model = Model::new(ModelConfig::default(), vocab, 0).unwrap();
    let train = TrainConfig {
        iterations,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let trace = train_toy(&mut model, &data, &train).unwrap();
    for e in &trace.evals {
        let loss = trace.losses[e.iteration - 1].total;
        println!("it {:4}  loss {loss:.4}  gIoU {:.3}  Pr@F1 {:.3}", e.iteration, e.giou, e.pr_f1);
    }
    println!("{:.1}s", trace.seconds);

    let ckpt = dir.path().join("model.ckpt");
    save_checkpoint(&ckpt, &model).unwrap();
    let model = load_checkpoint(&ckpt).unwrap();

    for strategy in ["count:0.7", "top-1", "threshold:0.5"] {
        let strategy: OutputStrategy = strategy.parse().unwrap();
        println!("-- {strategy}");
        for (s, img) in data.iter().take(4) {
            let p = model.predict(img, &s.expression, strategy).unwrap();
            println!(
                "  {:<36} gt {} | count {}, {} boxes, {} mask px (gt {})",
                s.expression,
                s.target_ids.len(),
                p.count,
                p.boxes.len(),
                p.mask.area(),
                s.gt_mask.area()
            );
        }
    }
}
