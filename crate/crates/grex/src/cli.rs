//! The `grex` command line. Every subcommand prints a table to stdout; the
//! eval and stats commands also write their report as JSON to `--out`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad input, 3 a metric raised
//! its degenerate-input flag (zero cIoU union, nothing to score).

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use grex_annotate::server::{self, ServeError};
use grex_core::dataset::{
    generate_synthetic, load_dataset, load_image, sample_vocab_stats, GrexSample, RgbImage, Split, SyntheticConfig,
    TaxonomyCounts, WordFrequency,
};
use grex_core::metrics::files::{
    align_by_ref, greg_items, read_det_predictions, read_gen_candidates, read_seg_predictions, write_records,
    DetPredictionRecord, SegPredictionRecord,
};
use grex_core::metrics::strategy::clear_small_mask;
use grex_core::metrics::{
    evaluate_greg, evaluate_grec, evaluate_gres, select_outputs, CountClass, DetPrediction, OutputStrategy,
    StrategyError,
};
use grex_core::{DatasetError, MetricError};
use grex_rela::{
    load_checkpoint, save_checkpoint, train_toy, CheckpointError, ConfigError, Model, ModelConfig, ModelError,
    TrainConfig, Vocab,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const DATASET_ENV: &str = "GREX_DATASET_ROOT";
pub const SEG_PREDICTIONS_FILE: &str = "predictions_seg.json";
pub const DET_PREDICTIONS_FILE: &str = "predictions_det.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRACE_FILE: &str = "trace.json";

#[derive(Debug, Parser)]
#[command(name = "grex", version, about = "Generalized referring expression toolkit")]
pub struct Cli {
    /// Worker threads for per-sample work [default: one per core]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root with instances.json, refs_<split>.json and images/
    #[arg(long, env = DATASET_ENV)]
    pub dataset: PathBuf,
    /// train, val, testA or testB
    #[arg(long)]
    pub split: Option<String>,
}

impl DataArgs {
    fn split_or(&self, default: Split) -> Result<Split, CliError> {
        match &self.split {
            Some(s) => Ok(s.parse()?),
            None => Ok(default),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score segmentation predictions: gIoU, cIoU, Pr@X, N-acc, T-acc
    EvalGres {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        predictions: PathBuf,
        /// Clear predicted masks with fewer than 50 foreground pixels first
        #[arg(long)]
        fifty_pixel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score box predictions: Pr@(F1=1, IoU>=0.5), N-acc, T-acc, optional AP
    EvalGrec {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        predictions: PathBuf,
        /// Output selection applied before scoring: threshold[:tau], top-<k>,
        /// count[:tau] (uses each record's count) or fifty-pixel[:tau]
        #[arg(long)]
        strategy: Option<OutputStrategy>,
        /// Also compute COCO-range AP (needs scored boxes)
        #[arg(long)]
        ap: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score generated expressions with METEOR and CIDEr per subset
    EvalGreg {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the toy model; writes a checkpoint and a metric trace
    TrainToy {
        #[command(flatten)]
        data: DataArgs,
        /// Model config (TOML)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().iterations)]
        iterations: usize,
        #[arg(long, default_value_t = TrainConfig::default().batch_size)]
        batch_size: usize,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        learning_rate: f64,
        /// Evaluate on the training split every N iterations (0: never)
        #[arg(long, default_value_t = TrainConfig::default().eval_every)]
        eval_every: usize,
        /// Stop once training gIoU and Pr@F1 both reach this value
        #[arg(long)]
        stop_at: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a checkpoint over a split; writes segmentation and box predictions
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = OutputStrategy::default())]
        strategy: OutputStrategy,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sample taxonomy counts and word frequencies of a split
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic shapes dataset
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Splits to fill, comma separated; each gets the same quota
        #[arg(long, default_value = "train", value_delimiter = ',')]
        split: Vec<String>,
        #[arg(long, default_value_t = 8)]
        single: usize,
        #[arg(long, default_value_t = 4)]
        multi: usize,
        #[arg(long, default_value_t = 4)]
        no_target: usize,
    },
    /// Run the annotation game's HTTP service on a project directory
    ServeAnnotation {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(ModelError::Divergence { .. }) | CliError::Io { .. } => 1,
            CliError::Checkpoint(CheckpointError::Io { .. }) => 2,
            CliError::Serve(ServeError::Io(_)) => 1,
            CliError::Serve(ServeError::Project(grex_annotate::AnnotateError::Io { .. })) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// What a successful run reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Degenerate,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Degenerate => 3,
        }
    }
}

/// Parse, run and report; returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli, &mut std::io::stdout()) {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    if let Command::ServeAnnotation { project, host, port } = &cli.command {
        return serve(project, SocketAddr::new(*host, *port), cli.workers, out);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .expect("thread pool");
    pool.install(|| dispatch(&cli.command, out))
}

fn dispatch(command: &Command, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    match command {
        Command::EvalGres { data, predictions, fifty_pixel, out: json } => {
            let samples = load_dataset(&data.dataset, data.split_or(Split::Val)?)?;
            let mut preds = read_seg_predictions(predictions)?;
            if *fifty_pixel {
                preds.par_iter_mut().for_each(|p| {
                    p.mask = clear_small_mask(p.mask.clone());
                });
            }
            let report = evaluate_gres(&align_by_ref(preds, &samples)?)?;
            emit(out, &crate::report::seg_table(&report), json.as_deref(), &report)?;
            Ok(if report.ciou_degenerate { Outcome::Degenerate } else { Outcome::Clean })
        }
        Command::EvalGrec { data, predictions, strategy, ap, out: json } => {
            let samples = load_dataset(&data.dataset, data.split_or(Split::Val)?)?;
            let mut preds = read_det_predictions(predictions)?;
            if let Some(s) = strategy {
                preds = preds
                    .into_par_iter()
                    .map(|p| apply_strategy(p, *s))
                    .collect::<Result<_, CliError>>()?;
            }
            let report = evaluate_grec(&align_by_ref(preds, &samples)?, *ap)?;
            emit(out, &crate::report::det_table(&report), json.as_deref(), &report)?;
            Ok(Outcome::Clean)
        }
        Command::EvalGreg { data, candidates, out: json } => {
            let samples = load_dataset(&data.dataset, data.split_or(Split::Val)?)?;
            let items = greg_items(read_gen_candidates(candidates)?, &samples)?;
            let report = evaluate_greg(&items)?;
            emit(out, &crate::report::gen_table(&report), json.as_deref(), &report)?;
            Ok(if report.overall.count == 0 { Outcome::Degenerate } else { Outcome::Clean })
        }
        Command::TrainToy {
            data,
            config,
            seed,
            iterations,
            batch_size,
            learning_rate,
            eval_every,
            stop_at,
            out_dir,
        } => {
            let model_config = match config {
                Some(p) => ModelConfig::from_toml_str(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
                None => ModelConfig::default(),
            };
            let train = TrainConfig {
                seed: *seed,
                iterations: *iterations,
                batch_size: *batch_size,
                learning_rate: *learning_rate,
                eval_every: *eval_every,
                stop_at: *stop_at,
                ..TrainConfig::default()
            };
            train.validate()?;
            let pairs = with_images(&data.dataset, load_dataset(&data.dataset, data.split_or(Split::Train)?)?)?;
            let vocab = Vocab::build(pairs.iter().map(|(s, _)| s.expression.as_str()));
            let mut model = Model::new(model_config, vocab, *seed)?;
            let trace = train_toy(&mut model, &pairs, &train)?;
            std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
            save_checkpoint(&out_dir.join(CHECKPOINT_FILE), &model)?;
            write_json(&out_dir.join(TRACE_FILE), &trace)?;
            write_text(out, &crate::report::train_table(&trace))?;
            Ok(Outcome::Clean)
        }
        Command::Predict { data, checkpoint, strategy, out_dir } => {
            let model = load_checkpoint(checkpoint)?;
            let pairs = with_images(&data.dataset, load_dataset(&data.dataset, data.split_or(Split::Val)?)?)?;
            let preds = pairs
                .par_iter()
                .map(|(s, img)| model.predict(img, &s.expression, *strategy))
                .collect::<Result<Vec<_>, _>>()?;
            let seg: Vec<SegPredictionRecord> = pairs
                .iter()
                .zip(&preds)
                .map(|((s, _), p)| SegPredictionRecord::from_prediction(&p.seg(s.ref_id)))
                .collect();
            let det: Vec<DetPredictionRecord> = pairs
                .iter()
                .zip(&preds)
                .map(|((s, _), p)| DetPredictionRecord::from_prediction(&p.det(s.ref_id)))
                .collect();
            std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
            write_records(&out_dir.join(SEG_PREDICTIONS_FILE), &seg)?;
            write_records(&out_dir.join(DET_PREDICTIONS_FILE), &det)?;
            let empty = preds.iter().filter(|p| p.boxes.is_empty()).count();
            let boxes: usize = preds.iter().map(|p| p.boxes.len()).sum();
            let table = crate::report::key_values(
                "predictions",
                &[
                    ("samples".to_string(), preds.len().to_string()),
                    ("strategy".to_string(), strategy.to_string()),
                    ("boxes".to_string(), boxes.to_string()),
                    ("empty outputs".to_string(), empty.to_string()),
                ],
            );
            write_text(out, &table)?;
            Ok(Outcome::Clean)
        }
        Command::Stats { data, top, out: json } => {
            let samples = load_dataset(&data.dataset, data.split_or(Split::Train)?)?;
            let report = StatsReport {
                counts: TaxonomyCounts::of(&samples),
                words: sample_vocab_stats(&samples).into_iter().take(*top).collect(),
            };
            emit(out, &crate::report::stats_table(&report.counts, &report.words), json.as_deref(), &report)?;
            Ok(Outcome::Clean)
        }
        Command::Synth { out_dir, seed, split, single, multi, no_target } => {
            let mut config = SyntheticConfig { quotas: Vec::new(), ..SyntheticConfig::default() };
            for name in split {
                config = config.and_quota(name.parse()?, *single, *multi, *no_target);
            }
            let d = generate_synthetic(&config, *seed)?;
            d.write(out_dir)?;
            let counts: usize = d.files.refs.values().map(Vec::len).sum();
            let table = crate::report::key_values(
                "synthetic dataset",
                &[
                    ("images".to_string(), d.images.len().to_string()),
                    ("expressions".to_string(), counts.to_string()),
                    ("written to".to_string(), out_dir.display().to_string()),
                ],
            );
            write_text(out, &table)?;
            Ok(Outcome::Clean)
        }
        Command::ServeAnnotation { .. } => unreachable!("handled before the worker pool"),
    }
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub counts: TaxonomyCounts,
    pub words: Vec<WordFrequency>,
}

fn apply_strategy(p: DetPrediction, strategy: OutputStrategy) -> Result<DetPrediction, CliError> {
    let scored = p.scored_boxes()?;
    let count = p.count.map(|c| CountClass::from_target_count(c as usize));
    let (_, kept) = select_outputs(grex_core::geometry::BinaryMask::new(1, 1), &scored, strategy, count)?;
    let mut out = DetPrediction::scored(p.ref_id, &kept);
    out.count = p.count;
    Ok(out)
}

fn with_images(root: &Path, samples: Vec<GrexSample>) -> Result<Vec<(GrexSample, RgbImage)>, CliError> {
    samples
        .into_par_iter()
        .map(|s| {
            let img = load_image(root, s.image_id)?;
            Ok((s, img))
        })
        .collect()
}

fn write_text(out: &mut (dyn Write + Send), text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

fn emit<T: Serialize>(out: &mut (dyn Write + Send), table: &str, json: Option<&Path>, report: &T) -> Result<(), CliError> {
    write_text(out, table)?;
    match json {
        Some(p) => write_json(p, report),
        None => Ok(()),
    }
}

fn serve(project: &Path, addr: SocketAddr, workers: Option<usize>, out: &mut (dyn Write + Send)) -> Result<Outcome, CliError> {
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = workers {
        rt.worker_threads(n.max(1));
    }
    let rt = rt.enable_all().build().map_err(io_err(project))?;
    rt.block_on(async {
        let (listener, state) = server::bind(project, addr).await?;
        let local = listener.local_addr().map_err(ServeError::from)?;
        write_text(out, &format!("serving {} on http://{local}/api/v1/\n", project.display()))?;
        out.flush().map_err(io_err(Path::new("<stdout>")))?;
        server::serve(listener, state).await?;
        Ok(Outcome::Clean)
    })
}
