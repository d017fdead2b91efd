//! Deterministic single-writer trainer with Adam.

use grex_core::dataset::{GrexSample, RgbImage};
use grex_core::metrics::{evaluate_grec, evaluate_gres, OutputStrategy};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ModelError};
use crate::loss::{compute_loss, LossBreakdown, Targets};
use crate::model::Model;
use crate::tape::{Mat, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay to 1% of the base rate at the last iteration.
    #[default]
    Cosine,
}

impl LrSchedule {
    pub fn rate(&self, base: f64, iteration: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = (iteration.saturating_sub(1)) as f64 / total.max(1) as f64;
                let floor = 0.01 * base;
                floor + (base - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Global gradient-norm clip; 0 disables.
    #[serde(default)]
    pub clip_norm: f64,
    /// Evaluate on the training set every this many iterations; 0 disables.
    #[serde(default)]
    pub eval_every: usize,
    /// Stop once both training gIoU and Pr@F1 reach this value.
    #[serde(default)]
    pub stop_at: Option<f64>,
    #[serde(default)]
    pub strategy: OutputStrategy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            iterations: 2000,
            batch_size: 4,
            learning_rate: 4e-3,
            schedule: LrSchedule::default(),
            clip_norm: 5.0,
            eval_every: 100,
            stop_at: None,
            strategy: OutputStrategy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, message: String| Err(ConfigError::Invalid { field, message });
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", format!("{} is not positive", self.learning_rate));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return bad("clip_norm", format!("{} is negative", self.clip_norm));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub giou: f64,
    pub ciou: f64,
    pub pr_f1: f64,
    pub n_acc: Option<f64>,
    pub t_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Batch-mean loss terms, one entry per iteration.
    pub losses: Vec<LossBreakdown>,
    pub evals: Vec<EvalPoint>,
    pub seconds: f64,
}

impl TrainTrace {
    pub fn last_eval(&self) -> Option<&EvalPoint> {
        self.evals.last()
    }
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[Mat]) -> Self {
        let zeros = || params.iter().map(|p| Mat::zeros(p.dim())).collect();
        Adam { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, params: &mut [Mat], grads: &[Mat], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(&mut params[i]).and(m).and(v).and(&grads[i]).for_each(|p, m, v, &g| {
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            });
        }
    }
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(
    model: &Model,
    params: &[Mat],
    image: &Mat,
    tokens: &[usize],
    targets: &Targets,
) -> Result<(LossBreakdown, Vec<Mat>), ModelError> {
    let mut tape = Tape::new();
    let fv = model.forward(&mut tape, params, image, tokens);
    let (loss, breakdown) = compute_loss(&mut tape, &fv, targets, &model.config)?;
    let grads = tape
        .backward(loss, params.len())
        .0
        .into_iter()
        .zip(params)
        .map(|(g, p)| g.unwrap_or_else(|| Mat::zeros(p.dim())))
        .collect();
    Ok((breakdown, grads))
}

/// Training-set GRES and GREC scores under a strategy.
pub fn evaluate(model: &Model, data: &[(GrexSample, RgbImage)], strategy: OutputStrategy) -> Result<EvalPoint, ModelError> {
    let items: Vec<(&GrexSample, &RgbImage)> = data.iter().map(|(s, i)| (s, i)).collect();
    let preds = model.predict_all(&items, strategy)?;
    let seg: Vec<_> = preds.iter().zip(data).map(|(p, (s, _))| (p.seg(s.ref_id), s.clone())).collect();
    let det: Vec<_> = preds.iter().zip(data).map(|(p, (s, _))| (p.det(s.ref_id), s.clone())).collect();
    let g = evaluate_gres(&seg)?;
    let d = evaluate_grec(&det, false)?;
    Ok(EvalPoint {
        iteration: 0,
        giou: g.giou,
        ciou: g.ciou,
        pr_f1: d.pr_f1,
        n_acc: g.n_acc,
        t_acc: d.t_acc,
    })
}

/// Train `model` in place on `data`. Deterministic for a fixed seed.
pub fn train_toy(model: &mut Model, data: &[(GrexSample, RgbImage)], cfg: &TrainConfig) -> Result<TrainTrace, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let start = std::time::Instant::now();
    let mut prepared = Vec::with_capacity(data.len());
    for (s, img) in data {
        prepared.push((
            model.image_matrix(img)?,
            model.vocab.encode(&s.expression, model.config.text_len),
            Targets::from_sample(s, &model.config)?,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut adam = Adam::new(&model.params.values);
    let mut trace = TrainTrace::default();

    for it in 1..=cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let scale = 1.0 / batch.len() as f64;
        let mut sum: Vec<Mat> = model.params.values.iter().map(|p| Mat::zeros(p.dim())).collect();
        let mut mean = LossBreakdown::default();
        for &i in &batch {
            let (img, tokens, targets) = &prepared[i];
            let (b, g) = sample_gradients(model, &model.params.values, img, tokens, targets)?;
            if !b.is_finite() {
                return Err(ModelError::Divergence { iteration: it, loss: b.total });
            }
            for (s, g) in sum.iter_mut().zip(g) {
                s.scaled_add(scale, &g);
            }
            mean.total += b.total * scale;
            mean.mask += b.mask * scale;
            mean.boxes += b.boxes * scale;
            mean.minimap += b.minimap * scale;
            mean.count += b.count * scale;
        }
        if cfg.clip_norm > 0.0 {
            let norm = sum.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(ModelError::Divergence { iteration: it, loss: mean.total });
            }
            if norm > cfg.clip_norm {
                let k = cfg.clip_norm / norm;
                sum.iter_mut().for_each(|g| *g *= k);
            }
        }
        let lr = cfg.schedule.rate(cfg.learning_rate, it, cfg.iterations);
        adam.step(&mut model.params.values, &sum, lr);
        trace.losses.push(mean);

        if cfg.eval_every > 0 && (it % cfg.eval_every == 0 || it == cfg.iterations) {
            let mut e = evaluate(model, data, cfg.strategy)?;
            e.iteration = it;
            trace.evals.push(e);
            if cfg.stop_at.is_some_and(|t| e.giou >= t && e.pr_f1 >= t) {
                break;
            }
        }
    }
    trace.seconds = start.elapsed().as_secs_f64();
    Ok(trace)
}
