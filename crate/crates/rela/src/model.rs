//! ReLA forward pass: toy encoders, region-image and region-language
//! attention, and the mask/box/count heads.

use std::collections::BTreeSet;

use grex_core::dataset::RgbImage;
use grex_core::text::tokenize;
use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::tape::{ConvGeom, Mat, Tape, Var};

/// Word list; id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub words: Vec<String>,
}

impl Vocab {
    pub const UNK: &'static str = "<unk>";

    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let mut words = vec![Self::UNK.to_string()];
        words.extend(set);
        Vocab { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Token ids, truncated to `max_len`; an empty text becomes one unknown.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = tokenize(text)
            .iter()
            .take(max_len)
            .map(|w| self.words.binary_search_by(|x| x.as_str().cmp(w)).ok().filter(|&i| i > 0).unwrap_or(0))
            .collect();
        if ids.is_empty() {
            ids.push(0);
        }
        ids
    }
}

/// Named parameter arrays, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<Mat>,
}

impl Params {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

macro_rules! layout {
    ($($name:ident),* $(,)?) => {
        /// Slot of each parameter array in `Params`.
        #[derive(Debug, Clone, Copy)]
        #[allow(non_snake_case)]
        struct Layout { $($name: usize),* }

        const PARAM_NAMES: &[&str] = &[$(stringify!($name)),*];

        impl Layout {
            fn new() -> Self {
                let mut i = 0;
                $(let $name = { i += 1; i - 1 };)*
                let _ = i;
                Layout { $($name),* }
            }
        }
    };
}

layout!(
    enc1_w, enc1_b, enc2_w, enc2_b, enc3_w, enc3_b, img_pos, //
    dec_up_w, dec_skip_w, dec_b, //
    tok_embed, txt_pos, txt_w, txt_b, //
    ria_q, ria_wk, ria_wv, //
    self_wq, self_wk, self_wv, rla_wq, rla_wk, fuse_w1, fuse_b1, fuse_w2, fuse_b2, //
    filter_w, filter_b, xr_w, xr_b, //
    box_w1, box_b1, box_w2, box_b2, //
    count_w1, count_b1, count_w2, count_b2,
);

pub fn param_names() -> &'static [&'static str] {
    PARAM_NAMES
}

fn param_shape(name: &str, c: &ModelConfig, vocab: usize) -> (usize, usize) {
    let [c1, c2, ch] = c.stage_channels();
    let [fh, fw] = c.feature_size;
    let p2 = c.num_regions();
    match name {
        "enc1_w" => (27, c1),
        "enc1_b" => (1, c1),
        "enc2_w" => (9 * c1, c2),
        "enc2_b" => (1, c2),
        "enc3_w" => (9 * c2, ch),
        "img_pos" => (fh * fw, ch),
        "dec_skip_w" => (c1, ch),
        "tok_embed" => (vocab, ch),
        "txt_pos" => (c.text_len, ch),
        "ria_q" => (p2, ch),
        "xr_w" => (ch, 1),
        "xr_b" => (1, 1),
        "box_w2" => (ch, 4),
        "box_b2" => (1, 4),
        "count_w2" => (ch, 7),
        "count_b2" => (1, 7),
        n if n.ends_with("_b") || n.ends_with("_b1") || n.ends_with("_b2") => (1, ch),
        _ => (ch, ch),
    }
}

/// Parameter shapes expected for a config and vocabulary size.
pub fn expected_shapes(config: &ModelConfig, vocab: usize) -> Vec<(String, (usize, usize))> {
    PARAM_NAMES.iter().map(|n| (n.to_string(), param_shape(n, config, vocab))).collect()
}

fn init_params(config: &ModelConfig, vocab: usize, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(PARAM_NAMES.len());
    for name in PARAM_NAMES {
        let (r, c) = param_shape(name, config, vocab);
        let std = match *name {
            "img_pos" => 1.0,
            "txt_pos" => 0.1,
            "tok_embed" => 1.0,
            "ria_q" => 1.0,
            n if n.ends_with("_b") || n.ends_with("_b1") || n.ends_with("_b2") => 0.0,
            _ => 1.0 / (r as f64).sqrt(),
        };
        let mut m = if std == 0.0 {
            Mat::zeros((r, c))
        } else {
            let normal = Normal::new(0.0, std).expect("positive std");
            Mat::from_shape_simple_fn((r, c), || normal.sample(&mut rng))
        };
        if *name == "xr_b" {
            // most regions are empty
            m.fill(-2.0);
        }
        if *name == "box_b2" {
            m[[0, 2]] = -1.0;
            m[[0, 3]] = -1.0;
        }
        values.push(m);
    }
    Params {
        names: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        values,
    }
}

/// Bilinear interpolation matrix (`out x inp`), half-pixel centers.
pub fn bilinear_matrix(out: usize, inp: usize) -> Mat {
    let mut m = Mat::zeros((out, inp));
    let scale = inp as f64 / out as f64;
    for i in 0..out {
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(inp - 1);
        let f = src - i0 as f64;
        m[[i, i0]] += 1.0 - f;
        m[[i, i1]] += f;
    }
    m
}

/// Per-region outputs of one forward pass, as tape variables.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// `P^2 x H_m*W_m` region score maps.
    pub region_masks: Var,
    /// `P^2 x 1` pre-sigmoid region logits.
    pub xr_logits: Var,
    pub x_r: Var,
    /// `H_m x W_m` aggregated mask logits.
    pub mask_logits: Var,
    /// Mask logits resampled to image size.
    pub image_logits: Var,
    /// `P^2 x 4` normalized `(cx, cy, w, h)`.
    pub boxes: Var,
    /// `1 x 7`
    pub count_logits: Var,
    pub ria_attention: Var,
    pub self_attention: Var,
    pub rla_attention: Var,
    /// `(H*W) x C`
    pub vision: Var,
    /// `N_t x C`
    pub text: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Params,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = init_params(&config, vocab.len(), seed);
        Ok(Model { config, vocab, params })
    }

    pub fn image_matrix(&self, image: &RgbImage) -> Result<Mat, ModelError> {
        let want = self.config.image_size;
        if [image.height, image.width] != want {
            return Err(ModelError::ImageShape {
                got: [image.height, image.width],
                want,
            });
        }
        Ok(Mat::from_shape_fn((image.height * image.width, 3), |(i, c)| {
            (image.pixels[i][c] as f64 - 0.5) * 2.0
        }))
    }

    /// Record the full forward pass for an image matrix (`(H*W) x 3`) and
    /// token ids. `params` must come from `self.params` or a perturbed copy.
    pub fn forward(&self, tape: &mut Tape, params: &[Mat], image: &Mat, tokens: &[usize]) -> ForwardVars {
        let c = &self.config;
        let l = Layout::new();
        let p: Vec<Var> = params.iter().enumerate().map(|(i, v)| tape.param(i, v)).collect();
        let [ih, iw] = c.image_size;
        let [fh, fw] = c.feature_size;
        let [c1, c2, _] = c.stage_channels();

        let linear = |t: &mut Tape, x: Var, w: usize, b: usize| {
            let y = t.matmul(x, p[w]);
            t.add_row(y, p[b])
        };

        // image encoder: three 3x3 conv stages, strides 2, 2, 1
        let x = tape.constant(image.clone());
        let cols = tape.im2col(x, ConvGeom { h: ih, w: iw, c: 3, k: 3, stride: 2, pad: 1 });
        let s1 = linear(tape, cols, l.enc1_w, l.enc1_b);
        let s1 = tape.gelu(s1);
        let cols = tape.im2col(s1, ConvGeom { h: ih / 2, w: iw / 2, c: c1, k: 3, stride: 2, pad: 1 });
        let s2 = linear(tape, cols, l.enc2_w, l.enc2_b);
        let s2 = tape.gelu(s2);
        let cols = tape.im2col(s2, ConvGeom { h: fh, w: fw, c: c2, k: 3, stride: 1, pad: 1 });
        let s3 = linear(tape, cols, l.enc3_w, l.enc3_b);
        let s3 = tape.gelu(s3);
        let vision = tape.add(s3, p[l.img_pos]);

        // pixel decoder: one upsampling block with a skip from stage 1
        let up = tape.upsample2(vision, fh, fw);
        let up = tape.matmul(up, p[l.dec_up_w]);
        let skip = tape.matmul(s1, p[l.dec_skip_w]);
        let fm = tape.add(up, skip);
        let fm = tape.add_row(fm, p[l.dec_b]);
        let mask_feature = tape.gelu(fm);

        // text encoder
        let emb = tape.gather(p[l.tok_embed], tokens);
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let pos = tape.gather(p[l.txt_pos], &positions);
        let xt = tape.add(emb, pos);
        let h = linear(tape, xt, l.txt_w, l.txt_b);
        let h = tape.gelu(h);
        let text = tape.add(xt, h);

        let (ria_attention, fr0) = ria_forward(tape, vision, p[l.ria_q], p[l.ria_wk], p[l.ria_wv]);
        let (self_attention, fr1) = region_self_attention(tape, fr0, p[l.self_wq], p[l.self_wk], p[l.self_wv]);
        let (rla_attention, fr2) = rla_cross_attention(tape, fr0, text, p[l.rla_wq], p[l.rla_wk]);

        let sum = tape.add(fr0, fr1);
        let sum = tape.add(sum, fr2);
        let hmid = linear(tape, sum, l.fuse_w1, l.fuse_b1);
        let hmid = tape.gelu(hmid);
        let fr = linear(tape, hmid, l.fuse_w2, l.fuse_b2);

        // heads
        let filters = linear(tape, fr, l.filter_w, l.filter_b);
        let region_masks = tape.matmul_bt(filters, mask_feature);
        let xr_logits = linear(tape, fr, l.xr_w, l.xr_b);
        let x_r = tape.sigmoid(xr_logits);
        let xt_row = tape.transpose(x_r);
        let agg = tape.matmul(xt_row, region_masks);
        let [mh, mw] = c.mask_size();
        let mask_logits = tape.reshape(agg, mh, mw);
        let uh = tape.constant(bilinear_matrix(ih, mh));
        let uw = tape.constant(bilinear_matrix(iw, mw));
        let rows = tape.matmul(uh, mask_logits);
        let image_logits = tape.matmul_bt(rows, uw);

        let b = linear(tape, fr, l.box_w1, l.box_b1);
        let b = tape.gelu(b);
        let b = linear(tape, b, l.box_w2, l.box_b2);
        let boxes = tape.sigmoid(b);

        let pooled = tape.mean_rows(fr);
        let n = linear(tape, pooled, l.count_w1, l.count_b1);
        let n = tape.gelu(n);
        let count_logits = linear(tape, n, l.count_w2, l.count_b2);

        ForwardVars {
            region_masks,
            xr_logits,
            x_r,
            mask_logits,
            image_logits,
            boxes,
            count_logits,
            ria_attention,
            self_attention,
            rla_attention,
            vision,
            text,
        }
    }
}

/// Region-image cross attention. Returns the `P^2 x HW` attention and the
/// region image features `F'_r`.
pub fn ria_forward(tape: &mut Tape, vision: Var, queries: Var, wk: Var, wv: Var) -> (Var, Var) {
    let k = tape.matmul(vision, wk);
    let k = tape.gelu(k);
    let v = tape.matmul(vision, wv);
    let v = tape.gelu(v);
    let scores = tape.matmul_bt(queries, k);
    let attention = tape.softmax_rows(scores);
    let regions = tape.matmul(attention, v);
    (attention, regions)
}

/// Scaled dot-product self-attention among regions; returns `(A, F_r1)`.
pub fn region_self_attention(tape: &mut Tape, regions: Var, wq: Var, wk: Var, wv: Var) -> (Var, Var) {
    let c = tape.value(regions).ncols();
    let q = tape.matmul(regions, wq);
    let k = tape.matmul(regions, wk);
    let v = tape.matmul(regions, wv);
    let s = tape.matmul_bt(q, k);
    let s = tape.scale(s, 1.0 / (c as f64).sqrt());
    let attention = tape.softmax_rows(s);
    let out = tape.matmul(attention, v);
    (attention, out)
}

/// Region-to-word attention `A_l` (`P^2 x N_t`) and `F_r2 = A_l F_t`.
pub fn rla_cross_attention(tape: &mut Tape, regions: Var, text: Var, wq: Var, wk: Var) -> (Var, Var) {
    let q = tape.matmul(regions, wq);
    let q = tape.gelu(q);
    let k = tape.matmul(text, wk);
    let k = tape.gelu(k);
    let s = tape.matmul_bt(q, k);
    let attention = tape.softmax_rows(s);
    let out = tape.matmul(attention, text);
    (attention, out)
}

/// `sum_n x_r[n] * M_r[n]`, accumulated region by region.
pub fn aggregate_mask(x_r: &[f64], region_masks: &Mat) -> Vec<f64> {
    assert_eq!(x_r.len(), region_masks.nrows(), "one weight per region");
    let mut out = vec![0.0; region_masks.ncols()];
    for (w, row) in x_r.iter().zip(region_masks.axis_iter(Axis(0))) {
        for (o, &m) in out.iter_mut().zip(row) {
            *o += w * m;
        }
    }
    out
}
