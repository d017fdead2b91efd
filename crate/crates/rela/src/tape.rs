//! Minimal reverse-mode autodiff over dense `f64` matrices.
//!
//! Every value is a 2-D array. Spatial maps are stored as `(H*W) x C`
//! row-major position matrices, so convolutions go through `im2col`.

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Geometry of a square-kernel convolution over an `h x w x c` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.c
    }

    /// Calls `f(out_row, col_offset, in_row)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow) = (self.out_h(), self.out_w());
        for oy in 0..oh {
            for ox in 0..ow {
                let row = oy * ow + ox;
                for ky in 0..self.k {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..self.k {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        f(row, (ky * self.k + kx) * self.c, iy as usize * self.w + ix as usize);
                    }
                }
            }
        }
    }
}

enum Op {
    Leaf,
    Param(usize),
    MatMul { a: Var, b: Var, tb: bool },
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Im2Col(Var, ConvGeom),
    Upsample2 { x: Var, h: usize, w: usize },
    Reshape(Var),
    Gather { table: Var, ids: Vec<usize> },
    MeanRows(Var),
    WeightedSum(Vec<(Var, f64)>),
    BceLogits { x: Var, target: Mat },
    CrossEntropy { x: Var, class: usize },
    /// Loss whose gradient was computed during the forward pass.
    Precomputed { x: Var, grad: Mat },
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records a computation for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed like the parameter slice passed to `Tape::param`.
#[derive(Debug, Clone)]
pub struct ParamGrads(pub Vec<Option<Mat>>);

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_K * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(x: &Mat) -> Mat {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, index: usize, value: &Mat) -> Var {
        self.push(value.clone(), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul { a, b, tb: false })
    }

    /// `a * b^T`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMul { a, b, tb: true })
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    /// `x` is `(h*w) x c`; result is `(out_h*out_w) x (k*k*c)`.
    pub fn im2col(&mut self, x: Var, geom: ConvGeom) -> Var {
        let src = self.value(x);
        assert_eq!(src.dim(), (geom.h * geom.w, geom.c), "im2col input shape");
        let mut out = Mat::zeros((geom.out_h() * geom.out_w(), geom.patch_len()));
        geom.for_each_tap(|row, col, irow| {
            out.slice_mut(s![row, col..col + geom.c]).assign(&src.row(irow));
        });
        self.push(out, Op::Im2Col(x, geom))
    }

    /// Nearest-neighbour 2x upsampling of an `(h*w) x c` map.
    pub fn upsample2(&mut self, x: Var, h: usize, w: usize) -> Var {
        let src = self.value(x);
        let c = src.ncols();
        let mut out = Mat::zeros((4 * h * w, c));
        for y in 0..2 * h {
            for xx in 0..2 * w {
                out.row_mut(y * 2 * w + xx).assign(&src.row((y / 2) * w + xx / 2));
            }
        }
        self.push(out, Op::Upsample2 { x, h, w })
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(x).as_standard_layout().to_owned();
        let v = src.into_shape_with_order((rows, cols)).expect("reshape keeps element count");
        self.push(v, Op::Reshape(x))
    }

    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let v = t.select(Axis(0), ids);
        self.push(v, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let v = self.value(x).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push(v, Op::MeanRows(x))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total: f64 = terms.iter().map(|&(v, w)| w * self.scalar(v)).sum();
        self.push(Mat::from_elem((1, 1), total), Op::WeightedSum(terms.to_vec()))
    }

    /// Mean binary cross-entropy between `sigmoid(x)` and soft targets.
    pub fn bce_logits(&mut self, x: Var, target: Mat) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.dim(), target.dim(), "bce target shape");
        let n = xv.len() as f64;
        let total: f64 = Zip::from(xv).and(&target).fold(0.0, |acc, &z, &t| acc + softplus(z) - t * z);
        self.push(Mat::from_elem((1, 1), total / n), Op::BceLogits { x, target })
    }

    /// Cross-entropy of a `1 x k` logit row against `class`.
    pub fn cross_entropy(&mut self, x: Var, class: usize) -> Var {
        let row = self.value(x).row(0);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.mapv(|v| (v - m).exp()).sum().ln();
        let v = lse - row[class];
        self.push(Mat::from_elem((1, 1), v), Op::CrossEntropy { x, class })
    }

    /// Scalar loss with a gradient supplied by the caller.
    pub fn precomputed(&mut self, x: Var, value: f64, grad: Mat) -> Var {
        assert_eq!(self.value(x).dim(), grad.dim(), "precomputed grad shape");
        self.push(Mat::from_elem((1, 1), value), Op::Precomputed { x, grad })
    }

    /// Back-propagate from a scalar `loss`; returns gradients for the
    /// `num_params` parameter slots.
    pub fn backward(&self, loss: Var, num_params: usize) -> ParamGrads {
        let mut grads: Vec<Option<Mat>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_elem((1, 1), 1.0));
        let mut out = vec![None; num_params];

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(e) => *e += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => match &mut out[*p] {
                    Some(e) => *e += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul { a, b, tb } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if *tb {
                        acc(&mut grads, *a, g.dot(bv));
                        acc(&mut grads, *b, g.t().dot(av));
                    } else {
                        acc(&mut grads, *a, g.dot(&bv.t()));
                        acc(&mut grads, *b, av.t().dot(&g));
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let r = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *row, r);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g * *s),
                Op::Gelu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, &x| *d *= gelu_grad(x));
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    acc(&mut grads, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = &g * y;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot = drow.sum();
                        Zip::from(&mut drow).and(yrow).for_each(|d, &yv| *d -= yv * dot);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Im2Col(x, geom) => {
                    let mut d = Mat::zeros((geom.h * geom.w, geom.c));
                    geom.for_each_tap(|row, col, irow| {
                        let src = g.slice(s![row, col..col + geom.c]);
                        let mut dst = d.row_mut(irow);
                        dst += &src;
                    });
                    acc(&mut grads, *x, d);
                }
                Op::Upsample2 { x, h, w } => {
                    let mut d = Mat::zeros((h * w, g.ncols()));
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            let mut dst = d.row_mut((y / 2) * w + xx / 2);
                            dst += &g.row(y * 2 * w + xx);
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Reshape(x) => {
                    let shape = self.value(*x).dim();
                    let d = g.as_standard_layout().to_owned().into_shape_with_order(shape).expect("same count");
                    acc(&mut grads, *x, d);
                }
                Op::Gather { table, ids } => {
                    let mut d = Mat::zeros(self.value(*table).dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = d.row_mut(id);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *table, d);
                }
                Op::MeanRows(x) => {
                    let n = self.value(*x).nrows();
                    let row = &g / n as f64;
                    let d = row.broadcast(self.value(*x).dim()).expect("row broadcast").to_owned();
                    acc(&mut grads, *x, d);
                }
                Op::WeightedSum(terms) => {
                    let gs = g[[0, 0]];
                    for &(v, w) in terms {
                        acc(&mut grads, v, Mat::from_elem((1, 1), gs * w));
                    }
                }
                Op::BceLogits { x, target } => {
                    let xv = self.value(*x);
                    let k = g[[0, 0]] / xv.len() as f64;
                    let mut d = Mat::zeros(xv.dim());
                    Zip::from(&mut d).and(xv).and(target).for_each(|d, &z, &t| *d = k * (sigmoid(z) - t));
                    acc(&mut grads, *x, d);
                }
                Op::CrossEntropy { x, class } => {
                    let mut d = softmax_rows(self.value(*x));
                    d[[0, *class]] -= 1.0;
                    acc(&mut grads, *x, d * g[[0, 0]]);
                }
                Op::Precomputed { x, grad } => acc(&mut grads, *x, grad * g[[0, 0]]),
            }
        }
        ParamGrads(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric(f: impl Fn(&Mat) -> f64, x: &Mat) -> Mat {
        let h = 1e-6;
        let mut g = Mat::zeros(x.dim());
        for idx in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p.as_slice_mut().unwrap()[idx] += h;
            m.as_slice_mut().unwrap()[idx] -= h;
            g.as_slice_mut().unwrap()[idx] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn check(build: impl Fn(&mut Tape, Var) -> Var, x: Mat) {
        let f = |x: &Mat| {
            let mut t = Tape::new();
            let v = t.param(0, x);
            let out = build(&mut t, v);
            t.scalar(out)
        };
        let mut t = Tape::new();
        let v = t.param(0, &x);
        let out = build(&mut t, v);
        let g = t.backward(out, 1).0.remove(0).unwrap();
        let n = numeric(f, &x);
        let err = (&g - &n).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(err < 1e-7, "analytic {g:?} numeric {n:?}");
    }

    fn sample(r: usize, c: usize, seed: f64) -> Mat {
        Mat::from_shape_fn((r, c), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37 + seed).sin())
    }

    #[test]
    fn matmul_and_softmax_grads() {
        let w = sample(3, 4, 0.1);
        check(
            |t, x| {
                let w = t.constant(w.clone());
                let y = t.matmul_bt(x, w);
                let s = t.softmax_rows(y);
                let target = Mat::from_shape_fn((2, 3), |(i, j)| ((i + j) % 2) as f64);
                t.bce_logits(s, target)
            },
            sample(2, 4, 0.5),
        );
    }

    #[test]
    fn conv_and_upsample_grads() {
        let geom = ConvGeom { h: 4, w: 3, c: 2, k: 3, stride: 2, pad: 1 };
        let w = sample(geom.patch_len(), 2, 0.3);
        check(
            |t, x| {
                let cols = t.im2col(x, geom);
                let w = t.constant(w.clone());
                let y = t.matmul(cols, w);
                let y = t.gelu(y);
                let up = t.upsample2(y, geom.out_h(), geom.out_w());
                let m = t.mean_rows(up);
                t.cross_entropy(m, 1)
            },
            sample(12, 2, 0.9),
        );
    }

    #[test]
    fn gather_reshape_transpose_grads() {
        check(
            |t, x| {
                let g = t.gather(x, &[2, 0, 2]);
                let r = t.reshape(g, 2, 3);
                let tr = t.transpose(r);
                let sg = t.sigmoid(tr);
                let m = t.mul(sg, tr);
                let row = t.constant(array![[0.5, -1.0]]);
                let a = t.add_row(m, row);
                let s = t.scale(a, 0.3);
                let r2 = t.reshape(s, 1, 6);
                t.bce_logits(r2, Mat::from_elem((1, 6), 0.25))
            },
            sample(3, 2, 0.2),
        );
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let geom = ConvGeom { h: 5, w: 4, c: 2, k: 3, stride: 1, pad: 1 };
        let x = sample(20, 2, 0.4);
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let cols = t.im2col(v, geom);
        let cols = t.value(cols);
        for oy in 0..5 {
            for ox in 0..4 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        for c in 0..2 {
                            let (iy, ix) = (oy as isize + ky as isize - 1, ox as isize + kx as isize - 1);
                            let want = if (0..5).contains(&iy) && (0..4).contains(&ix) {
                                x[[iy as usize * 4 + ix as usize, c]]
                            } else {
                                0.0
                            };
                            assert_eq!(cols[[oy * 4 + ox, (ky * 3 + kx) * 2 + c]], want);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let y = softmax_rows(&(sample(4, 9, 0.0) * 40.0));
        for r in y.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }
}
