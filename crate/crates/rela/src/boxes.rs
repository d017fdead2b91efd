//! Box regression targets: the L1 + GIoU pair loss, region-to-target
//! assignment and the minimap occupancy target.

use std::ops::{Add, Mul, Sub};

use grex_core::geometry::{BBox, BinaryMask};

use crate::error::ModelError;

/// Forward-mode dual number carrying the gradient w.r.t. four inputs.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; 4],
}

impl Dual {
    fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; 4];
        d[i] = 1.0;
        Dual { v, d }
    }

    fn c(v: f64) -> Self {
        Dual { v, d: [0.0; 4] }
    }

    fn abs(self) -> Self {
        if self.v < 0.0 {
            self * Dual::c(-1.0)
        } else {
            self
        }
    }

    fn min(self, o: Self) -> Self {
        if o.v < self.v {
            o
        } else {
            self
        }
    }

    fn max(self, o: Self) -> Self {
        if o.v > self.v {
            o
        } else {
            self
        }
    }

    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        let mut d = [0.0; 4];
        for (i, di) in d.iter_mut().enumerate() {
            *di = (self.d[i] - q * o.d[i]) / o.v;
        }
        Dual { v: q, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(o.d) {
            *a += b;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + o * Dual::c(-1.0)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; 4];
        for (i, di) in d.iter_mut().enumerate() {
            *di = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

fn corners(b: [Dual; 4]) -> [Dual; 4] {
    let half = Dual::c(0.5);
    [b[0] - b[2] * half, b[1] - b[3] * half, b[0] + b[2] * half, b[1] + b[3] * half]
}

fn pair_loss_dual(pred: [Dual; 4], gt: [f64; 4]) -> Dual {
    let g = gt.map(Dual::c);
    let mut l1 = Dual::c(0.0);
    for i in 0..4 {
        l1 = l1 + (pred[i] - g[i]).abs();
    }
    let (p, q) = (corners(pred), corners(g));
    let zero = Dual::c(0.0);
    let iw = (p[2].min(q[2]) - p[0].max(q[0])).max(zero);
    let ih = (p[3].min(q[3]) - p[1].max(q[1])).max(zero);
    let inter = iw * ih;
    let union = pred[2] * pred[3] + g[2] * g[3] - inter;
    let ew = p[2].max(q[2]) - p[0].min(q[0]);
    let eh = p[3].max(q[3]) - p[1].min(q[1]);
    let enclose = ew * eh;
    let giou = inter.div(union) - (enclose - union).div(enclose);
    l1 + Dual::c(1.0) - giou
}

/// `L1 + (1 - GIoU)` between two normalized `(cx, cy, w, h)` boxes, with the
/// gradient w.r.t. `pred`. Widths and heights must be positive.
pub fn box_pair_loss(pred: [f64; 4], gt: [f64; 4]) -> (f64, [f64; 4]) {
    let p = [0, 1, 2, 3].map(|i| Dual::var(pred[i], i));
    let r = pair_loss_dual(p, gt);
    (r.v, r.d)
}

pub fn box_pair_cost(pred: [f64; 4], gt: [f64; 4]) -> f64 {
    box_pair_loss(pred, gt).0
}

/// Pixel box to normalized `(cx, cy, w, h)`.
pub fn normalize_box(b: &BBox, image_h: usize, image_w: usize) -> [f64; 4] {
    let (w, h) = (image_w as f64, image_h as f64);
    [(b.x1 + b.x2) / (2.0 * w), (b.y1 + b.y2) / (2.0 * h), b.width() / w, b.height() / h]
}

/// Normalized `(cx, cy, w, h)` to a pixel box clipped to the image.
pub fn denormalize_box(b: [f64; 4], image_h: usize, image_w: usize) -> BBox {
    let (w, h) = (image_w as f64, image_h as f64);
    let x1 = ((b[0] - b[2] / 2.0) * w).clamp(0.0, w);
    let y1 = ((b[1] - b[3] / 2.0) * h).clamp(0.0, h);
    let x2 = ((b[0] + b[2] / 2.0) * w).clamp(x1, w);
    let y2 = ((b[1] + b[3] / 2.0) * h).clamp(y1, h);
    BBox::new(x1, y1, x2, y2).expect("clamped box is ordered")
}

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`).
/// Returns the column chosen for each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // potentials formulation, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; m + 1]);
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Optimal one-to-one matching of ground-truth boxes to predicted region
/// boxes under `L1 + (1 - GIoU)`. Returns `(region, gt)` pairs.
pub fn match_for_box_loss(pred: &[[f64; 4]], gts: &[[f64; 4]]) -> Result<Vec<(usize, usize)>, ModelError> {
    if gts.len() > pred.len() {
        return Err(ModelError::TooManyTargets { gts: gts.len(), regions: pred.len() });
    }
    let cost: Vec<Vec<f64>> = gts.iter().map(|g| pred.iter().map(|p| box_pair_cost(*p, *g)).collect()).collect();
    let cols = hungarian(&cost);
    let mut pairs: Vec<(usize, usize)> = cols.into_iter().enumerate().map(|(g, r)| (r, g)).collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Pixel rows/cols `[start, end)` covered by cell `i` of `p` along a side of
/// length `len`. Cells split the side as evenly as integer bounds allow.
pub fn cell_span(i: usize, p: usize, len: usize) -> (usize, usize) {
    (i * len / p, (i + 1) * len / p)
}

/// Fraction of foreground pixels in each of the `p x p` cells, row-major.
pub fn minimap_target(mask: &BinaryMask, p: usize) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::with_capacity(p * p);
    for cy in 0..p {
        let (y0, y1) = cell_span(cy, p, h);
        for cx in 0..p {
            let (x0, x1) = cell_span(cx, p, w);
            let mut on = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    on += mask.get(y, x) as usize;
                }
            }
            let n = (y1 - y0) * (x1 - x0);
            out.push(if n == 0 { 0.0 } else { on as f64 / n as f64 });
        }
    }
    out
}

/// For each region whose cell holds target pixels, the target box that
/// overlaps the cell most (lowest index on ties). Returns `(region, gt)`.
pub fn dense_assignment(gt_boxes: &[BBox], minimap: &[f64], p: usize, image_h: usize, image_w: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for cy in 0..p {
        let (y0, y1) = cell_span(cy, p, image_h);
        for cx in 0..p {
            let r = cy * p + cx;
            if minimap[r] <= 0.0 {
                continue;
            }
            let (x0, x1) = cell_span(cx, p, image_w);
            let cell = BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64).expect("ordered cell");
            let mut best: Option<(usize, f64)> = None;
            for (g, b) in gt_boxes.iter().enumerate() {
                let a = cell.intersection_area(b);
                if a > 0.0 && best.is_none_or(|(_, ba)| a > ba) {
                    best = Some((g, a));
                }
            }
            if let Some((g, _)) = best {
                out.push((r, g));
            }
        }
    }
    out
}
