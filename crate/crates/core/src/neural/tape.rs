//! Reverse-mode differentiation over row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameter leaves
//! are read straight from the borrowed [`Parameters`], so building a tape
//! never copies weights. [`Tape::backward`] accumulates into a
//! [`Gradients`] buffer, which lets several tapes (one per sequence) share a
//! single accumulator.

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::params::{Gradients, Mat, ParamId, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    Gather { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    /// `alpha * a · bᵀ`
    MatMulT(Var, Var, f64),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    Gelu(Var),
    Softmax { x: Var },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    SelectRows { x: Var, rows: Vec<usize> },
    Dropout { x: Var, mask: Mat },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Mat },
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Row-wise softmax. With `causal`, row `i` only covers columns `0..=i` and
/// every later column is exactly zero.
pub fn softmax_rows(x: &Mat, causal: bool) -> Mat {
    let mut out = Mat::zeros(x.raw_dim());
    for (i, (row, mut dst)) in x.outer_iter().zip(out.outer_iter_mut()).enumerate() {
        let width = if causal { (i + 1).min(row.len()) } else { row.len() };
        let live = row.slice(s![..width]);
        let max = live.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(live.iter()) {
            *d = (v - max).exp();
            sum += *d;
        }
        dst.slice_mut(s![..width]).mapv_inplace(|v| v / sum);
    }
    out
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
        }
    }

    fn push(&mut self, op: Op, value: Option<Mat>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("only parameter leaves borrow their value"),
        }
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(Op::Input, Some(value))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(Op::Param(id), None);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let value = t.select(Axis(0), ids);
        self.push(Op::Gather { table, ids: ids.to_vec() }, Some(value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), Some(value))
    }

    /// Adds a `1 × n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let value = self.value(x) + self.value(row);
        self.push(Op::AddRow(x, row), Some(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), Some(value))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var, alpha: f64) -> Var {
        let mut value = self.value(a).dot(&self.value(b).t());
        if alpha != 1.0 {
            value.mapv_inplace(|v| v * alpha);
        }
        self.push(Op::MatMulT(a, b, alpha), Some(value))
    }

    /// `x W + b` with `b` a `1 × n` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        let mut xhat = Mat::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (src, mut dst) in xv.outer_iter().zip(xhat.outer_iter_mut()) {
            let mean = src.sum() / cols as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (d, &v) in dst.iter_mut().zip(src.iter()) {
                *d = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        self.push(Op::LayerNorm { x, gamma, beta, xhat, inv_std }, Some(value))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(gelu);
        self.push(Op::Gelu(x), Some(value))
    }

    pub fn softmax(&mut self, x: Var, causal: bool) -> Var {
        let value = softmax_rows(self.value(x), causal);
        self.push(Op::Softmax { x }, Some(value))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols { x, start }, Some(value))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("equal row counts");
        self.push(Op::ConcatCols(parts.to_vec()), Some(value))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        let value = self.value(x).select(Axis(0), rows);
        self.push(Op::SelectRows { x, rows: rows.to_vec() }, Some(value))
    }

    /// Inverted dropout with keep probability `1 - p`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let mask = Mat::from_shape_simple_fn(self.value(x).raw_dim(), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let value = self.value(x) * &mask;
        self.push(Op::Dropout { x, mask }, Some(value))
    }

    /// Mean negative log-likelihood of `targets[i]` under row `i` of `logits`,
    /// as a `1 × 1` matrix.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let probs = softmax_rows(self.value(logits), false);
        let n = targets.len() as f64;
        let loss = -targets
            .iter()
            .enumerate()
            .map(|(i, &t)| log_softmax_at(self.value(logits).row(i), t))
            .sum::<f64>()
            / n;
        let value = Array2::from_elem((1, 1), loss);
        self.push(
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
            Some(value),
        )
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Back-propagates `scale * d(root)` and adds parameter gradients into
    /// `grads`. `root` must be `1 × 1`.
    pub fn backward(&self, root: Var, grads: &mut Gradients, scale: f64) {
        let mut g: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        g[root.0] = Some(Array2::from_elem((1, 1), scale));
        for idx in (0..=root.0).rev() {
            let Some(gout) = g[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(id) => *grads.get_mut(*id) += &gout,
                Op::Gather { table, ids } => {
                    let mut gt = Mat::zeros(self.value(*table).raw_dim());
                    for (row, &id) in gout.outer_iter().zip(ids) {
                        let mut dst = gt.row_mut(id);
                        dst += &row;
                    }
                    accumulate(&mut g[table.0], gt);
                }
                Op::Add(a, b) => {
                    accumulate(&mut g[a.0], gout.clone());
                    accumulate(&mut g[b.0], gout);
                }
                Op::AddRow(x, row) => {
                    let grow = gout.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut g[row.0], grow);
                    accumulate(&mut g[x.0], gout);
                }
                Op::MatMul(a, b) => {
                    let ga = gout.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&gout);
                    accumulate(&mut g[a.0], ga);
                    accumulate(&mut g[b.0], gb);
                }
                Op::MatMulT(a, b, alpha) => {
                    // out = alpha a bᵀ: da = alpha g b, db = alpha gᵀ a
                    let mut ga = gout.dot(self.value(*b));
                    let mut gb = gout.t().dot(self.value(*a));
                    if *alpha != 1.0 {
                        ga.mapv_inplace(|v| v * alpha);
                        gb.mapv_inplace(|v| v * alpha);
                    }
                    accumulate(&mut g[a.0], ga);
                    accumulate(&mut g[b.0], gb);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gamma_v = self.value(*gamma);
                    let ggamma = (&gout * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gbeta = gout.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &gout * gamma_v;
                    let cols = xhat.ncols() as f64;
                    let mut gx = Mat::zeros(xhat.raw_dim());
                    for (i, mut dst) in gx.outer_iter_mut().enumerate() {
                        let dh = dxhat.row(i);
                        let xh = xhat.row(i);
                        let sum_dh = dh.sum();
                        let sum_dh_xh = dh.dot(&xh);
                        for j in 0..dst.len() {
                            dst[j] = inv_std[i] / cols * (cols * dh[j] - sum_dh - xh[j] * sum_dh_xh);
                        }
                    }
                    accumulate(&mut g[gamma.0], ggamma);
                    accumulate(&mut g[beta.0], gbeta);
                    accumulate(&mut g[x.0], gx);
                }
                Op::Gelu(x) => {
                    let mut gx = self.value(*x).mapv(gelu_grad);
                    gx *= &gout;
                    accumulate(&mut g[x.0], gx);
                }
                Op::Softmax { x } => {
                    let y = self.nodes[idx].value.as_ref().expect("softmax value");
                    let mut gx = &gout * y;
                    for (mut row, yrow) in gx.outer_iter_mut().zip(y.outer_iter()) {
                        let dot = row.sum();
                        for (d, &yy) in row.iter_mut().zip(yrow.iter()) {
                            *d -= yy * dot;
                        }
                    }
                    accumulate(&mut g[x.0], gx);
                }
                Op::SliceCols { x, start } => {
                    let mut gx = Mat::zeros(self.value(*x).raw_dim());
                    gx.slice_mut(s![.., *start..*start + gout.ncols()]).assign(&gout);
                    accumulate(&mut g[x.0], gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        accumulate(&mut g[p.0], gout.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::SelectRows { x, rows } => {
                    let mut gx = Mat::zeros(self.value(*x).raw_dim());
                    for (row, &r) in gout.outer_iter().zip(rows) {
                        let mut dst = gx.row_mut(r);
                        dst += &row;
                    }
                    accumulate(&mut g[x.0], gx);
                }
                Op::Dropout { x, mask } => accumulate(&mut g[x.0], &gout * mask),
                Op::CrossEntropy { logits, targets, probs } => {
                    let upstream = gout[[0, 0]] / targets.len() as f64;
                    let mut gl = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        gl[[i, t]] -= 1.0;
                    }
                    gl.mapv_inplace(|v| v * upstream);
                    accumulate(&mut g[logits.0], gl);
                }
            }
        }
    }
}

/// `log softmax(row)[target]`, computed stably.
pub fn log_softmax_at(row: ndarray::ArrayView1<f64>, target: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row[target] - lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn causal_softmax_masks_future_exactly() {
        let x = array![[1.0, 2.0, 3.0], [0.5, -1.0, 9.0], [0.0, 0.0, 0.0]];
        let y = softmax_rows(&x, true);
        assert_eq!(y[[0, 0]], 1.0);
        assert_eq!(y[[0, 1]], 0.0);
        assert_eq!(y[[1, 2]], 0.0);
        for row in y.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_two_token_hand_values() {
        // logits (2, 0) with target 0: -ln(e^2/(e^2+1))
        let params = Parameters::new();
        let mut tape = Tape::new(&params);
        let logits = tape.input(array![[2.0, 0.0], [0.0, 1.0]]);
        let loss = tape.cross_entropy(logits, &[0, 0]);
        let e = std::f64::consts::E;
        let hand = (-(e * e / (e * e + 1.0)).ln() - (1.0 / (1.0 + e)).ln()) / 2.0;
        assert!((tape.scalar(loss) - hand).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
