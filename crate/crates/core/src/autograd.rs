//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values live on the
//! tape; [`Var`] is a cheap index into it. Parameters enter through
//! [`Tape::param`], which creates one leaf per parameter per tape, so a
//! parameter used by several graphs in a batch accumulates a single gradient.
//!
//! Everything is row-major: a sequence of `n` tokens of width `d` is an
//! `n x d` matrix.

use std::collections::{BTreeMap, HashMap};

use ndarray::{s, Array2, Axis, Zip};

use crate::nn::ParamId;

pub type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SegmentSoftmax(Var, Vec<usize>),
    LayerNorm(Var, Vec<f64>),
    Elu(Var),
    LeakyRelu(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    MeanRows(Var),
    SumAll(Var),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to every parameter on the tape.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Mat>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Mat)> {
        self.by_param.iter()
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }

    /// Adds `other` into `self`, parameter by parameter.
    pub fn accumulate(&mut self, other: Gradients) {
        for (id, g) in other.by_param {
            match self.by_param.get_mut(&id) {
                Some(acc) => *acc += &g,
                None => {
                    self.by_param.insert(id, g);
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.by_param.values_mut() {
            g.mapv_inplace(|x| x * k);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.by_param
            .values()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_leaves: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// Leaf for a parameter. Repeated calls with the same id return the same
    /// leaf.
    pub fn param(&mut self, id: ParamId, value: &Mat) -> Var {
        if let Some(&v) = self.param_leaves.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param(id), true);
        self.param_leaves.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let value = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let value = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// `a + row`, broadcasting a `1 x n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1);
        assert_eq!(self.shape(a).1, self.shape(row).1, "add_row: width mismatch");
        let value = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    /// `a * row`, broadcasting a `1 x n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1);
        assert_eq!(self.shape(a).1, self.shape(row).1, "mul_row: width mismatch");
        let value = self.value(a) * self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::MulRow(a, row), ng)
    }

    /// `a * col`, broadcasting an `m x 1` column across each row of `a`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        assert_eq!(self.shape(col).1, 1);
        assert_eq!(self.shape(a).0, self.shape(col).0, "mul_col: height mismatch");
        let value = self.value(a) * self.value(col);
        let ng = self.ng(a) || self.ng(col);
        self.push(value, Op::MulCol(a, col), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, k), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let ng = self.ng(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: width mismatch");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceRows(a, start), ng)
    }

    /// Row `i` of the output is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), index);
        let ng = self.ng(a);
        self.push(value, Op::Gather(a, index.to_vec()), ng)
    }

    /// Output has `rows` rows; row `index[i]` accumulates row `i` of `a`.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], rows: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), index.len());
        let mut value = Array2::zeros((rows, src.ncols()));
        for (i, &dst) in index.iter().enumerate() {
            let mut out = value.row_mut(dst);
            out += &src.row(i);
        }
        let ng = self.ng(a);
        self.push(value, Op::ScatterAdd(a, index.to_vec()), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        let ng = self.ng(a);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        let ng = self.ng(a);
        self.push(value, Op::LogSoftmaxRows(a), ng)
    }

    /// Softmax of an `m x 1` column within groups: entries sharing a segment id
    /// are normalized together.
    pub fn segment_softmax(&mut self, a: Var, segment: &[usize], segments: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.ncols(), 1);
        assert_eq!(src.nrows(), segment.len());
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (i, &sg) in segment.iter().enumerate() {
            max[sg] = max[sg].max(src[[i, 0]]);
        }
        let mut value = Array2::zeros(src.dim());
        let mut sum = vec![0.0; segments];
        for (i, &sg) in segment.iter().enumerate() {
            let e = (src[[i, 0]] - max[sg]).exp();
            value[[i, 0]] = e;
            sum[sg] += e;
        }
        for (i, &sg) in segment.iter().enumerate() {
            value[[i, 0]] /= sum[sg];
        }
        let ng = self.ng(a);
        self.push(value, Op::SegmentSoftmax(a, segment.to_vec()), ng)
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let src = self.value(a);
        let n = src.ncols() as f64;
        let mut value = src.clone();
        let mut inv_std = Vec::with_capacity(src.nrows());
        for mut row in value.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|x| (x - mean) * is);
            inv_std.push(is);
        }
        let ng = self.ng(a);
        self.push(value, Op::LayerNorm(a, inv_std), ng)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| if x > 0.0 { x } else { x.exp_m1() });
        let ng = self.ng(a);
        self.push(value, Op::Elu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        let ng = self.ng(a);
        self.push(value, Op::LeakyRelu(a, slope), ng)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        let ng = self.ng(a);
        self.push(value, Op::Gelu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.ng(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    /// Column means as a `1 x n` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        assert!(src.nrows() > 0, "mean_rows of empty matrix");
        let value = src.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        let ng = self.ng(a);
        self.push(value, Op::MeanRows(a), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::SumAll(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Gradient of the `1 x 1` node `loss` with respect to every parameter
    /// leaf.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Mat>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let mut send = |v: Var, delta: Mat| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    out.by_param.insert(*id, g);
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        send(*a, g.dot(&self.value(*b).t()));
                    }
                    if self.ng(*b) {
                        send(*b, self.value(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, -g);
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        send(*a, &g * self.value(*b));
                    }
                    if self.ng(*b) {
                        send(*b, &g * self.value(*a));
                    }
                }
                Op::AddRow(a, r) => {
                    if self.ng(*r) {
                        send(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    send(*a, g);
                }
                Op::MulRow(a, r) => {
                    if self.ng(*r) {
                        let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        send(*r, gr);
                    }
                    if self.ng(*a) {
                        send(*a, &g * self.value(*r));
                    }
                }
                Op::MulCol(a, c) => {
                    if self.ng(*c) {
                        let gc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        send(*c, gc);
                    }
                    if self.ng(*a) {
                        send(*a, &g * self.value(*c));
                    }
                }
                Op::Scale(a, k) => send(*a, g * *k),
                Op::Transpose(a) => send(*a, g.t().to_owned()),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        send(p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        send(p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    let w = g.ncols();
                    ga.slice_mut(s![.., *start..*start + w]).assign(&g);
                    send(*a, ga);
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    let h = g.nrows();
                    ga.slice_mut(s![*start..*start + h, ..]).assign(&g);
                    send(*a, ga);
                }
                Op::Gather(a, index) => {
                    let mut ga = Array2::zeros(self.shape(*a));
                    for (i, &src) in index.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(i);
                    }
                    send(*a, ga);
                }
                Op::ScatterAdd(a, index) => {
                    send(*a, g.select(Axis(0), index));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    let dots = ga.sum_axis(Axis(1));
                    Zip::from(ga.rows_mut())
                        .and(y.rows())
                        .and(&dots)
                        .for_each(|mut out, yr, &d| {
                            out.zip_mut_with(&yr, |o, &yv| *o -= yv * d);
                        });
                    send(*a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let sums = g.sum_axis(Axis(1));
                    let mut ga = g.clone();
                    Zip::from(ga.rows_mut())
                        .and(y.rows())
                        .and(&sums)
                        .for_each(|mut out, yr, &sg| {
                            out.zip_mut_with(&yr, |o, &ly| *o -= ly.exp() * sg);
                        });
                    send(*a, ga);
                }
                Op::SegmentSoftmax(a, segment) => {
                    let y = &node.value;
                    let segments = segment.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; segments];
                    for (i, &sg) in segment.iter().enumerate() {
                        dot[sg] += g[[i, 0]] * y[[i, 0]];
                    }
                    let mut ga = Array2::zeros(y.dim());
                    for (i, &sg) in segment.iter().enumerate() {
                        ga[[i, 0]] = y[[i, 0]] * (g[[i, 0]] - dot[sg]);
                    }
                    send(*a, ga);
                }
                Op::LayerNorm(a, inv_std) => {
                    let y = &node.value;
                    let n = y.ncols() as f64;
                    let mut ga = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gr.sum() / n;
                        let mean_gy = gr.dot(&yr) / n;
                        for c in 0..y.ncols() {
                            ga[[r, c]] = inv_std[r] * (gr[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                    send(*a, ga);
                }
                Op::Elu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| {
                            if x <= 0.0 {
                                *gv *= x.exp();
                            }
                        });
                    send(*a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| {
                            if x <= 0.0 {
                                *gv *= *slope;
                            }
                        });
                    send(*a, ga);
                }
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= gelu_grad(x));
                    send(*a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = &g * &node.value.mapv(|y| y * (1.0 - y));
                    send(*a, ga);
                }
                Op::MeanRows(a) => {
                    let (m, n) = self.shape(*a);
                    let row = g.row(0).to_owned() / m as f64;
                    let ga = row.broadcast((m, n)).unwrap().to_owned();
                    send(*a, ga);
                }
                Op::SumAll(a) => {
                    send(*a, Array2::from_elem(self.shape(*a), g[[0, 0]]));
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
