use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{GspError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Softmax direction. `Axis::Cols` normalizes each row across its columns,
/// `Axis::Rows` normalizes each column across its rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// A constant sparse linear map `y = M x` between flattened tensors.
///
/// Gathers, scatters, cumulative sums, weekly bucketing and lead-time
/// convolution are all expressed through this one primitive.
#[derive(Clone, Debug)]
pub struct SparseMap {
    in_len: usize,
    out_rows: usize,
    out_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMap {
    pub fn new(in_len: usize, out_rows: usize, out_cols: usize) -> Self {
        SparseMap {
            in_len,
            out_rows,
            out_cols,
            entries: Vec::new(),
        }
    }

    /// Adds `weight * x[input]` to `y[output]` (flat row-major indices).
    pub fn push(&mut self, output: usize, input: usize, weight: f64) {
        debug_assert!(output < self.out_rows * self.out_cols);
        debug_assert!(input < self.in_len);
        if weight != 0.0 {
            self.entries.push((output, input, weight));
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_shape(&self) -> (usize, usize) {
        (self.out_rows, self.out_cols)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out_rows * self.out_cols];
        for &(o, i, w) in &self.entries {
            y[o] += w * x[i];
        }
        y
    }

    fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.in_len];
        for &(o, i, w) in &self.entries {
            x[i] += w * g[o];
        }
        x
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softmax(Var, Axis),
    Sum(Var),
    SquaredError(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    ScatterAddRows(Var, Arc<Vec<usize>>),
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    Linear(Var, Arc<SparseMap>),
    CapacityRatio(Var, Var),
    StraightThrough(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of primitive applications. Inputs always precede the
/// nodes that consume them, so a reverse sweep is a valid topological order.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros if the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Differentiable input (parameter or input whose gradient is wanted).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(GspError::shape(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.rows(), ta.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    fn broadcast_row(&self, op: &'static str, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(GspError::shape(op, ta.shape(), tr.shape()));
        }
        let (n, m) = dims(ta);
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            data.extend(ta.row_slice(i).iter().zip(tr.data()).map(|(&x, &y)| f(x, y)));
        }
        Ok(Tensor::from_parts(n, m, data))
    }

    /// `a + row` with `row` of shape `[1, cols]` broadcast over rows (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.broadcast_row("add_row", a, row, |x, y| x + y)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.broadcast_row("mul_row", a, row, |x, y| x * y)?;
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    /// `a * col` with `col` of shape `[rows, 1]` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.cols() != 1 || tc.rows() != ta.rows() {
            return Err(GspError::shape("mul_col", ta.shape(), tc.shape()));
        }
        let (n, m) = dims(ta);
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let c = tc.data()[i];
            data.extend(ta.row_slice(i).iter().map(|&x| x * c));
        }
        let out = Tensor::from_parts(n, m, data);
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| GspError::InvalidArgument("concat of zero tensors".into()))?;
        let n = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != n {
                return Err(GspError::shape("concat_cols", self.value(first).shape(), t.shape()));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let out = Tensor::from_parts(n, total, data);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| GspError::InvalidArgument("concat of zero tensors".into()))?;
        let m = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != m {
                return Err(GspError::shape("concat_rows", self.value(first).shape(), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_parts(rows, m, data);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let t = self.value(a);
        let out = match axis {
            Axis::Cols => softmax_rows(t),
            Axis::Rows => softmax_rows(&t.transpose()).transpose(),
        };
        self.push(out, Op::Softmax(a, axis))
    }

    /// Sum of all entries, as a `[1, 1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `sum((a - b)^2)` as a `[1, 1]` tensor.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.zip_same("squared_error", a, b, |x, y| x - y)?;
        let s = diff.data().iter().map(|d| d * d).sum();
        Ok(self.push(Tensor::scalar(s), Op::SquaredError(a, b)))
    }

    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(GspError::shape("gather_rows", t.shape(), &[bad]));
        }
        let mut data = Vec::with_capacity(index.len() * m);
        for &i in index.iter() {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::from_parts(index.len(), m, data);
        Ok(self.push(out, Op::GatherRows(a, index)))
    }

    /// Row `k` of `a` is added into output row `index[k]`; output has `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<Vec<usize>>, rows: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        if index.len() != n || index.iter().any(|&i| i >= rows) {
            return Err(GspError::shape("scatter_add_rows", t.shape(), &[index.len(), rows]));
        }
        let mut data = vec![0.0; rows * m];
        for (k, &i) in index.iter().enumerate() {
            for (o, &x) in data[i * m..(i + 1) * m].iter_mut().zip(t.row_slice(k)) {
                *o += x;
            }
        }
        let out = Tensor::from_parts(rows, m, data);
        Ok(self.push(out, Op::ScatterAddRows(a, index)))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    pub fn segment_softmax(&mut self, a: Var, segment: Arc<Vec<usize>>, segments: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, m) = dims(t);
        if segment.len() != n || segment.iter().any(|&s| s >= segments) {
            return Err(GspError::shape(
                "segment_softmax",
                t.shape(),
                &[segment.len(), segments],
            ));
        }
        let mut max = vec![f64::NEG_INFINITY; segments * m];
        for (k, &s) in segment.iter().enumerate() {
            for (j, &x) in t.row_slice(k).iter().enumerate() {
                let slot = &mut max[s * m + j];
                if x > *slot {
                    *slot = x;
                }
            }
        }
        let mut data = vec![0.0; n * m];
        let mut denom = vec![0.0; segments * m];
        for (k, &s) in segment.iter().enumerate() {
            for (j, &x) in t.row_slice(k).iter().enumerate() {
                let e = (x - max[s * m + j]).exp();
                data[k * m + j] = e;
                denom[s * m + j] += e;
            }
        }
        for (k, &s) in segment.iter().enumerate() {
            for j in 0..m {
                data[k * m + j] /= denom[s * m + j];
            }
        }
        let out = Tensor::from_parts(n, m, data);
        Ok(self.push(out, Op::SegmentSoftmax(a, segment)))
    }

    pub fn linear(&mut self, a: Var, map: Arc<SparseMap>) -> Result<Var> {
        let t = self.value(a);
        if t.len() != map.in_len() {
            return Err(GspError::shape("linear", t.shape(), &[map.in_len()]));
        }
        let (r, c) = map.out_shape();
        let out = Tensor::from_parts(r, c, map.apply(t.data()));
        Ok(self.push(out, Op::Linear(a, map)))
    }

    /// Elementwise `min(1, max(cap, 0) / out)`, and 1 where `out <= max(cap, 0)`.
    ///
    /// This is the outgoing-supply scaling factor used by the inventory
    /// rollout; a non-positive capacity yields 0 for any positive outflow.
    pub fn capacity_ratio(&mut self, capacity: Var, outflow: Var) -> Result<Var> {
        let out = self.zip_same("capacity_ratio", capacity, outflow, capacity_ratio)?;
        Ok(self.push(out, Op::CapacityRatio(capacity, outflow)))
    }

    /// Forward value is the one-hot argmax of each row; the backward pass is
    /// the identity (straight-through estimator).
    pub fn straight_through(&mut self, soft: Var) -> Var {
        let t = self.value(soft);
        let (n, m) = dims(t);
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            data[i * m + argmax(t.row_slice(i))] = 1.0;
        }
        self.push(Tensor::from_parts(n, m, data), Op::StraightThrough(soft))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_value = self.value(output);
        if out_value.len() != 1 {
            return Err(GspError::NonScalarOutput(out_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let contributions = self.local_grads(node, &g);
            grads[idx] = Some(g);
            for (v, t) in contributions {
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| dims(&n.value)).collect();
        Ok(Gradients { grads, shapes })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let val = |v: Var| self.value(v);
        match &node.op {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) => {
                let ga = g.matmul(&val(*b).transpose()).expect("matmul grad shape");
                let gb = val(*a).transpose().matmul(g).expect("matmul grad shape");
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => {
                let ga = zip(g, val(*b), |x, y| x * y);
                let gb = zip(g, val(*a), |x, y| x * y);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|x| x * f))],
            Op::AddRow(a, r) => {
                let (n, m) = dims(g);
                let mut gr = vec![0.0; m];
                for i in 0..n {
                    for (acc, &x) in gr.iter_mut().zip(g.row_slice(i)) {
                        *acc += x;
                    }
                }
                vec![(*a, g.clone()), (*r, Tensor::from_parts(1, m, gr))]
            }
            Op::MulRow(a, r) => {
                let (n, m) = dims(g);
                let (ta, tr) = (val(*a), val(*r));
                let mut ga = vec![0.0; n * m];
                let mut gr = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g.at(i, j);
                        ga[i * m + j] = gij * tr.data()[j];
                        gr[j] += gij * ta.at(i, j);
                    }
                }
                vec![(*a, Tensor::from_parts(n, m, ga)), (*r, Tensor::from_parts(1, m, gr))]
            }
            Op::MulCol(a, c) => {
                let (n, m) = dims(g);
                let (ta, tc) = (val(*a), val(*c));
                let mut ga = vec![0.0; n * m];
                let mut gc = vec![0.0; n];
                for i in 0..n {
                    let ci = tc.data()[i];
                    for j in 0..m {
                        let gij = g.at(i, j);
                        ga[i * m + j] = gij * ci;
                        gc[i] += gij * ta.at(i, j);
                    }
                }
                vec![(*a, Tensor::from_parts(n, m, ga)), (*c, Tensor::from_parts(n, 1, gc))]
            }
            Op::ConcatCols(parts) => {
                let n = g.rows();
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = val(p).cols();
                    let mut data = Vec::with_capacity(n * w);
                    for i in 0..n {
                        data.extend_from_slice(&g.row_slice(i)[offset..offset + w]);
                    }
                    out.push((p, Tensor::from_parts(n, w, data)));
                    offset += w;
                }
                out
            }
            Op::ConcatRows(parts) => {
                let m = g.cols();
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let r = val(p).rows();
                    let data = g.data()[offset * m..(offset + r) * m].to_vec();
                    out.push((p, Tensor::from_parts(r, m, data)));
                    offset += r;
                }
                out
            }
            Op::LeakyRelu(a, slope) => {
                let ga = zip(g, val(*a), |gi, x| if x > 0.0 { gi } else { slope * gi });
                vec![(*a, ga)]
            }
            Op::Sigmoid(a) => {
                let ga = zip(g, &node.value, |gi, s| gi * s * (1.0 - s));
                vec![(*a, ga)]
            }
            Op::Softmax(a, axis) => {
                let ga = match axis {
                    Axis::Cols => softmax_rows_backward(&node.value, g),
                    Axis::Rows => softmax_rows_backward(&node.value.transpose(), &g.transpose()).transpose(),
                };
                vec![(*a, ga)]
            }
            Op::Sum(a) => {
                let (n, m) = dims(val(*a));
                vec![(*a, Tensor::filled(n, m, g.item()))]
            }
            Op::SquaredError(a, b) => {
                let gi = g.item();
                let ga = zip(val(*a), val(*b), |x, y| 2.0 * gi * (x - y));
                let gb = ga.map(|x| -x);
                vec![(*a, ga), (*b, gb)]
            }
            Op::GatherRows(a, index) => {
                let (n, m) = dims(val(*a));
                let mut ga = vec![0.0; n * m];
                for (k, &i) in index.iter().enumerate() {
                    for (o, &x) in ga[i * m..(i + 1) * m].iter_mut().zip(g.row_slice(k)) {
                        *o += x;
                    }
                }
                vec![(*a, Tensor::from_parts(n, m, ga))]
            }
            Op::ScatterAddRows(a, index) => {
                let m = g.cols();
                let mut ga = Vec::with_capacity(index.len() * m);
                for &i in index.iter() {
                    ga.extend_from_slice(g.row_slice(i));
                }
                vec![(*a, Tensor::from_parts(index.len(), m, ga))]
            }
            Op::SegmentSoftmax(a, segment) => {
                let y = &node.value;
                let (n, m) = dims(y);
                let segments = segment.iter().max().map_or(0, |s| s + 1);
                let mut dot = vec![0.0; segments * m];
                for (k, &s) in segment.iter().enumerate() {
                    for j in 0..m {
                        dot[s * m + j] += g.at(k, j) * y.at(k, j);
                    }
                }
                let mut ga = vec![0.0; n * m];
                for (k, &s) in segment.iter().enumerate() {
                    for j in 0..m {
                        ga[k * m + j] = y.at(k, j) * (g.at(k, j) - dot[s * m + j]);
                    }
                }
                vec![(*a, Tensor::from_parts(n, m, ga))]
            }
            Op::Linear(a, map) => {
                let (n, m) = dims(val(*a));
                vec![(*a, Tensor::from_parts(n, m, map.apply_transpose(g.data())))]
            }
            Op::CapacityRatio(cap, out) => {
                let (tc, to) = (val(*cap), val(*out));
                let (n, m) = dims(tc);
                let mut gc = vec![0.0; n * m];
                let mut go = vec![0.0; n * m];
                for k in 0..n * m {
                    let (c, o) = (tc.data()[k], to.data()[k]);
                    let avail = c.max(0.0);
                    if o > avail && c > 0.0 {
                        gc[k] = g.data()[k] / o;
                        go[k] = -g.data()[k] * c / (o * o);
                    }
                }
                vec![
                    (*cap, Tensor::from_parts(n, m, gc)),
                    (*out, Tensor::from_parts(n, m, go)),
                ]
            }
            Op::StraightThrough(a) => vec![(*a, g.clone())],
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.rows(), a.cols(), data)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn capacity_ratio(capacity: f64, outflow: f64) -> f64 {
    let avail = capacity.max(0.0);
    if outflow > avail {
        avail / outflow
    } else {
        1.0
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of a slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let (n, m) = dims(t);
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        data.extend(softmax(t.row_slice(i)));
    }
    Tensor::from_parts(n, m, data)
}

fn softmax_rows_backward(y: &Tensor, g: &Tensor) -> Tensor {
    let (n, m) = dims(y);
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let (yr, gr) = (y.row_slice(i), g.row_slice(i));
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        out.extend(yr.iter().zip(gr).map(|(&yi, &gi)| yi * (gi - dot)));
    }
    Tensor::from_parts(n, m, out)
}
