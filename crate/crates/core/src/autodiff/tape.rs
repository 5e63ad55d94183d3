//! Define-by-run tape. Every operation appends a node holding its forward
//! value; [`Tape::backward`] walks the nodes in reverse and accumulates
//! vector-Jacobian products into the inputs that require a gradient.

use std::borrow::Cow;

use super::{AutodiffError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations understood by the tape.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `[n, p] x [p, q] -> [n, q]`
    Matmul,
    Add,
    Sub,
    /// Concatenation along the last axis.
    Concat,
    Scale(f64),
    Sigmoid,
    Tanh,
    Hadamard,
    /// Arithmetic mean over the rows of a nonempty matrix, `[r, c] -> [1, c]`.
    MeanRows,
    /// `x W + b` with the bias broadcast over rows.
    Affine,
    /// Row lookup into a `[rows, c]` table.
    GatherRows(Vec<usize>),
    /// Column window of a matrix; the inverse of [`Op::Concat`].
    SliceCols { start: usize, len: usize },
    Sum,
    /// Mean squared difference of two same-shaped inputs.
    Mse,
    /// `-log softmax(logits)[class]`.
    CrossEntropy(usize),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Matmul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Concat => "concat",
            Op::Scale(_) => "scale",
            Op::Sigmoid => "sigmoid",
            Op::Tanh => "tanh",
            Op::Hadamard => "hadamard",
            Op::MeanRows => "mean_rows",
            Op::Affine => "affine",
            Op::GatherRows(_) => "gather_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::Sum => "sum",
            Op::Mse => "mse",
            Op::CrossEntropy(_) => "cross_entropy",
        }
    }
}

#[derive(Debug)]
enum Kind {
    Leaf,
    Apply(Op),
}

#[derive(Debug)]
struct Node<'a> {
    kind: Kind,
    inputs: Vec<Var>,
    shape: Vec<usize>,
    value: Cow<'a, [f64]>,
    requires_grad: bool,
    /// Saved activation beyond the output (softmax probabilities for cross-entropy).
    saved: Vec<f64>,
}

/// Append-only record of a forward computation.
///
/// Leaves registered with [`Tape::param`] borrow their storage, so binding a
/// full parameter set to a fresh tape each step costs no copies.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn rank2(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node<'a>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node<'a>, AutodiffError> {
        self.nodes.get(v.0).ok_or(AutodiffError::UnknownVar(v.0))
    }

    pub fn leaf(&mut self, tensor: Tensor, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(Node {
            kind: Kind::Leaf,
            inputs: Vec::new(),
            shape,
            value: Cow::Owned(tensor.into_data()),
            requires_grad,
            saved: Vec::new(),
        })
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor, false)
    }

    /// Borrowed leaf; `requires_grad` selects whether it is a differentiation target.
    pub fn borrowed(&mut self, tensor: &'a Tensor, requires_grad: bool) -> Var {
        self.push(Node {
            kind: Kind::Leaf,
            inputs: Vec::new(),
            shape: tensor.shape().to_vec(),
            value: Cow::Borrowed(tensor.data()),
            requires_grad,
            saved: Vec::new(),
        })
    }

    pub fn param(&mut self, tensor: &'a Tensor) -> Var {
        self.borrowed(tensor, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.to_vec()).expect("node shape invariant")
    }

    /// Records `op` applied to `inputs` and returns the result node.
    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var, AutodiffError> {
        for &v in inputs {
            self.node(v)?;
        }
        let mismatch = |tape: &Self, op: &Op| AutodiffError::ShapeMismatch {
            op: op.name(),
            shapes: inputs.iter().map(|&v| tape.nodes[v.0].shape.clone()).collect(),
        };
        let arity_ok = match &op {
            Op::Matmul | Op::Add | Op::Sub | Op::Hadamard | Op::Mse => inputs.len() == 2,
            Op::Affine => inputs.len() == 3,
            Op::Concat => !inputs.is_empty(),
            _ => inputs.len() == 1,
        };
        if !arity_ok {
            return Err(mismatch(self, &op));
        }
        let val = |i: usize| -> &[f64] { &self.nodes[inputs[i].0].value };
        let shp = |i: usize| -> &[usize] { &self.nodes[inputs[i].0].shape };

        let mut saved = Vec::new();
        let (shape, value): (Vec<usize>, Vec<f64>) = match &op {
            Op::Matmul => {
                let ((n, p), (p2, q)) = match (rank2(shp(0)), rank2(shp(1))) {
                    (Some(a), Some(b)) if a.1 == b.0 => (a, b),
                    _ => return Err(mismatch(self, &op)),
                };
                debug_assert_eq!(p, p2);
                (vec![n, q], matmul(val(0), val(1), n, p, q))
            }
            Op::Add | Op::Sub | Op::Hadamard => {
                if shp(0) != shp(1) {
                    return Err(mismatch(self, &op));
                }
                let (a, b) = (val(0), val(1));
                let out = match op {
                    Op::Add => a.iter().zip(b).map(|(x, y)| x + y).collect(),
                    Op::Sub => a.iter().zip(b).map(|(x, y)| x - y).collect(),
                    _ => a.iter().zip(b).map(|(x, y)| x * y).collect(),
                };
                (shp(0).to_vec(), out)
            }
            Op::Concat => {
                let first = shp(0);
                if first.is_empty() {
                    return Err(mismatch(self, &op));
                }
                let lead = &first[..first.len() - 1];
                for i in 1..inputs.len() {
                    let s = shp(i);
                    if s.len() != first.len() || &s[..s.len() - 1] != lead {
                        return Err(mismatch(self, &op));
                    }
                }
                let outer: usize = lead.iter().product();
                let widths: Vec<usize> = (0..inputs.len()).map(|i| *shp(i).last().unwrap()).collect();
                let total: usize = widths.iter().sum();
                let mut out = Vec::with_capacity(outer * total);
                for row in 0..outer {
                    for (i, &w) in widths.iter().enumerate() {
                        out.extend_from_slice(&val(i)[row * w..(row + 1) * w]);
                    }
                }
                let mut shape = lead.to_vec();
                shape.push(total);
                (shape, out)
            }
            Op::Scale(c) => (shp(0).to_vec(), val(0).iter().map(|x| x * c).collect()),
            Op::Sigmoid => (shp(0).to_vec(), val(0).iter().map(|&x| sigmoid(x)).collect()),
            Op::Tanh => (shp(0).to_vec(), val(0).iter().map(|x| x.tanh()).collect()),
            Op::MeanRows => {
                let (r, c) = rank2(shp(0)).ok_or_else(|| mismatch(self, &op))?;
                if r == 0 {
                    return Err(AutodiffError::EmptyMean);
                }
                let mut out = vec![0.0; c];
                for row in val(0).chunks_exact(c) {
                    for (o, x) in out.iter_mut().zip(row) {
                        *o += x;
                    }
                }
                let inv = 1.0 / r as f64;
                out.iter_mut().for_each(|o| *o *= inv);
                (vec![1, c], out)
            }
            Op::Affine => {
                let ((n, p), (p2, q)) = match (rank2(shp(0)), rank2(shp(1))) {
                    (Some(a), Some(b)) if a.1 == b.0 => (a, b),
                    _ => return Err(mismatch(self, &op)),
                };
                debug_assert_eq!(p, p2);
                if val(2).len() != q {
                    return Err(mismatch(self, &op));
                }
                let mut out = matmul(val(0), val(1), n, p, q);
                for row in out.chunks_exact_mut(q.max(1)) {
                    for (o, b) in row.iter_mut().zip(val(2)) {
                        *o += b;
                    }
                }
                (vec![n, q], out)
            }
            Op::GatherRows(idx) => {
                let (r, c) = rank2(shp(0)).ok_or_else(|| mismatch(self, &op))?;
                let mut out = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    if i >= r {
                        return Err(AutodiffError::IndexOutOfRange {
                            op: "gather_rows",
                            index: i,
                            bound: r,
                        });
                    }
                    out.extend_from_slice(&val(0)[i * c..(i + 1) * c]);
                }
                (vec![idx.len(), c], out)
            }
            Op::SliceCols { start, len } => {
                let (r, c) = rank2(shp(0)).ok_or_else(|| mismatch(self, &op))?;
                if start + len > c {
                    return Err(mismatch(self, &op));
                }
                let mut out = Vec::with_capacity(r * len);
                for row in val(0).chunks_exact(c.max(1)).take(r) {
                    out.extend_from_slice(&row[*start..start + len]);
                }
                (vec![r, *len], out)
            }
            Op::Sum => (vec![1], vec![val(0).iter().sum()]),
            Op::Mse => {
                if shp(0) != shp(1) {
                    return Err(mismatch(self, &op));
                }
                let n = val(0).len();
                if n == 0 {
                    return Err(mismatch(self, &op));
                }
                let s: f64 = val(0).iter().zip(val(1)).map(|(p, t)| (p - t) * (p - t)).sum();
                (vec![1], vec![s / n as f64])
            }
            Op::CrossEntropy(class) => {
                let logits = val(0);
                if *class >= logits.len() {
                    return Err(AutodiffError::IndexOutOfRange {
                        op: "cross_entropy",
                        index: *class,
                        bound: logits.len(),
                    });
                }
                saved = softmax(logits);
                let lse = log_sum_exp(logits);
                (vec![1], vec![lse - logits[*class]])
            }
        };

        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        Ok(self.push(Node {
            kind: Kind::Apply(op),
            inputs: inputs.to_vec(),
            shape,
            value: Cow::Owned(value),
            requires_grad,
            saved,
        }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Matmul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Hadamard, &[a, b])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.apply(Op::Concat, parts)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(Op::Scale(c), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Tanh, &[a])
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::MeanRows, &[a])
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Affine, &[x, w, b])
    }

    pub fn gather_rows(&mut self, table: Var, rows: Vec<usize>) -> Result<Var, AutodiffError> {
        self.apply(Op::GatherRows(rows), &[table])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        self.apply(Op::SliceCols { start, len }, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Sum, &[a])
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Mse, &[pred, target])
    }

    pub fn cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var, AutodiffError> {
        self.apply(Op::CrossEntropy(class), &[logits])
    }

    /// Sum of scalar nodes; `None` for an empty slice.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Option<Var>, AutodiffError> {
        let mut iter = terms.iter().copied();
        let Some(mut acc) = iter.next() else {
            return Ok(None);
        };
        for t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(Some(acc))
    }

    /// Reverse sweep from a scalar root. Every `requires_grad` node reachable
    /// from `root` ends up with a gradient of its own shape.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let root_node = self.node(root)?;
        if root_node.value.len() != 1 {
            return Err(AutodiffError::NonScalarRoot {
                shape: root_node.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if !root_node.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Kind::Apply(op) = &node.kind {
                self.propagate(op, node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let inputs = &node.inputs;
        let needs = |k: usize| self.nodes[inputs[k].0].requires_grad;
        let val = |k: usize| -> &[f64] { &self.nodes[inputs[k].0].value };
        let shp = |k: usize| -> &[usize] { &self.nodes[inputs[k].0].shape };

        let mut acc = |k: usize, f: &mut dyn FnMut(&mut [f64])| {
            let id = inputs[k].0;
            let slot = grads[id].get_or_insert_with(|| vec![0.0; self.nodes[id].value.len()]);
            f(slot);
        };

        match op {
            Op::Matmul | Op::Affine => {
                let (n, p) = rank2(shp(0)).unwrap();
                let q = rank2(shp(1)).unwrap().1;
                if needs(0) {
                    let w = val(1);
                    acc(0, &mut |dx| {
                        for i in 0..n {
                            let gi = &g[i * q..(i + 1) * q];
                            for j in 0..p {
                                let wj = &w[j * q..(j + 1) * q];
                                dx[i * p + j] += dot(gi, wj);
                            }
                        }
                    });
                }
                if needs(1) {
                    let x = val(0);
                    acc(1, &mut |dw| {
                        for i in 0..n {
                            let gi = &g[i * q..(i + 1) * q];
                            for j in 0..p {
                                axpy(x[i * p + j], gi, &mut dw[j * q..(j + 1) * q]);
                            }
                        }
                    });
                }
                if matches!(op, Op::Affine) && needs(2) {
                    acc(2, &mut |db| {
                        for row in g.chunks_exact(q.max(1)) {
                            axpy(1.0, row, db);
                        }
                    });
                }
            }
            Op::Add => {
                for k in 0..2 {
                    if needs(k) {
                        acc(k, &mut |d| axpy(1.0, g, d));
                    }
                }
            }
            Op::Sub => {
                if needs(0) {
                    acc(0, &mut |d| axpy(1.0, g, d));
                }
                if needs(1) {
                    acc(1, &mut |d| axpy(-1.0, g, d));
                }
            }
            Op::Hadamard => {
                for k in 0..2 {
                    if needs(k) {
                        let other = val(1 - k);
                        acc(k, &mut |d| {
                            for ((d, g), o) in d.iter_mut().zip(g).zip(other) {
                                *d += g * o;
                            }
                        });
                    }
                }
            }
            Op::Concat => {
                let total = *node.shape.last().unwrap();
                let outer = if total == 0 { 0 } else { g.len() / total };
                let mut offset = 0;
                for k in 0..inputs.len() {
                    let w = *shp(k).last().unwrap();
                    if needs(k) {
                        acc(k, &mut |d| {
                            for row in 0..outer {
                                let src = &g[row * total + offset..row * total + offset + w];
                                axpy(1.0, src, &mut d[row * w..(row + 1) * w]);
                            }
                        });
                    }
                    offset += w;
                }
            }
            Op::Scale(c) => {
                if needs(0) {
                    acc(0, &mut |d| axpy(*c, g, d));
                }
            }
            Op::Sigmoid => {
                if needs(0) {
                    let y = &node.value;
                    acc(0, &mut |d| {
                        for ((d, g), y) in d.iter_mut().zip(g).zip(y.iter()) {
                            *d += g * y * (1.0 - y);
                        }
                    });
                }
            }
            Op::Tanh => {
                if needs(0) {
                    let y = &node.value;
                    acc(0, &mut |d| {
                        for ((d, g), y) in d.iter_mut().zip(g).zip(y.iter()) {
                            *d += g * (1.0 - y * y);
                        }
                    });
                }
            }
            Op::MeanRows => {
                if needs(0) {
                    let (r, c) = rank2(shp(0)).unwrap();
                    let inv = 1.0 / r as f64;
                    acc(0, &mut |d| {
                        for row in d.chunks_exact_mut(c.max(1)) {
                            axpy(inv, g, row);
                        }
                    });
                }
            }
            Op::GatherRows(idx) => {
                if needs(0) {
                    let c = rank2(shp(0)).unwrap().1;
                    acc(0, &mut |d| {
                        for (k, &row) in idx.iter().enumerate() {
                            axpy(1.0, &g[k * c..(k + 1) * c], &mut d[row * c..(row + 1) * c]);
                        }
                    });
                }
            }
            Op::SliceCols { start, len } => {
                if needs(0) {
                    let (r, c) = rank2(shp(0)).unwrap();
                    acc(0, &mut |d| {
                        for row in 0..r {
                            axpy(
                                1.0,
                                &g[row * len..(row + 1) * len],
                                &mut d[row * c + start..row * c + start + len],
                            );
                        }
                    });
                }
            }
            Op::Sum => {
                if needs(0) {
                    acc(0, &mut |d| d.iter_mut().for_each(|d| *d += g[0]));
                }
            }
            Op::Mse => {
                let (p, t) = (val(0), val(1));
                let s = 2.0 * g[0] / p.len() as f64;
                if needs(0) {
                    acc(0, &mut |d| {
                        for ((d, p), t) in d.iter_mut().zip(p).zip(t) {
                            *d += s * (p - t);
                        }
                    });
                }
                if needs(1) {
                    acc(1, &mut |d| {
                        for ((d, p), t) in d.iter_mut().zip(p).zip(t) {
                            *d -= s * (p - t);
                        }
                    });
                }
            }
            Op::CrossEntropy(class) => {
                if needs(0) {
                    let probs = &node.saved;
                    acc(0, &mut |d| {
                        for (j, (d, pj)) in d.iter_mut().zip(probs).enumerate() {
                            let target = if j == *class { 1.0 } else { 0.0 };
                            *d += g[0] * (pj - target);
                        }
                    });
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn matmul(a: &[f64], b: &[f64], n: usize, p: usize, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * q];
    for i in 0..n {
        let row = &mut out[i * q..(i + 1) * q];
        for k in 0..p {
            axpy(a[i * p + k], &b[k * q..(k + 1) * q], row);
        }
    }
    out
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
