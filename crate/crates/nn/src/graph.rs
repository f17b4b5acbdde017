//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, which is
//! already a topological order. [`Graph::backward`] walks the tape once in
//! reverse, summing gradient contributions into each parent.

use crate::{NnError, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right-hand operand of a binary elementwise op is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `[1, C]` repeated over rows.
    Row,
    /// `[R, 1]` repeated over columns.
    Col,
    /// `[1, 1]`.
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    Slice(Var, usize),
    Transpose(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Clamp(..) => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::Concat(..) => "concat",
            Op::ConcatRows(..) => "concat_rows",
            Op::Slice(..) => "slice",
            Op::Transpose(..) => "transpose",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, `None` if the loss does
    /// not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(NnError::NonFinite(op.name().to_string()));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b, _) => {
                self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
            }
            Op::Concat(parts) | Op::ConcatRows(parts) => {
                parts.iter().any(|p| self.nodes[p.0].requires_grad)
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Clamp(a, ..)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumCols(a)
            | Op::Slice(a, _)
            | Op::Transpose(a) => self.nodes[a.0].requires_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, var: Var) -> (usize, usize) {
        let v = &self.nodes[var.0].value;
        (v.rows(), v.cols())
    }

    fn broadcast_kind(&self, a: Var, b: Var, op: &str) -> Result<Broadcast> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if (ar, ac) == (br, bc) {
            Ok(Broadcast::Same)
        } else if (br, bc) == (1, 1) {
            Ok(Broadcast::Scalar)
        } else if br == 1 && bc == ac {
            Ok(Broadcast::Row)
        } else if bc == 1 && br == ar {
            Ok(Broadcast::Col)
        } else {
            Err(NnError::Shape(format!(
                "{op} [{ar}, {ac}] with [{br}, {bc}]"
            )))
        }
    }

    fn elementwise(&self, a: Var, b: Var, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let (r, c) = (av.rows(), av.cols());
        let ad = av.data();
        let bd = bv.data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                let rhs = match kind {
                    Broadcast::Same => bd[i * c + j],
                    Broadcast::Row => bd[j],
                    Broadcast::Col => bd[i],
                    Broadcast::Scalar => bd[0],
                };
                out.push(f(ad[i * c + j], rhs));
            }
        }
        Tensor::from_rows(r, c, out).expect("elementwise shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        self.push(value, Op::MatMul(a, b))
    }

    /// `a + b`; `b` may be `[1, C]`, `[R, 1]` or `[1, 1]`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "add")?;
        let value = self.elementwise(a, b, kind, |x, y| x + y);
        self.push(value, Op::Add(a, b, kind))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "sub")?;
        let value = self.elementwise(a, b, kind, |x, y| x - y);
        self.push(value, Op::Sub(a, b, kind))
    }

    /// Elementwise product with the same broadcasting rules as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "mul")?;
        let value = self.elementwise(a, b, kind, |x, y| x * y);
        self.push(value, Op::Mul(a, b, kind))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.nodes[a.0].value.map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var> {
        let value = self.nodes[a.0].value.map(|x| x + offset);
        self.push(value, Op::AddScalar(a))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.map(f64::ln);
        self.push(value, Op::Log(a))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.nodes[a.0].value.map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    /// Sum of all elements, `[1, 1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.nodes[a.0].value.sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let n = v.len().max(1) as f64;
        let value = Tensor::scalar(v.sum() / n);
        self.push(value, Op::Mean(a))
    }

    /// Row-wise sum: `[R, C] -> [R, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        let out = (0..r)
            .map(|i| v.data()[i * c..(i + 1) * c].iter().sum())
            .collect();
        let value = Tensor::from_rows(r, 1, out)?;
        self.push(value, Op::SumCols(a))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NnError::Shape("concat of nothing".into()));
        };
        let rows = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return Err(NnError::Shape(format!("concat rows {r} vs {rows}")));
            }
            total += c;
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let value = Tensor::from_rows(rows, total, out)?;
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Row-wise stacking of tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NnError::Shape("concat_rows of nothing".into()));
        };
        let cols = self.dims(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.cols() != cols {
                return Err(NnError::Shape(format!(
                    "concat_rows cols {} vs {cols}",
                    v.cols()
                )));
            }
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        let value = Tensor::from_rows(rows, cols, out)?;
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    /// Columns `start..end`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return Err(NnError::Shape(format!(
                "slice {start}..{end} of {c} columns"
            )));
        }
        let v = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&v.row(i)[start..end]);
        }
        let value = Tensor::from_rows(r, end - start, out)?;
        self.push(value, Op::Slice(a, start))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Reverse pass from a `[1, 1]` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NnError::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lv.rows(), lv.cols(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[idx].as_ref() else {
                continue;
            };
            let contributions = self.local_grads(node, dy)?;
            for (parent, g) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                if !g.is_finite() {
                    return Err(NnError::NonFinite(format!("{} backward", node.op.name())));
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn reduce_broadcast(g: &Tensor, kind: Broadcast, target: &Tensor) -> Tensor {
        let (r, c) = (g.rows(), g.cols());
        match kind {
            Broadcast::Same => g.clone(),
            Broadcast::Scalar => Tensor::scalar(g.sum()),
            Broadcast::Row => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                Tensor::from_rows(1, c, out).expect("row reduce")
            }
            Broadcast::Col => {
                let out = (0..r).map(|i| g.row(i).iter().sum()).collect();
                Tensor::from_rows(target.rows(), 1, out).expect("col reduce")
            }
        }
    }

    fn expand(&self, b: Var, kind: Broadcast, rows: usize, cols: usize) -> Tensor {
        let bv = &self.nodes[b.0].value;
        match kind {
            Broadcast::Same => bv.clone(),
            _ => {
                let bd = bv.data();
                let mut out = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for j in 0..cols {
                        out.push(match kind {
                            Broadcast::Row => bd[j],
                            Broadcast::Col => bd[i],
                            _ => bd[0],
                        });
                    }
                }
                Tensor::from_rows(rows, cols, out).expect("expand")
            }
        }
    }

    fn local_grads(&self, node: &Node, dy: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let y = &node.value;
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let mut v = Vec::with_capacity(2);
                if self.nodes[a.0].requires_grad {
                    v.push((*a, dy.matmul(&bv.transpose())?));
                }
                if self.nodes[b.0].requires_grad {
                    v.push((*b, av.transpose().matmul(dy)?));
                }
                v
            }
            Op::Add(a, b, kind) => {
                let bv = &self.nodes[b.0].value;
                vec![
                    (*a, dy.clone()),
                    (*b, Self::reduce_broadcast(dy, *kind, bv)),
                ]
            }
            Op::Sub(a, b, kind) => {
                let bv = &self.nodes[b.0].value;
                let neg = dy.map(|x| -x);
                vec![
                    (*a, dy.clone()),
                    (*b, Self::reduce_broadcast(&neg, *kind, bv)),
                ]
            }
            Op::Mul(a, b, kind) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let b_full = self.expand(*b, *kind, dy.rows(), dy.cols());
                let da = dy.zip_map(&b_full, |g, x| g * x);
                let db_full = dy.zip_map(av, |g, x| g * x);
                vec![(*a, da), (*b, Self::reduce_broadcast(&db_full, *kind, bv))]
            }
            Op::Scale(a, factor) => vec![(*a, dy.map(|g| g * factor))],
            Op::AddScalar(a) => vec![(*a, dy.clone())],
            Op::Sigmoid(a) => vec![(*a, dy.zip_map(y, |g, s| g * s * (1.0 - s)))],
            Op::Tanh(a) => vec![(*a, dy.zip_map(y, |g, t| g * (1.0 - t * t)))],
            Op::Relu(a) => {
                let x = &self.nodes[a.0].value;
                vec![(*a, dy.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 }))]
            }
            Op::Exp(a) => vec![(*a, dy.zip_map(y, |g, e| g * e))],
            Op::Log(a) => {
                let x = &self.nodes[a.0].value;
                vec![(*a, dy.zip_map(x, |g, x| g / x))]
            }
            Op::Clamp(a, lo, hi) => {
                let x = &self.nodes[a.0].value;
                let (lo, hi) = (*lo, *hi);
                vec![(
                    *a,
                    dy.zip_map(x, |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
                )]
            }
            Op::Sum(a) => {
                let x = &self.nodes[a.0].value;
                vec![(*a, Tensor::filled(x.rows(), x.cols(), dy.item()))]
            }
            Op::Mean(a) => {
                let x = &self.nodes[a.0].value;
                let n = x.len().max(1) as f64;
                vec![(*a, Tensor::filled(x.rows(), x.cols(), dy.item() / n))]
            }
            Op::SumCols(a) => {
                let x = &self.nodes[a.0].value;
                let (r, c) = (x.rows(), x.cols());
                let mut out = Vec::with_capacity(r * c);
                for i in 0..r {
                    out.extend(std::iter::repeat_n(dy.data()[i], c));
                }
                vec![(*a, Tensor::from_rows(r, c, out)?)]
            }
            Op::Concat(parts) => {
                let rows = dy.rows();
                let mut offset = 0;
                let mut v = Vec::with_capacity(parts.len());
                for p in parts {
                    let c = self.nodes[p.0].value.cols();
                    let mut out = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        out.extend_from_slice(&dy.row(i)[offset..offset + c]);
                    }
                    offset += c;
                    v.push((*p, Tensor::from_rows(rows, c, out)?));
                }
                v
            }
            Op::ConcatRows(parts) => {
                let cols = dy.cols();
                let mut offset = 0;
                let mut v = Vec::with_capacity(parts.len());
                for p in parts {
                    let r = self.nodes[p.0].value.rows();
                    let chunk = dy.data()[offset * cols..(offset + r) * cols].to_vec();
                    offset += r;
                    v.push((*p, Tensor::from_rows(r, cols, chunk)?));
                }
                v
            }
            Op::Slice(a, start) => {
                let x = &self.nodes[a.0].value;
                let (r, c) = (x.rows(), x.cols());
                let width = dy.cols();
                let mut out = vec![0.0; r * c];
                for i in 0..r {
                    out[i * c + start..i * c + start + width].copy_from_slice(dy.row(i));
                }
                vec![(*a, Tensor::from_rows(r, c, out)?)]
            }
            Op::Transpose(a) => vec![(*a, dy.transpose())],
        };
        Ok(out)
    }
}
