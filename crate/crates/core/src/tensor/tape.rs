//! Reverse-mode gradient tape over the kernels in [`super::ops`].
//!
//! A tape is built per forward pass; every op records its inputs and caches
//! the output value. [`Tape::backward`] walks the record in reverse and
//! returns one gradient per node that requires one.

use super::ops;
use super::TensorF;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    MatMul { a: Var, b: Var },
    Transpose { x: Var },
    Conv1d { x: Var, k: Var, b: Var, stride: usize, pad: usize },
    AdaIn { content: Var, style: Var, eps: f64 },
    Pool1d { x: Var, out_len: usize },
    Concat { a: Var, b: Var, axis: usize },
    /// `x + alpha * y`, `alpha` a one-element tensor
    ScaledAdd { x: Var, y: Var, alpha: Var },
    Add { a: Var, b: Var },
    Gelu { x: Var },
    MeanRows { x: Var },
    AddRow { x: Var, row: Var },
    RepeatRows { x: Var },
    Gather { table: Var, ids: Vec<usize> },
    SoftmaxXent { logits: Var, targets: Vec<usize> },
    WeightedSum { x: Var, weights: TensorF },
}

#[derive(Debug)]
struct Node {
    value: TensorF,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<TensorF>>,
}

impl Grads {
    /// Gradient of the loss w.r.t. `v`. Leaves that require a gradient but do
    /// not influence the loss get a zero tensor of their own shape.
    pub fn get(&self, v: Var) -> Option<&TensorF> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<TensorF> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that receives a gradient (a parameter).
    pub fn param(&mut self, value: TensorF) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf without gradient (data).
    pub fn constant(&mut self, value: TensorF) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: TensorF, needs_grad: bool) -> Var {
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn value(&self, v: Var) -> &TensorF {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: TensorF, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::linear_forward(self.value(x), self.value(w), self.value(b))?;
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::Linear { x, w, b }, ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b }, ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = ops::transpose(self.value(x))?;
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::Transpose { x }, ng))
    }

    pub fn conv1d(&mut self, x: Var, k: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let out = ops::conv1d_forward(self.value(x), self.value(k), self.value(b), stride, pad)?;
        let ng = self.ng(&[x, k, b]);
        Ok(self.push(out, Op::Conv1d { x, k, b, stride, pad }, ng))
    }

    pub fn adain(&mut self, content: Var, style: Var, eps: f64) -> Result<Var> {
        let out = ops::adain(self.value(content), self.value(style), eps)?;
        let ng = self.ng(&[content, style]);
        Ok(self.push(out, Op::AdaIn { content, style, eps }, ng))
    }

    pub fn pool1d(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let out = ops::adaptive_avg_pool1d(self.value(x), out_len)?;
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::Pool1d { x, out_len }, ng))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let out = ops::concat2(self.value(a), self.value(b), axis)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Concat { a, b, axis }, ng))
    }

    pub fn scaled_add(&mut self, x: Var, y: Var, alpha: Var) -> Result<Var> {
        let a = self.value(alpha).item()?;
        let out = if a == 0.0 {
            if self.value(x).shape() != self.value(y).shape() {
                return Err(Error::dim("scaled_add", self.value(x).shape(), self.value(y).shape()));
            }
            // keeps x bit-exact, including signed zeros
            self.value(x).clone()
        } else {
            self.value(x).add(&self.value(y).scale(a))?
        };
        let ng = self.ng(&[x, y, alpha]);
        Ok(self.push(out, Op::ScaledAdd { x, y, alpha }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, ng))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(ops::gelu);
        let ng = self.ng(&[x]);
        self.push(out, Op::Gelu { x }, ng)
    }

    /// `[n, d] -> [1, d]`
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        let xd = self.value(x).data();
        let mut out = vec![0.0; d];
        for r in 0..n {
            for (o, v) in out.iter_mut().zip(&xd[r * d..(r + 1) * d]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        let ng = self.ng(&[x]);
        Ok(self.push(TensorF::new(vec![1, d], out)?, Op::MeanRows { x }, ng))
    }

    /// `x: [n, d] + row: [1, d]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        if self.value(row).shape() != [1, d] {
            return Err(Error::dim("add_row", self.value(x).shape(), self.value(row).shape()));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for chunk in out.chunks_mut(d) {
            for (o, v) in chunk.iter_mut().zip(&r) {
                *o += v;
            }
        }
        let ng = self.ng(&[x, row]);
        Ok(self.push(TensorF::new(vec![n, d], out)?, Op::AddRow { x, row }, ng))
    }

    /// `[1, d] -> [times, d]`
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let (one, d) = self.value(x).dims2()?;
        if one != 1 || times == 0 {
            return Err(Error::Contract(format!("repeat_rows needs [1, d] and times >= 1, got {:?}", self.value(x).shape())));
        }
        let row = self.value(x).data().to_vec();
        let data = row.iter().copied().cycle().take(times * d).collect();
        let ng = self.ng(&[x]);
        Ok(self.push(TensorF::new(vec![times, d], data)?, Op::RepeatRows { x }, ng))
    }

    /// Row lookup `table[ids[i], :]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.value(table).dims2()?;
        if ids.is_empty() {
            return Err(Error::Contract("gather needs at least one id".into()));
        }
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Contract(format!("token id {id} out of range for table of {v}")));
            }
            out.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
        let ng = self.ng(&[table]);
        Ok(self.push(
            TensorF::new(vec![ids.len(), d], out)?,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Mean cross-entropy, a scalar `[1]`.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let loss = ops::softmax_xent(self.value(logits), targets)?;
        let ng = self.ng(&[logits]);
        Ok(self.push(
            TensorF::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
            },
            ng,
        ))
    }

    /// `sum(x * weights)` with constant weights, a scalar `[1]`.
    pub fn weighted_sum(&mut self, x: Var, weights: TensorF) -> Result<Var> {
        if self.value(x).shape() != weights.shape() {
            return Err(Error::dim("weighted_sum", self.value(x).shape(), weights.shape()));
        }
        let s = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let ng = self.ng(&[x]);
        Ok(self.push(TensorF::scalar(s), Op::WeightedSum { x, weights }, ng))
    }

    /// Backpropagate from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<TensorF>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(TensorF::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            let mut acc = |v: Var, delta: TensorF| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Linear { x, w, .. } | Op::MatMul { a: x, b: w } => {
                    let (gx, gw, gb) = ops::linear_backward(self.value(*x), self.value(*w), &g);
                    acc(*x, gx);
                    acc(*w, gw);
                    if let Op::Linear { b, .. } = &node.op {
                        acc(*b, gb);
                    }
                }
                Op::Transpose { x } => acc(*x, ops::transpose(&g)?),
                Op::Conv1d { x, k, b, stride, pad } => {
                    let (gx, gk, gb) = ops::conv1d_backward(self.value(*x), self.value(*k), *stride, *pad, &g);
                    acc(*x, gx);
                    acc(*k, gk);
                    acc(*b, gb);
                }
                Op::AdaIn { content, style, eps } => {
                    let (gc, gs) = ops::adain_backward(self.value(*content), self.value(*style), *eps, &g);
                    acc(*content, gc);
                    acc(*style, gs);
                }
                Op::Pool1d { x, out_len } => {
                    acc(*x, ops::adaptive_avg_pool1d_backward(self.value(*x).shape(), *out_len, &g));
                }
                Op::Concat { a, b, axis } => {
                    let (ga, gb) = ops::concat2_backward(self.value(*a).shape(), self.value(*b).shape(), *axis, &g);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::ScaledAdd { x, y, alpha } => {
                    let a = self.value(*alpha).data()[0];
                    let galpha: f64 = g.data().iter().zip(self.value(*y).data()).map(|(p, q)| p * q).sum();
                    acc(*y, g.scale(a));
                    acc(*alpha, TensorF::full(self.value(*alpha).shape(), galpha));
                    acc(*x, g);
                }
                Op::Add { a, b } => {
                    acc(*b, g.clone());
                    acc(*a, g);
                }
                Op::Gelu { x } => {
                    let xv = self.value(*x);
                    let data = xv.data().iter().zip(g.data()).map(|(&v, &gv)| gv * ops::gelu_grad(v)).collect();
                    acc(*x, TensorF::new(xv.shape().to_vec(), data)?);
                }
                Op::MeanRows { x } => {
                    let n = self.value(*x).dim(0);
                    let row: Vec<f64> = g.data().iter().map(|v| v / n as f64).collect();
                    let data = row.iter().copied().cycle().take(n * row.len()).collect();
                    acc(*x, TensorF::new(self.value(*x).shape().to_vec(), data)?);
                }
                Op::AddRow { x, row } => {
                    let d = g.dim(1);
                    let mut gr = vec![0.0; d];
                    for chunk in g.data().chunks(d) {
                        for (o, v) in gr.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    acc(*row, TensorF::new(vec![1, d], gr)?);
                    acc(*x, g);
                }
                Op::RepeatRows { x } => {
                    let d = g.dim(1);
                    let mut gr = vec![0.0; d];
                    for chunk in g.data().chunks(d) {
                        for (o, v) in gr.iter_mut().zip(chunk) {
                            *o += v;
                        }
                    }
                    acc(*x, TensorF::new(vec![1, d], gr)?);
                }
                Op::Gather { table, ids } => {
                    let shape = self.value(*table).shape().to_vec();
                    let d = shape[1];
                    let mut gt = TensorF::zeros(&shape);
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g.data()[r * d..(r + 1) * d];
                        for (o, v) in gt.data_mut()[id * d..(id + 1) * d].iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                    acc(*table, gt);
                }
                Op::SoftmaxXent { logits, targets } => {
                    acc(*logits, ops::softmax_xent_backward(self.value(*logits), targets, g.data()[0]));
                }
                Op::WeightedSum { x, weights } => {
                    acc(*x, weights.scale(g.data()[0]));
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.needs_grad && matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(TensorF::zeros(node.value.shape()));
            }
        }
        Ok(Grads { grads })
    }
}
