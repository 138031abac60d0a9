//! A recording tape for reverse-mode differentiation.
//!
//! Every backward rule is written in terms of the same recorded ops, so a
//! gradient is itself a node on the tape and can be differentiated again. The
//! gradient penalty relies on this: it needs the parameter gradient of a loss
//! built from an input gradient.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{self, ConvGeom, Shape, Tensor};
use crate::error::{Error, Result};

static NEXT_GRAPH: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    graph: u64,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv { x: usize, w: usize, geom: ConvGeom },
    ConvInputGrad { g: usize, w: usize, geom: ConvGeom },
    ConvWeightGrad { x: usize, g: usize, geom: ConvGeom },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f32),
    AddScalar(usize),
    Sigmoid(usize),
    Log(usize),
    Sqrt(usize),
    Recip(usize),
    SumTo(usize),
    Broadcast(usize, Shape),
    Upsample2(usize),
    SumPool2(usize),
    Concat(usize, usize),
    Slice { x: usize, start: usize, len: usize },
    PadChannels { x: usize, before: usize },
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv { x, w, .. } => vec![x, w],
            Op::ConvInputGrad { g, w, .. } => vec![g, w],
            Op::ConvWeightGrad { x, g, .. } => vec![x, g],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Concat(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::SumTo(a)
            | Op::Broadcast(a, _)
            | Op::Upsample2(a)
            | Op::SumPool2(a)
            | Op::Slice { x: a, .. }
            | Op::PadChannels { x: a, .. } => vec![a],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { id: NEXT_GRAPH.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.graph, self.id, "variable belongs to a different graph");
        v.idx
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var { idx: self.nodes.len() - 1, graph: self.id }
    }

    /// Records a tensor with no inputs. Parameters, data and constants are all leaves.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }

    /// A copy of `v` that gradients do not flow through.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    pub fn conv(&mut self, x: Var, w: Var, geom: ConvGeom) -> Var {
        let (xi, wi) = (self.idx(x), self.idx(w));
        let value = tensor::conv2d(&self.nodes[xi].value, &self.nodes[wi].value, geom);
        self.push(value, Op::Conv { x: xi, w: wi, geom })
    }

    fn conv_input_grad(&mut self, g: Var, w: Var, geom: ConvGeom, in_hw: (usize, usize)) -> Var {
        let (gi, wi) = (self.idx(g), self.idx(w));
        let value = tensor::conv2d_input_grad(&self.nodes[gi].value, &self.nodes[wi].value, geom, in_hw);
        self.push(value, Op::ConvInputGrad { g: gi, w: wi, geom })
    }

    fn conv_weight_grad(&mut self, x: Var, g: Var, geom: ConvGeom, kernel: usize) -> Var {
        let (xi, gi) = (self.idx(x), self.idx(g));
        let value = tensor::conv2d_weight_grad(&self.nodes[xi].value, &self.nodes[gi].value, geom, kernel);
        self.push(value, Op::ConvWeightGrad { x: xi, g: gi, geom })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32, op: fn(usize, usize) -> Op) -> Var {
        let (ai, bi) = (self.idx(a), self.idx(b));
        let value = self.nodes[ai].value.zip_map(&self.nodes[bi].value, f);
        self.push(value, op(ai, bi))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let i = self.idx(a);
        self.unary(a, |x| x * s, Op::Scale(i, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f32) -> Var {
        let i = self.idx(a);
        self.unary(a, |x| x + s, Op::AddScalar(i))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(i))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        self.unary(a, f32::ln, Op::Log(i))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        self.unary(a, f32::sqrt, Op::Sqrt(i))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        self.unary(a, |x| 1.0 / x, Op::Recip(i))
    }

    /// Sums away every axis whose `keep` flag is false, leaving it with size 1.
    pub fn sum_to(&mut self, a: Var, keep: [bool; 4]) -> Var {
        let i = self.idx(a);
        let value = tensor::sum_to(&self.nodes[i].value, keep);
        self.push(value, Op::SumTo(i))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.sum_to(a, [false; 4])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f32;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn broadcast(&mut self, a: Var, shape: Shape) -> Var {
        let i = self.idx(a);
        if self.nodes[i].value.shape() == shape {
            return a;
        }
        let value = tensor::broadcast(&self.nodes[i].value, shape);
        self.push(value, Op::Broadcast(i, shape))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let value = tensor::upsample2(&self.nodes[i].value);
        self.push(value, Op::Upsample2(i))
    }

    fn sum_pool2(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let value = tensor::sum_pool2(&self.nodes[i].value);
        self.push(value, Op::SumPool2(i))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.idx(a), self.idx(b));
        let value = tensor::concat_channels(&self.nodes[ai].value, &self.nodes[bi].value);
        self.push(value, Op::Concat(ai, bi))
    }

    pub fn slice_channels(&mut self, a: Var, start: usize, len: usize) -> Var {
        let i = self.idx(a);
        let value = tensor::slice_channels(&self.nodes[i].value, start, len);
        self.push(value, Op::Slice { x: i, start, len })
    }

    fn pad_channels(&mut self, a: Var, before: usize, after: usize) -> Var {
        let i = self.idx(a);
        let value = tensor::pad_channels(&self.nodes[i].value, before, after);
        self.push(value, Op::PadChannels { x: i, before })
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let c = self.leaf(c);
        self.mul(a, c)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f32) -> Var {
        let mask = self.value(a).map(|v| if v > 0.0 { 1.0 } else { slope });
        self.mul_const(a, mask)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    /// Clamps to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f32, hi: f32) -> Var {
        let v = self.value(a);
        let pass = v.map(|x| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 });
        let fill = v.map(|x| if x < lo { lo } else if x > hi { hi } else { 0.0 });
        let kept = self.mul_const(a, pass);
        let fill = self.leaf(fill);
        self.add(kept, fill)
    }

    /// Reverse-mode gradient of a one-element `y` with respect to each of `wrt`.
    ///
    /// Variables that `y` does not depend on get a zero gradient.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(y).numel() != 1 {
            return Err(Error::invalid(format!("grad needs a scalar output, got {:?}", self.shape(y))));
        }
        let seed = self.leaf(Tensor::full(self.shape(y), 1.0));
        self.vjp(y, seed, wrt)
    }

    /// Vector-Jacobian product: pulls `upstream` (shaped like `y`) back to `wrt`.
    pub fn vjp(&mut self, y: Var, upstream: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let yi = self.idx(y);
        if self.shape(upstream) != self.shape(y) {
            return Err(Error::invalid(format!(
                "upstream gradient {:?} does not match output {:?}",
                self.shape(upstream),
                self.shape(y)
            )));
        }
        let mut needed = vec![false; yi + 1];
        for &w in wrt {
            let wi = self.idx(w);
            if wi <= yi {
                needed[wi] = true;
            }
        }
        for i in 0..=yi {
            if !needed[i] && self.nodes[i].op.inputs().iter().any(|&j| needed[j]) {
                needed[i] = true;
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; yi + 1];
        grads[yi] = Some(upstream);
        for i in (0..=yi).rev() {
            let Some(g) = grads[i] else { continue };
            if !needed[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (j, gj) in self.backward_rule(i, &op, g, &needed) {
                grads[j] = Some(match grads[j] {
                    Some(prev) => self.add(prev, gj),
                    None => gj,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match grads.get(w.idx).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Tensor::zeros(self.shape(w));
                    self.leaf(zeros)
                }
            })
            .collect())
    }

    fn var(&self, idx: usize) -> Var {
        Var { idx, graph: self.id }
    }

    fn backward_rule(&mut self, i: usize, op: &Op, g: Var, needed: &[bool]) -> Vec<(usize, Var)> {
        let mut out = Vec::new();
        let this = self.var(i);
        match *op {
            Op::Leaf => {}
            Op::Conv { x, w, geom } => {
                if needed[x] {
                    let [_, _, h, wd] = self.nodes[x].value.shape();
                    out.push((x, self.conv_input_grad(g, self.var(w), geom, (h, wd))));
                }
                if needed[w] {
                    let k = self.nodes[w].value.shape()[2];
                    out.push((w, self.conv_weight_grad(self.var(x), g, geom, k)));
                }
            }
            Op::ConvInputGrad { g: gg, w, geom } => {
                if needed[gg] {
                    out.push((gg, self.conv(g, self.var(w), geom)));
                }
                if needed[w] {
                    let k = self.nodes[w].value.shape()[2];
                    out.push((w, self.conv_weight_grad(g, self.var(gg), geom, k)));
                }
            }
            Op::ConvWeightGrad { x, g: gg, geom } => {
                if needed[x] {
                    let [_, _, h, wd] = self.nodes[x].value.shape();
                    out.push((x, self.conv_input_grad(self.var(gg), g, geom, (h, wd))));
                }
                if needed[gg] {
                    out.push((gg, self.conv(self.var(x), g, geom)));
                }
            }
            Op::Add(a, b) => {
                out.push((a, g));
                out.push((b, g));
            }
            Op::Sub(a, b) => {
                out.push((a, g));
                if needed[b] {
                    out.push((b, self.scale(g, -1.0)));
                }
            }
            Op::Mul(a, b) => {
                if needed[a] {
                    out.push((a, self.mul(g, self.var(b))));
                }
                if needed[b] {
                    out.push((b, self.mul(g, self.var(a))));
                }
            }
            Op::Scale(a, s) => out.push((a, self.scale(g, s))),
            Op::AddScalar(a) => out.push((a, g)),
            Op::Sigmoid(a) => {
                let neg = self.scale(this, -1.0);
                let one_minus = self.add_scalar(neg, 1.0);
                let d = self.mul(this, one_minus);
                out.push((a, self.mul(g, d)));
            }
            Op::Log(a) => {
                let r = self.recip(self.var(a));
                out.push((a, self.mul(g, r)));
            }
            Op::Sqrt(a) => {
                let r = self.recip(this);
                let half = self.scale(r, 0.5);
                out.push((a, self.mul(g, half)));
            }
            Op::Recip(a) => {
                let sq = self.mul(this, this);
                let neg = self.scale(sq, -1.0);
                out.push((a, self.mul(g, neg)));
            }
            Op::SumTo(a) => {
                let shape = self.nodes[a].value.shape();
                out.push((a, self.broadcast(g, shape)));
            }
            Op::Broadcast(a, shape) => {
                let from = self.nodes[a].value.shape();
                let keep = [0, 1, 2, 3].map(|d| from[d] == shape[d]);
                out.push((a, self.sum_to(g, keep)));
            }
            Op::Upsample2(a) => out.push((a, self.sum_pool2(g))),
            Op::SumPool2(a) => out.push((a, self.upsample2(g))),
            Op::Concat(a, b) => {
                let ca = self.nodes[a].value.shape()[1];
                let cb = self.nodes[b].value.shape()[1];
                if needed[a] {
                    out.push((a, self.slice_channels(g, 0, ca)));
                }
                if needed[b] {
                    out.push((b, self.slice_channels(g, ca, cb)));
                }
            }
            Op::Slice { x, start, len } => {
                let c = self.nodes[x].value.shape()[1];
                out.push((x, self.pad_channels(g, start, c - start - len)));
            }
            Op::PadChannels { x, before } => {
                let c = self.nodes[x].value.shape()[1];
                out.push((x, self.slice_channels(g, before, c)));
            }
        }
        out.retain(|&(j, _)| needed[j]);
        out
    }
}
