//! Parameter initialization and the layer blocks shared by both networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{Graph, Var};
use super::params::ParamSet;
use super::tensor::{ConvGeom, Tensor};

const NORM_EPS: f32 = 1e-5;
pub(crate) const LEAKY_SLOPE: f32 = 0.2;

/// Appends freshly initialized parameters to a set in forward order.
pub(crate) struct Init {
    rng: ChaCha8Rng,
    pub(crate) set: ParamSet,
}

impl Init {
    pub(crate) fn new(set: ParamSet) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(set.seed()), set }
    }

    /// He-normal convolution weight `[cout, cin, k, k]`, plus a zero bias when asked.
    pub(crate) fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool) {
        let fan_in = (cin * k * k) as f32;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let data = (0..cout * cin * k * k).map(|_| normal.sample(&mut self.rng)).collect();
        self.set.push(format!("{name}.w"), Tensor::from_vec([cout, cin, k, k], data).expect("shape"));
        if bias {
            self.set.push(format!("{name}.b"), Tensor::zeros([1, cout, 1, 1]));
        }
    }

    pub(crate) fn norm(&mut self, name: &str, c: usize) {
        self.set.push(format!("{name}.gamma"), Tensor::full([1, c, 1, 1], 1.0));
        self.set.push(format!("{name}.beta"), Tensor::zeros([1, c, 1, 1]));
    }
}

/// Hands out bound parameter variables in the order they were created.
pub(crate) struct Cursor<'a> {
    vars: &'a [Var],
    next: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(vars: &'a [Var]) -> Self {
        Self { vars, next: 0 }
    }

    pub(crate) fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }

    pub(crate) fn finished(&self) -> bool {
        self.next == self.vars.len()
    }
}

pub(crate) fn conv(g: &mut Graph, p: &mut Cursor, x: Var, geom: ConvGeom, bias: bool) -> Var {
    let w = p.take();
    let y = g.conv(x, w, geom);
    if !bias {
        return y;
    }
    let b = p.take();
    let shape = g.shape(y);
    let b = g.broadcast(b, shape);
    g.add(y, b)
}

/// Per-sample, per-channel normalization over the spatial axes, then a learned affine.
pub(crate) fn instance_norm(g: &mut Graph, p: &mut Cursor, x: Var) -> Var {
    let shape = g.shape(x);
    let inv_n = 1.0 / (shape[2] * shape[3]) as f32;
    let keep = [true, true, false, false];
    let sum = g.sum_to(x, keep);
    let mean = g.scale(sum, inv_n);
    let mean = g.broadcast(mean, shape);
    let centered = g.sub(x, mean);
    let sq = g.mul(centered, centered);
    let var = g.sum_to(sq, keep);
    let var = g.scale(var, inv_n);
    let var = g.add_scalar(var, NORM_EPS);
    let std = g.sqrt(var);
    let inv = g.recip(std);
    let inv = g.broadcast(inv, shape);
    let normed = g.mul(centered, inv);
    let (gamma, beta) = (p.take(), p.take());
    let gamma = g.broadcast(gamma, shape);
    let beta = g.broadcast(beta, shape);
    let scaled = g.mul(normed, gamma);
    g.add(scaled, beta)
}
