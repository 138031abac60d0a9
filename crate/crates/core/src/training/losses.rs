//! Adversarial, penalty and cross-entropy objectives, recorded on a [`Graph`].
//!
//! Critics are passed as closures `(graph, candidate, condition) -> score map`
//! so toy critics can stand in for a [`Discriminator`](crate::nets::Discriminator).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{Graph, Tensor, Var};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f32 = 1e-7;

/// Added under the square root of the gradient norm so its derivative stays
/// finite when the critic is flat.
const NORM_EPS: f32 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the cross-entropy term in the generator loss.
    pub lambda: f32,
    /// Gradient-penalty coefficient in the critic loss.
    pub alpha: f32,
    /// Use `+E[D(G(x), x)]` in the generator loss instead of the usual negation.
    pub paper_sign: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 50.0, alpha: 10.0, paper_sign: false }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::invalid("lambda and alpha must be non-negative"));
        }
        Ok(())
    }
}

/// `-mean(q ln p + (1 - q) ln(1 - p))` with `p` clamped away from 0 and 1.
pub fn bce_loss(g: &mut Graph, p: Var, q: Var) -> Result<Var> {
    if g.shape(p) != g.shape(q) {
        return Err(Error::invalid(format!("bce shapes {:?} and {:?} differ", g.shape(p), g.shape(q))));
    }
    let p = g.clamp(p, BCE_EPS, 1.0 - BCE_EPS);
    let log_p = g.ln(p);
    let neg_p = g.scale(p, -1.0);
    let one_minus_p = g.add_scalar(neg_p, 1.0);
    let log_1p = g.ln(one_minus_p);
    let neg_q = g.scale(q, -1.0);
    let one_minus_q = g.add_scalar(neg_q, 1.0);
    let a = g.mul(q, log_p);
    let b = g.mul(one_minus_q, log_1p);
    let sum = g.add(a, b);
    let mean = g.mean(sum);
    Ok(g.scale(mean, -1.0))
}

/// The value of [`bce_loss`] evaluated in `f64`, for reporting.
pub fn bce(p: &Tensor, q: &Tensor) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::invalid(format!("bce shapes {:?} and {:?} differ", p.shape(), q.shape())));
    }
    let eps = BCE_EPS as f64;
    let sum: f64 = p
        .data()
        .iter()
        .zip(q.data())
        .map(|(&p, &q)| {
            let (p, q) = ((p as f64).clamp(eps, 1.0 - eps), q as f64);
            q * p.ln() + (1.0 - q) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / p.numel() as f64)
}

/// One interpolation weight per sample, uniform on `[0, 1)`.
pub fn sample_interpolation(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen::<f32>()).collect()
}

fn per_sample_constant(shape: [usize; 4], values: &[f32]) -> Tensor {
    let per = shape[1] * shape[2] * shape[3];
    let data = values.iter().flat_map(|&v| std::iter::repeat(v).take(per)).collect();
    Tensor::from_vec(shape, data).expect("shape")
}

/// Mean over samples of `(||grad_y sum D(y, cond)||_2 - 1)^2` at
/// `y = u real + (1 - u) fake`, before scaling by alpha.
pub fn gradient_penalty<C>(
    g: &mut Graph,
    critic: &C,
    real: &Tensor,
    fake: &Tensor,
    condition: Var,
    u: &[f32],
) -> Result<Var>
where
    C: Fn(&mut Graph, Var, Var) -> Result<Var>,
{
    let shape = real.shape();
    if fake.shape() != shape || u.len() != shape[0] {
        return Err(Error::invalid("penalty needs real, fake and weights for the same batch"));
    }
    let w = per_sample_constant(shape, u);
    let mixed = real.zip_map(&w, |r, w| r * w).zip_map(&fake.zip_map(&w, |f, w| f * (1.0 - w)), |a, b| a + b);
    let y_hat = g.leaf(mixed);
    let scores = critic(g, y_hat, condition)?;
    let total = g.sum(scores);
    let grad = g.grad(total, &[y_hat])?[0];
    let sq = g.mul(grad, grad);
    let per_sample = g.sum_to(sq, [true, false, false, false]);
    let per_sample = g.add_scalar(per_sample, NORM_EPS);
    let norm = g.sqrt(per_sample);
    let dev = g.add_scalar(norm, -1.0);
    let dev2 = g.mul(dev, dev);
    Ok(g.mean(dev2))
}

#[derive(Clone, Copy, Debug)]
pub struct CriticTerms {
    pub total: Var,
    /// `-mean D(real) + mean D(fake)`.
    pub adversarial: Var,
    /// The unscaled gradient penalty.
    pub penalty: Var,
}

/// `-mean D(real, cond) + mean D(fake, cond) + alpha * penalty`. `fake` is a
/// plain tensor, so no gradient reaches the generator that produced it.
pub fn discriminator_loss<C>(
    g: &mut Graph,
    critic: &C,
    real: &Tensor,
    fake: &Tensor,
    condition: &Tensor,
    u: &[f32],
    cfg: &LossConfig,
) -> Result<CriticTerms>
where
    C: Fn(&mut Graph, Var, Var) -> Result<Var>,
{
    let cond = g.leaf(condition.clone());
    let real_v = g.leaf(real.clone());
    let fake_v = g.leaf(fake.clone());
    let real_score = critic(g, real_v, cond)?;
    let fake_score = critic(g, fake_v, cond)?;
    let real_mean = g.mean(real_score);
    let fake_mean = g.mean(fake_score);
    let adversarial = g.sub(fake_mean, real_mean);
    let penalty = gradient_penalty(g, critic, real, fake, cond, u)?;
    let scaled = g.scale(penalty, cfg.alpha);
    let total = g.add(adversarial, scaled);
    Ok(CriticTerms { total, adversarial, penalty })
}

#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub total: Var,
    /// `-mean D(G(x), x)`, or its negation under the printed sign.
    pub adversarial: Var,
    /// The unweighted cross-entropy.
    pub bce: Var,
}

/// `-mean D(fake, cond) + lambda * bce(fake, target)`, where `fake` is the
/// generator output still attached to its parameters.
pub fn generator_loss<C>(
    g: &mut Graph,
    critic: &C,
    fake: Var,
    condition: Var,
    target: Var,
    cfg: &LossConfig,
) -> Result<GeneratorTerms>
where
    C: Fn(&mut Graph, Var, Var) -> Result<Var>,
{
    let score = critic(g, fake, condition)?;
    let mean = g.mean(score);
    let adversarial = if cfg.paper_sign { mean } else { g.scale(mean, -1.0) };
    let bce = bce_loss(g, fake, target)?;
    let weighted = g.scale(bce, cfg.lambda);
    let total = g.add(adversarial, weighted);
    Ok(GeneratorTerms { total, adversarial, bce })
}
