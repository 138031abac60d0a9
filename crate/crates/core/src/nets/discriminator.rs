//! Conditional patch critic: unbounded scores, one per receptive-field patch.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{self, Cursor, Init, LEAKY_SLOPE};
use super::params::{spec_hash, ParamSet};
use super::tensor::{ConvGeom, Tensor};
use super::Network;
use crate::error::{Error, Result};

const DOWN: ConvGeom = ConvGeom { stride: 2, pad: 1 };
const DOWN_KERNEL: usize = 4;
const OUT: ConvGeom = ConvGeom { stride: 1, pad: 1 };
const OUT_KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    /// Condition channels plus the one candidate channel.
    pub in_channels: usize,
    /// Widths of the stride-2 4x4 stages.
    pub widths: Vec<usize>,
}

impl DiscriminatorSpec {
    /// Compact critic for a condition of `cond_channels`.
    pub fn compact(cond_channels: usize) -> Self {
        Self { in_channels: cond_channels + 1, widths: vec![16, 32, 64] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 2 {
            return Err(Error::invalid("critic needs condition and candidate channels"));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::invalid("critic needs at least one stage of positive width"));
        }
        Ok(())
    }

    /// Side in input pixels of the patch seen by one output score.
    pub fn receptive_field(&self) -> usize {
        let (mut field, mut jump) = (1, 1);
        for _ in &self.widths {
            field += (DOWN_KERNEL - 1) * jump;
            jump *= DOWN.stride;
        }
        field + (OUT_KERNEL - 1) * jump
    }

    /// Score map size for a `w x h` input.
    pub fn output_size(&self, w: usize, h: usize) -> (usize, usize) {
        let (mut w, mut h) = (w, h);
        for _ in &self.widths {
            w = DOWN.out_len(w, DOWN_KERNEL);
            h = DOWN.out_len(h, DOWN_KERNEL);
        }
        (OUT.out_len(w, OUT_KERNEL), OUT.out_len(h, OUT_KERNEL))
    }
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self::compact(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    params: ParamSet,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Init::new(ParamSet::new(&spec, seed));
        let mut cin = spec.in_channels;
        for (i, &w) in spec.widths.iter().enumerate() {
            init.conv(&format!("down{}", i + 1), cin, w, DOWN_KERNEL, true);
            cin = w;
        }
        init.conv("score", cin, 1, OUT_KERNEL, true);
        Ok(Self { spec, params: init.set })
    }

    pub fn from_params(spec: DiscriminatorSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        params.check_hash(&spec_hash(&spec))?;
        let fresh = Self::new(spec.clone(), params.seed())?;
        if fresh.params.names() != params.names()
            || fresh.params.tensors().iter().zip(params.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::invalid("parameter layout does not match the critic spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let params = ParamSet::load(path)?;
        let spec: DiscriminatorSpec = serde_json::from_value(params.spec_json().clone())?;
        Self::from_params(spec, params)
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    /// Records the critic on `candidate` (one channel) given `condition`.
    pub fn forward(&self, g: &mut Graph, params: &[Var], candidate: Var, condition: Var) -> Result<Var> {
        let [cn, cc, ch, cw] = g.shape(candidate);
        let [xn, xc, xh, xw] = g.shape(condition);
        if (cn, ch, cw) != (xn, xh, xw) {
            return Err(Error::DimensionMismatch { left: (cw, ch), right: (xw, xh) });
        }
        if cc != 1 || xc + 1 != self.spec.in_channels {
            return Err(Error::ChannelMismatch { expected: self.spec.in_channels, actual: xc + cc });
        }
        let (ow, oh) = self.spec.output_size(cw, ch);
        if ow == 0 || oh == 0 {
            return Err(Error::invalid(format!("critic input {cw}x{ch} is too small")));
        }
        let mut p = Cursor::new(params);
        let mut h = g.concat(condition, candidate);
        for _ in &self.spec.widths {
            h = layers::conv(g, &mut p, h, DOWN, true);
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
        let score = layers::conv(g, &mut p, h, OUT, true);
        debug_assert!(p.finished());
        Ok(score)
    }

    /// Score maps for a batch, without recording gradients for later use.
    pub fn score(&self, candidate: &Tensor, condition: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let y = g.leaf(candidate.clone());
        let x = g.leaf(condition.clone());
        let s = self.forward(&mut g, &vars, y, x)?;
        Ok(g.value(s).clone())
    }
}

impl Network for Discriminator {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn receptive_field_of_default() {
        // 4 -> 4+3*2 -> 10+3*4 -> 22+2*8
        assert_eq!(DiscriminatorSpec::default().receptive_field(), 38);
        assert_eq!(DiscriminatorSpec::default().output_size(64, 64), (8, 8));
    }

    #[test]
    fn receptive_field_matches_probe() {
        // Perturbing one input pixel changes exactly the scores whose window covers it.
        let spec = DiscriminatorSpec { in_channels: 2, widths: vec![4, 4] };
        let d = Discriminator::new(spec.clone(), 1).unwrap();
        let cond = random([1, 1, 64, 64], 2);
        let cand = random([1, 1, 64, 64], 3);
        let base = d.score(&cand, &cond).unwrap();
        let mut bumped = cand.clone();
        bumped.data_mut()[32 * 64 + 32] += 1.0;
        let changed = d.score(&bumped, &cond).unwrap();
        let (ow, _) = spec.output_size(64, 64);
        let cols: Vec<usize> = (0..ow)
            .filter(|&x| (base.data()[8 * ow + x] - changed.data()[8 * ow + x]).abs() > 0.0)
            .collect();
        // Output column x sees input columns [4x - 7, 4x - 7 + rf).
        let rf = spec.receptive_field();
        assert_eq!(rf, 18);
        let expected: Vec<usize> = (0..ow).filter(|&x| 4 * x + rf > 39 && 4 * x <= 39).collect();
        assert_eq!(cols, expected);
    }

    #[test]
    fn permuting_the_batch_permutes_scores() {
        let d = Discriminator::new(DiscriminatorSpec::compact(3), 4).unwrap();
        let cond = random([3, 3, 32, 32], 5);
        let cand = random([3, 1, 32, 32], 6);
        let s = d.score(&cand, &cond).unwrap();
        assert!(s.is_finite());
        let order = [2, 0, 1];
        let perm = |t: &Tensor| Tensor::stack(&order.map(|i| t.sample(i))).unwrap();
        let sp = d.score(&perm(&cand), &perm(&cond)).unwrap();
        assert_eq!(sp, perm(&s));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let d = Discriminator::new(DiscriminatorSpec::default(), 0).unwrap();
        assert!(d.score(&random([1, 1, 32, 32], 1), &random([1, 1, 16, 32], 2)).is_err());
        assert!(d.score(&random([1, 1, 32, 32], 1), &random([1, 3, 32, 32], 2)).is_err());
    }
}
