use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{ParamSet, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Patches per batch.
    pub batch_size: usize,
    /// Epochs for stage one and for the stage-two local network.
    pub epochs_local: usize,
    /// Epochs for the stage-two global network.
    pub epochs_global: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
            epochs_local: 10,
            epochs_global: 150,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("eps and batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    optimizer: String,
    step: u64,
    target: String,
}

/// Adam with bias-corrected moments, one pair of moment tensors per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: &OptimConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { lr: cfg.learning_rate, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, t: 0, m: zeros.clone(), v: zeros }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::invalid("gradient count does not match the optimizer state"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::invalid("gradient shape does not match its parameter"));
            }
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moments as a parameter container tied to the network they optimize.
    pub fn to_param_set(&self, params: &ParamSet) -> ParamSet {
        let header = AdamHeader { optimizer: "adam".into(), step: self.t, target: params.spec_hash().to_string() };
        let mut set = ParamSet::new(&header, 0);
        for ((name, m), v) in params.names().iter().zip(&self.m).zip(&self.v) {
            set.push(format!("m.{name}"), m.clone());
            set.push(format!("v.{name}"), v.clone());
        }
        set
    }

    pub fn from_param_set(cfg: &OptimConfig, params: &ParamSet, state: &ParamSet) -> Result<Self> {
        let header: AdamHeader = serde_json::from_value(state.spec_json().clone())?;
        if header.target != params.spec_hash() {
            return Err(Error::SpecHashMismatch { expected: params.spec_hash().to_string(), found: header.target });
        }
        let mut adam = Self::new(cfg, params);
        if state.len() != 2 * params.len() {
            return Err(Error::invalid("optimizer state does not match the network"));
        }
        for (i, pair) in state.tensors().chunks_exact(2).enumerate() {
            if pair[0].shape() != adam.m[i].shape() || pair[1].shape() != adam.v[i].shape() {
                return Err(Error::invalid("optimizer state shape does not match the network"));
            }
            adam.m[i] = pair[0].clone();
            adam.v[i] = pair[1].clone();
        }
        adam.t = header.step;
        Ok(adam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Generator, GeneratorSpec, Network};

    fn tiny() -> Generator {
        Generator::new(GeneratorSpec { stem_width: 2, stages: vec![2], ..Default::default() }, 1).unwrap()
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut net = tiny();
        let before = net.params().clone();
        let cfg = OptimConfig { learning_rate: 0.0, ..Default::default() };
        let mut adam = Adam::new(&cfg, net.params());
        let grads: Vec<Tensor> = before.tensors().iter().map(|t| t.map(|v| v + 1.0)).collect();
        adam.step(net.params_mut(), &grads).unwrap();
        assert_eq!(net.params(), &before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut net = tiny();
        let before = net.params().clone();
        let cfg = OptimConfig::default();
        let mut adam = Adam::new(&cfg, net.params());
        let grads: Vec<Tensor> = before.tensors().iter().map(|t| Tensor::full(t.shape(), -0.5)).collect();
        adam.step(net.params_mut(), &grads).unwrap();
        for (a, b) in net.params().tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y - 2e-4).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn state_round_trip() {
        let mut net = tiny();
        let cfg = OptimConfig::default();
        let mut adam = Adam::new(&cfg, net.params());
        let grads: Vec<Tensor> = net.params().tensors().iter().map(|t| t.map(|v| v * 0.3)).collect();
        adam.step(net.params_mut(), &grads).unwrap();
        let set = adam.to_param_set(net.params());
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let back = Adam::from_param_set(&cfg, net.params(), &ParamSet::read_from(&buf[..]).unwrap()).unwrap();
        assert_eq!(back, adam);
        let other = Generator::new(GeneratorSpec::default(), 1).unwrap();
        assert!(Adam::from_param_set(&cfg, other.params(), &set).is_err());
    }
}
