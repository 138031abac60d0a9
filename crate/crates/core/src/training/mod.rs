//! Adversarial training: objectives, the optimizer, and the stage-one and
//! stage-two loops with checkpointing.

mod losses;
mod optim;
mod stage1;
mod stage2;

pub use losses::{
    bce, bce_loss, discriminator_loss, generator_loss, gradient_penalty, sample_interpolation, CriticTerms,
    GeneratorTerms, LossConfig, BCE_EPS,
};
pub use optim::{Adam, OptimConfig};
pub use stage1::{train_stage1, Stage1Sample, Stage1State, CHANNEL_NAMES};
pub use stage2::{train_stage2, AdversarialPair, Stage2Sample, Stage2State};

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataprep::{AugmentationConfig, ChannelThreshold};
use crate::error::{Error, Result};
use crate::nets::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, Graph, Network, ParamSet, Tensor};

/// Network sizes shared by every generator and critic of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub stem_width: usize,
    pub stages: Vec<usize>,
    pub instance_norm: bool,
    pub critic_widths: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let g = GeneratorSpec::default();
        Self {
            stem_width: g.stem_width,
            stages: g.stages,
            instance_norm: g.instance_norm,
            critic_widths: DiscriminatorSpec::compact(1).widths,
        }
    }
}

impl ArchConfig {
    pub fn generator(&self, in_channels: usize) -> GeneratorSpec {
        GeneratorSpec {
            in_channels,
            stem_width: self.stem_width,
            stages: self.stages.clone(),
            instance_norm: self.instance_norm,
        }
    }

    pub fn critic(&self, cond_channels: usize) -> DiscriminatorSpec {
        DiscriminatorSpec { in_channels: cond_channels + 1, widths: self.critic_widths.clone() }
    }
}

/// Everything that shapes a training run apart from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub optim: OptimConfig,
    pub loss: LossConfig,
    pub channel_threshold: ChannelThreshold,
    /// Side of the square training patches.
    pub patch: usize,
    pub augmentation: AugmentationConfig,
    /// Train only the local stage-two network.
    pub skip_global: bool,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            optim: OptimConfig::default(),
            loss: LossConfig::default(),
            channel_threshold: ChannelThreshold::default(),
            patch: 64,
            augmentation: AugmentationConfig::default(),
            skip_global: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        self.loss.validate()?;
        self.augmentation.validate()?;
        self.arch.generator(1).validate()?;
        self.arch.critic(1).validate()?;
        let m = self.arch.generator(1).side_multiple();
        if self.patch == 0 || self.patch % m != 0 {
            return Err(Error::invalid(format!("patch side {} must be a positive multiple of {m}", self.patch)));
        }
        Ok(())
    }
}

/// Losses of one critic update followed by one generator update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    /// Batch index counted from the start of the loop.
    pub step: usize,
    pub epoch: usize,
    /// Which generator was updated.
    pub net: String,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Unweighted cross-entropy of the generator output before its update.
    pub bce: f64,
    /// Unscaled gradient penalty.
    pub gp: f64,
}

pub const LOSS_CSV_HEADER: &str = "step,epoch,net,l_d,l_g,bce,gp";

pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{LOSS_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{},{},{}", r.step, r.epoch, r.net, r.d_loss, r.g_loss, r.bce, r.gp)?;
    }
    out.flush()?;
    Ok(())
}

/// A network with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainee<N> {
    pub net: N,
    pub opt: Adam,
}

impl<N: Network> Trainee<N> {
    pub fn new(net: N, optim: &OptimConfig) -> Self {
        let opt = Adam::new(optim, net.params());
        Self { net, opt }
    }

    /// Writes `{name}.params` and `{name}.adam` into `dir`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        self.net.save(&dir.join(format!("{name}.params")))?;
        self.opt.to_param_set(self.net.params()).save(&dir.join(format!("{name}.adam")))
    }

    fn restore(net: N, dir: &Path, name: &str, optim: &OptimConfig) -> Result<Self> {
        let state = ParamSet::load(&dir.join(format!("{name}.adam")))?;
        let opt = Adam::from_param_set(optim, net.params(), &state)?;
        Ok(Self { net, opt })
    }
}

impl Trainee<Generator> {
    pub fn load(dir: &Path, name: &str, optim: &OptimConfig) -> Result<Self> {
        Self::restore(Generator::load(&dir.join(format!("{name}.params")))?, dir, name, optim)
    }
}

impl Trainee<Discriminator> {
    pub fn load(dir: &Path, name: &str, optim: &OptimConfig) -> Result<Self> {
        Self::restore(Discriminator::load(&dir.join(format!("{name}.params")))?, dir, name, optim)
    }
}

/// Seed for the `index`-th network of a run.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1)
}

/// The generator driving batch order and penalty weights for one epoch of one loop.
pub(crate) fn epoch_rng(seed: u64, stream: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | epoch as u64);
    rng
}

/// Shuffled batches of sample indices; the last batch may be short.
pub(crate) fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

fn non_finite(what: String, step: usize) -> Error {
    Error::NonFinite { what, step }
}

/// One critic update then one generator update on the batch `(x, y)`, where
/// `y` holds the target maps that the critic treats as real.
pub(crate) fn adversarial_step(
    gen: &mut Trainee<Generator>,
    critic: &mut Trainee<Discriminator>,
    x: &Tensor,
    y: &Tensor,
    loss: &LossConfig,
    rng: &mut ChaCha8Rng,
    label: &str,
    step: usize,
) -> Result<LossRecord> {
    let fake = gen.net.predict(x)?;
    let u = sample_interpolation(rng, x.shape()[0]);

    let (d_loss, gp, d_grads) = {
        let mut g = Graph::new();
        let dv = critic.net.bind(&mut g);
        let net = &critic.net;
        let f = |g: &mut Graph, c, cond| net.forward(g, &dv, c, cond);
        let terms = discriminator_loss(&mut g, &f, y, &fake, x, &u, loss)?;
        let d_loss = g.value(terms.total).item();
        if !d_loss.is_finite() {
            return Err(non_finite(format!("critic loss while training {label}"), step));
        }
        let gp = g.value(terms.penalty).item();
        let grads = g.grad(terms.total, &dv)?;
        let grads: Vec<Tensor> = grads.iter().map(|&v| g.value(v).clone()).collect();
        (d_loss, gp, grads)
    };
    if !d_grads.iter().all(Tensor::is_finite) {
        return Err(non_finite(format!("critic gradient while training {label}"), step));
    }
    critic.opt.step(critic.net.params_mut(), &d_grads)?;

    let (g_loss, g_grads) = {
        let mut g = Graph::new();
        let gv = gen.net.bind(&mut g);
        let dv = critic.net.bind(&mut g);
        let net = &critic.net;
        let f = |g: &mut Graph, c, cond| net.forward(g, &dv, c, cond);
        let xv = g.leaf(x.clone());
        let yv = g.leaf(y.clone());
        let out = gen.net.forward(&mut g, &gv, xv)?;
        let terms = generator_loss(&mut g, &f, out, xv, yv, loss)?;
        let g_loss = g.value(terms.total).item();
        if !g_loss.is_finite() {
            return Err(non_finite(format!("generator loss of {label}"), step));
        }
        let grads = g.grad(terms.total, &gv)?;
        (g_loss, grads.iter().map(|&v| g.value(v).clone()).collect::<Vec<_>>())
    };
    if !g_grads.iter().all(Tensor::is_finite) {
        return Err(non_finite(format!("generator gradient of {label}"), step));
    }
    gen.opt.step(gen.net.params_mut(), &g_grads)?;

    Ok(LossRecord {
        step,
        epoch: 0,
        net: label.to_string(),
        d_loss: d_loss as f64,
        g_loss: g_loss as f64,
        bce: bce(&fake, y)?,
        gp: gp as f64,
    })
}

#[derive(Serialize, Deserialize)]
struct LoopState {
    epoch: usize,
    step: usize,
    history: Vec<LossRecord>,
}

fn write_state(dir: &Path, epoch: usize, step: usize, history: &[LossRecord]) -> Result<()> {
    let state = LoopState { epoch, step, history: history.to_vec() };
    std::fs::write(dir.join("state.json"), serde_json::to_string(&state)?)?;
    Ok(())
}

fn read_state(dir: &Path, what: &'static str) -> Result<LoopState> {
    let path = dir.join("state.json");
    if !path.exists() {
        return Err(Error::Untrained(what));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path, reason: e.to_string() })
}
