//! Four channel generators trained against one shared conditional critic.

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{
    adversarial_step, batches, derive_seed, epoch_rng, read_state, write_state, LossRecord, OptimConfig, Trainee,
    TrainConfig,
};
use crate::dataprep::{channel_targets, ChannelThreshold};
use crate::error::{Error, Result};
use crate::nets::{Discriminator, Generator, Tensor};
use crate::raster::{BinaryMask, RasterImage};
use crate::training::LossConfig;

/// Generator order within a stage-one state and its checkpoint file names.
pub const CHANNEL_NAMES: [&str; 4] = ["g_r", "g_g", "g_b", "g_gray"];
const CRITIC_NAME: &str = "d";
const STREAM: u64 = 1;

/// One training patch split into the four generator inputs and their targets,
/// in `r, g, b, gray` order, each `[1, 1, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Sample {
    pub inputs: [Tensor; 4],
    pub targets: [Tensor; 4],
}

impl Stage1Sample {
    pub fn new(img: &RasterImage, gt: &BinaryMask, mode: ChannelThreshold) -> Result<Self> {
        let (r, g, b) = img.split_channels()?;
        let gray = img.to_grayscale()?;
        let targets = channel_targets(img, gt, mode)?;
        Ok(Self {
            inputs: [&r, &g, &b, &gray].map(Tensor::from_raster),
            targets: targets.each_ref().map(|m| Tensor::from_raster(&m.to_raster())),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1State {
    /// In [`CHANNEL_NAMES`] order.
    pub generators: Vec<Trainee<Generator>>,
    pub critic: Trainee<Discriminator>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed batches.
    pub step: usize,
    pub history: Vec<LossRecord>,
    /// Networks updated by the most recent batch, in update order.
    pub update_log: Vec<String>,
}

impl Stage1State {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let seed = cfg.optim.seed;
        let mut generators = Vec::with_capacity(4);
        for k in 0..4 {
            let net = Generator::new(cfg.arch.generator(1), derive_seed(seed, k))?;
            generators.push(Trainee::new(net, &cfg.optim));
        }
        let critic = Trainee::new(Discriminator::new(cfg.arch.critic(1), derive_seed(seed, 4))?, &cfg.optim);
        Ok(Self { generators, critic, epoch: 0, step: 0, history: Vec::new(), update_log: Vec::new() })
    }

    pub fn generator_nets(&self) -> [&Generator; 4] {
        [0, 1, 2, 3].map(|k| &self.generators[k].net)
    }

    /// For each channel in turn: a critic update, then that channel's generator update.
    pub fn train_batch(
        &mut self,
        batch: &[&Stage1Sample],
        loss: &LossConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<LossRecord>> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        self.update_log.clear();
        let mut records = Vec::with_capacity(4);
        for k in 0..4 {
            let x = Tensor::stack(&batch.iter().map(|s| s.inputs[k].clone()).collect::<Vec<_>>())?;
            let y = Tensor::stack(&batch.iter().map(|s| s.targets[k].clone()).collect::<Vec<_>>())?;
            let mut rec =
                adversarial_step(&mut self.generators[k], &mut self.critic, &x, &y, loss, rng, CHANNEL_NAMES[k], self.step)?;
            rec.epoch = self.epoch;
            self.update_log.push(CRITIC_NAME.to_string());
            self.update_log.push(CHANNEL_NAMES[k].to_string());
            records.push(rec);
        }
        self.step += 1;
        self.history.extend(records.iter().cloned());
        Ok(records)
    }

    pub fn run_epoch(&mut self, data: &[Stage1Sample], optim: &OptimConfig, loss: &LossConfig) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid("stage-one training needs at least one sample"));
        }
        let mut rng = epoch_rng(optim.seed, STREAM, self.epoch);
        for idx in batches(data.len(), optim.batch_size, &mut rng) {
            let batch: Vec<&Stage1Sample> = idx.iter().map(|&i| &data[i]).collect();
            self.train_batch(&batch, loss, &mut rng)?;
        }
        self.epoch += 1;
        Ok(())
    }

    /// Runs epochs until `epochs_local` are complete, checkpointing into `dir` if given.
    pub fn train(&mut self, data: &[Stage1Sample], cfg: &TrainConfig, dir: Option<&Path>) -> Result<()> {
        cfg.validate()?;
        while self.epoch < cfg.optim.epochs_local {
            self.run_epoch(data, &cfg.optim, &cfg.loss)?;
            if let Some(dir) = dir {
                let last = self.epoch == cfg.optim.epochs_local;
                if last || (cfg.checkpoint_every > 0 && self.epoch % cfg.checkpoint_every == 0) {
                    self.save(dir)?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (t, name) in self.generators.iter().zip(CHANNEL_NAMES) {
            t.save(dir, name)?;
        }
        self.critic.save(dir, CRITIC_NAME)?;
        write_state(dir, self.epoch, self.step, &self.history)
    }

    pub fn load(dir: &Path, optim: &OptimConfig) -> Result<Self> {
        let state = read_state(dir, "stage-one checkpoint")?;
        let mut generators = Vec::with_capacity(4);
        for name in CHANNEL_NAMES {
            generators.push(Trainee::<Generator>::load(dir, name, optim)?);
        }
        let critic = Trainee::<Discriminator>::load(dir, CRITIC_NAME, optim)?;
        Ok(Self { generators, critic, epoch: state.epoch, step: state.step, history: state.history, update_log: Vec::new() })
    }
}

/// Trains stage one from scratch for `epochs_local` epochs.
pub fn train_stage1(data: &[Stage1Sample], cfg: &TrainConfig, dir: Option<&Path>) -> Result<Stage1State> {
    if data.is_empty() {
        return Err(Error::invalid("stage-one training needs at least one sample"));
    }
    let mut state = Stage1State::new(cfg)?;
    state.train(data, cfg, dir)?;
    Ok(state)
}
