//! Independent local and global generator/critic pairs over 3-channel inputs.

use std::path::Path;

use super::{
    adversarial_step, batches, derive_seed, epoch_rng, read_state, write_state, LossRecord, OptimConfig, Trainee,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::nets::{Discriminator, Generator, Tensor};
use crate::raster::{BinaryMask, RasterImage};
use crate::training::LossConfig;

/// A 3-channel input `[1, 3, H, W]` and its text map `[1, 1, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Sample {
    pub input: Tensor,
    pub target: Tensor,
}

impl Stage2Sample {
    pub fn new(img: &RasterImage, gt: &BinaryMask) -> Result<Self> {
        if img.channels() != 3 {
            return Err(Error::ChannelMismatch { expected: 3, actual: img.channels() });
        }
        crate::raster::same_dims(img.dims(), gt.dims())?;
        Ok(Self { input: Tensor::from_raster(img), target: Tensor::from_raster(&gt.to_raster()) })
    }
}

/// One generator trained against its own critic.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialPair {
    pub generator: Trainee<Generator>,
    pub critic: Trainee<Discriminator>,
    pub epoch: usize,
    pub step: usize,
    pub history: Vec<LossRecord>,
    label: String,
    stream: u64,
}

impl AdversarialPair {
    fn new(cfg: &TrainConfig, label: &str, stream: u64) -> Result<Self> {
        let seed = cfg.optim.seed;
        let generator = Generator::new(cfg.arch.generator(3), derive_seed(seed, 8 + 2 * stream))?;
        let critic = Discriminator::new(cfg.arch.critic(3), derive_seed(seed, 9 + 2 * stream))?;
        Ok(Self {
            generator: Trainee::new(generator, &cfg.optim),
            critic: Trainee::new(critic, &cfg.optim),
            epoch: 0,
            step: 0,
            history: Vec::new(),
            label: label.to_string(),
            stream,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn run_epoch(&mut self, data: &[Stage2Sample], optim: &OptimConfig, loss: &LossConfig) -> Result<()> {
        if data.is_empty() {
            return Err(Error::invalid(format!("{} training needs at least one sample", self.label)));
        }
        let mut rng = epoch_rng(optim.seed, self.stream, self.epoch);
        for idx in batches(data.len(), optim.batch_size, &mut rng) {
            let x = Tensor::stack(&idx.iter().map(|&i| data[i].input.clone()).collect::<Vec<_>>())?;
            let y = Tensor::stack(&idx.iter().map(|&i| data[i].target.clone()).collect::<Vec<_>>())?;
            let mut rec =
                adversarial_step(&mut self.generator, &mut self.critic, &x, &y, loss, &mut rng, &self.label, self.step)?;
            rec.epoch = self.epoch;
            self.history.push(rec);
            self.step += 1;
        }
        self.epoch += 1;
        Ok(())
    }

    fn train(&mut self, data: &[Stage2Sample], epochs: usize, cfg: &TrainConfig, dir: Option<&Path>) -> Result<()> {
        while self.epoch < epochs {
            self.run_epoch(data, &cfg.optim, &cfg.loss)?;
            if let Some(dir) = dir {
                let last = self.epoch == epochs;
                if last || (cfg.checkpoint_every > 0 && self.epoch % cfg.checkpoint_every == 0) {
                    self.save(dir)?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.generator.save(dir, "g")?;
        self.critic.save(dir, "d")?;
        write_state(dir, self.epoch, self.step, &self.history)
    }

    fn load(dir: &Path, optim: &OptimConfig, label: &str, stream: u64, what: &'static str) -> Result<Self> {
        let state = read_state(dir, what)?;
        Ok(Self {
            generator: Trainee::<Generator>::load(dir, "g", optim)?,
            critic: Trainee::<Discriminator>::load(dir, "d", optim)?,
            epoch: state.epoch,
            step: state.step,
            history: state.history,
            label: label.to_string(),
            stream,
        })
    }
}

const LOCAL: (&str, u64) = ("local", 2);
const GLOBAL: (&str, u64) = ("global", 3);

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2State {
    pub local: AdversarialPair,
    /// Absent when global training was skipped.
    pub global: Option<AdversarialPair>,
}

impl Stage2State {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let local = AdversarialPair::new(cfg, LOCAL.0, LOCAL.1)?;
        let global = if cfg.skip_global { None } else { Some(AdversarialPair::new(cfg, GLOBAL.0, GLOBAL.1)?) };
        Ok(Self { local, global })
    }

    /// Trains the local pair for `epochs_local` and the global pair for
    /// `epochs_global` epochs, checkpointing into `dir/local` and `dir/global`.
    pub fn train(
        &mut self,
        local: &[Stage2Sample],
        global: &[Stage2Sample],
        cfg: &TrainConfig,
        dir: Option<&Path>,
    ) -> Result<()> {
        cfg.validate()?;
        self.local.train(local, cfg.optim.epochs_local, cfg, dir.map(|d| d.join(LOCAL.0)).as_deref())?;
        if let Some(pair) = &mut self.global {
            pair.train(global, cfg.optim.epochs_global, cfg, dir.map(|d| d.join(GLOBAL.0)).as_deref())?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.local.save(&dir.join(LOCAL.0))?;
        if let Some(pair) = &self.global {
            pair.save(&dir.join(GLOBAL.0))?;
        }
        Ok(())
    }

    /// Loads both pairs; the global pair is absent if its directory has no checkpoint.
    pub fn load(dir: &Path, optim: &OptimConfig) -> Result<Self> {
        let local = AdversarialPair::load(&dir.join(LOCAL.0), optim, LOCAL.0, LOCAL.1, "stage-two local checkpoint")?;
        let gdir = dir.join(GLOBAL.0);
        let global = if gdir.join("state.json").exists() {
            Some(AdversarialPair::load(&gdir, optim, GLOBAL.0, GLOBAL.1, "stage-two global checkpoint")?)
        } else {
            None
        };
        Ok(Self { local, global })
    }
}

/// Trains both stage-two loops from scratch. `global` may be empty when
/// `cfg.skip_global` is set.
pub fn train_stage2(
    local: &[Stage2Sample],
    global: &[Stage2Sample],
    cfg: &TrainConfig,
    dir: Option<&Path>,
) -> Result<Stage2State> {
    let mut state = Stage2State::new(cfg)?;
    state.train(local, global, cfg, dir)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::{gen_synthetic_doc, SynthSpec};
    use crate::nets::Network;
    use crate::training::ArchConfig;

    fn cfg() -> TrainConfig {
        TrainConfig {
            arch: ArchConfig { stem_width: 4, stages: vec![4], instance_norm: true, critic_widths: vec![4] },
            optim: OptimConfig { batch_size: 2, epochs_local: 1, epochs_global: 2, seed: 3, ..Default::default() },
            patch: 16,
            ..Default::default()
        }
    }

    fn data(n: u64) -> Vec<Stage2Sample> {
        (0..n)
            .map(|s| {
                let (img, gt) = gen_synthetic_doc(s, &SynthSpec::degraded(16, 16));
                Stage2Sample::new(&img, &gt).unwrap()
            })
            .collect()
    }

    #[test]
    fn epochs_per_loop_and_round_trip() {
        let cfg = cfg();
        let d = data(3);
        let dir = tempfile::tempdir().unwrap();
        let state = train_stage2(&d, &d, &cfg, Some(dir.path())).unwrap();
        assert_eq!(state.local.epoch, 1);
        assert_eq!(state.local.history.len(), 2);
        let global = state.global.as_ref().unwrap();
        assert_eq!(global.epoch, 2);
        assert_ne!(global.generator.net.params(), state.local.generator.net.params());
        assert_eq!(Stage2State::load(dir.path(), &cfg.optim).unwrap(), state);
    }

    #[test]
    fn skip_global_leaves_no_global_checkpoint() {
        let cfg = TrainConfig { skip_global: true, ..cfg() };
        let d = data(2);
        let dir = tempfile::tempdir().unwrap();
        let state = train_stage2(&d, &[], &cfg, Some(dir.path())).unwrap();
        assert!(state.global.is_none());
        assert!(!dir.path().join("global").exists());
        assert!(Stage2State::load(dir.path(), &cfg.optim).unwrap().global.is_none());
        assert!(train_stage2(&[], &[], &cfg, None).is_err());
    }

    #[test]
    fn rejects_single_channel_inputs() {
        let img = RasterImage::filled(4, 4, 1, 0.5).unwrap();
        assert!(Stage2Sample::new(&img, &BinaryMask::filled(4, 4, false)).is_err());
    }
}
