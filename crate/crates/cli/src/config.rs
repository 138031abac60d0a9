//! Run configuration: a JSON file whose fields can each be overridden by a flag.

use std::path::{Path, PathBuf};

use clap::Args;
use docbin::dataprep::ChannelThreshold;
use docbin::inference::FusionConfig;
use docbin::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    pub fusion: FusionConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(docbin::Error::from)?;
        serde_json::from_str(&text).map_err(|e| {
            docbin::Error::Format { path: path.to_path_buf(), reason: e.to_string() }.into()
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_string_pretty(self).map_err(docbin::Error::from)?;
        json.push('\n');
        std::fs::write(path, json).map_err(docbin::Error::from)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        self.fusion.validate()?;
        if let Some(m) = &self.manifest {
            if !m.exists() {
                return Err(CliError::Usage(format!("manifest {} does not exist", m.display())));
            }
        }
        Ok(())
    }
}

fn parse_channel_t(s: &str) -> Result<ChannelThreshold, String> {
    if s == "otsu" {
        return Ok(ChannelThreshold::OtsuOnText);
    }
    s.parse::<f32>().map(ChannelThreshold::Fixed).map_err(|_| format!("expected a number or 'otsu', got '{s}'"))
}

/// Long-form flags that override the configuration file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration; flags given alongside it take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs_local: Option<usize>,
    #[arg(long)]
    pub epochs_global: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f32>,
    /// Weight of the cross-entropy term.
    #[arg(long)]
    pub lambda: Option<f32>,
    /// Gradient-penalty coefficient.
    #[arg(long)]
    pub alpha: Option<f32>,
    /// Color/gray generator blend weight.
    #[arg(long)]
    pub omega: Option<f32>,
    /// Channel ground-truth threshold: a number in (0, 1] or `otsu`.
    #[arg(long, value_parser = parse_channel_t)]
    pub channel_t: Option<ChannelThreshold>,
    /// Global network input side.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub dilate_radius: Option<usize>,
    /// Training patch side.
    #[arg(long)]
    pub patch: Option<usize>,
    /// Inference patch side.
    #[arg(long)]
    pub infer_patch: Option<usize>,
    /// Inference patch stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Use the generator sign as printed, `+E[D(G(x), x)]`.
    #[arg(long)]
    pub paper_sign: bool,
    /// Train and run only the local stage-two network.
    #[arg(long)]
    pub skip_global: bool,
    /// Dilate the global mask before mapping it back to image size.
    #[arg(long)]
    pub dilate_before_reproject: bool,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

impl Overrides {
    /// The configuration file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        let f = &mut cfg.fusion;
        set(&mut t.optim.seed, self.seed);
        set(&mut t.optim.epochs_local, self.epochs_local);
        set(&mut t.optim.epochs_global, self.epochs_global);
        set(&mut t.optim.batch_size, self.batch_size);
        set(&mut t.optim.learning_rate, self.learning_rate);
        set(&mut t.loss.lambda, self.lambda);
        set(&mut t.loss.alpha, self.alpha);
        set(&mut t.channel_threshold, self.channel_t);
        set(&mut t.patch, self.patch);
        set(&mut t.checkpoint_every, self.checkpoint_every);
        set(&mut f.omega, self.omega);
        set(&mut f.r, self.r);
        set(&mut f.dilate_radius, self.dilate_radius);
        set(&mut f.patch, self.infer_patch);
        set(&mut f.stride, self.stride);
        t.loss.paper_sign |= self.paper_sign;
        t.skip_global |= self.skip_global;
        f.dilate_before_reproject |= self.dilate_before_reproject;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
