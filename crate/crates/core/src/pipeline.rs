//! End-to-end training over whole documents: patching, stage one, then the
//! stage-two data built from the frozen stage-one networks.

use std::path::Path;

use crate::dataprep::{augment, extract_mask_patches, extract_patches, PatchGrid};
use crate::error::{Error, Result};
use crate::inference::{enhance_stage1, global_input, global_target, select_global_strategy, FusionConfig, Stage1Model};
use crate::raster::{BinaryMask, RasterImage};
use crate::training::{
    write_loss_csv, Stage1Sample, Stage1State, Stage2Sample, Stage2State, TrainConfig,
};

/// Non-overlapping `patch`-sided tiles of every augmented document.
pub fn training_patches(
    docs: &[(RasterImage, BinaryMask)],
    cfg: &TrainConfig,
) -> Result<Vec<(RasterImage, BinaryMask)>> {
    let mut out = Vec::new();
    for (img, gt) in docs {
        for (img, gt) in augment(img, gt, &cfg.augmentation)? {
            let (w, h) = img.dims();
            let grid = PatchGrid::new(w, h, cfg.patch, cfg.patch)?;
            out.extend(extract_patches(&img, &grid).into_iter().zip(extract_mask_patches(&gt, &grid)));
        }
    }
    Ok(out)
}

pub fn stage1_samples(docs: &[(RasterImage, BinaryMask)], cfg: &TrainConfig) -> Result<Vec<Stage1Sample>> {
    training_patches(docs, cfg)?.iter().map(|(img, gt)| Stage1Sample::new(img, gt, cfg.channel_threshold)).collect()
}

/// Local samples are patches of the stage-one enhanced documents; global
/// samples are whole documents brought to `r x r` by the global strategy.
pub fn stage2_samples(
    docs: &[(RasterImage, BinaryMask)],
    s1: &Stage1Model,
    train: &TrainConfig,
    fusion: &FusionConfig,
) -> Result<(Vec<Stage2Sample>, Vec<Stage2Sample>)> {
    let mut enhanced = Vec::with_capacity(docs.len());
    let mut global = Vec::new();
    for (img, gt) in docs {
        for (img, gt) in augment(img, gt, &train.augmentation)? {
            enhanced.push((enhance_stage1(&img, s1, fusion)?, gt.clone()));
            if !train.skip_global {
                let (w, h) = img.dims();
                let strategy = select_global_strategy(w, h, fusion);
                if let (Some(x), Some(y)) = (global_input(&img, strategy, fusion.r)?, global_target(&gt, strategy, fusion.r)) {
                    global.push(Stage2Sample::new(&x, &y)?);
                }
            }
        }
    }
    let plain = TrainConfig { augmentation: Default::default(), ..train.clone() };
    let local = training_patches(&enhanced, &plain)?
        .iter()
        .map(|(img, gt)| Stage2Sample::new(img, gt))
        .collect::<Result<Vec<_>>>()?;
    Ok((local, global))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPipeline {
    pub stage1: Stage1State,
    pub stage2: Stage2State,
}

/// Trains both stages. With `dir`, checkpoints go to `dir/stage1` and
/// `dir/stage2/{local,global}` and loss histories to CSV files beside them.
pub fn train_pipeline(
    docs: &[(RasterImage, BinaryMask)],
    train: &TrainConfig,
    fusion: &FusionConfig,
    dir: Option<&Path>,
) -> Result<TrainedPipeline> {
    train.validate()?;
    fusion.validate()?;
    if docs.is_empty() {
        return Err(Error::invalid("training needs at least one document"));
    }
    let s1_dir = dir.map(|d| d.join("stage1"));
    let mut stage1 = match &s1_dir {
        Some(d) if d.join("state.json").exists() => Stage1State::load(d, &train.optim)?,
        _ => Stage1State::new(train)?,
    };
    if stage1.epoch < train.optim.epochs_local {
        stage1.train(&stage1_samples(docs, train)?, train, s1_dir.as_deref())?;
    }
    if let Some(d) = dir {
        write_loss_csv(&d.join("stage1_losses.csv"), &stage1.history)?;
    }

    let (local, global) = stage2_samples(docs, &Stage1Model::from(&stage1), train, fusion)?;
    if !train.skip_global && global.is_empty() {
        return Err(Error::invalid(format!("no document is large enough for a global input of side {}", fusion.r)));
    }
    let s2_dir = dir.map(|d| d.join("stage2"));
    let mut stage2 = match &s2_dir {
        Some(d) if d.join("local").join("state.json").exists() => {
            let mut s = Stage2State::load(d, &train.optim)?;
            if train.skip_global {
                s.global = None;
            } else if s.global.is_none() {
                s.global = Stage2State::new(train)?.global;
            }
            s
        }
        _ => Stage2State::new(train)?,
    };
    stage2.train(&local, &global, train, s2_dir.as_deref())?;
    if let Some(d) = dir {
        write_loss_csv(&d.join("stage2_local_losses.csv"), &stage2.local.history)?;
        if let Some(g) = &stage2.global {
            write_loss_csv(&d.join("stage2_global_losses.csv"), &g.history)?;
        }
    }
    Ok(TrainedPipeline { stage1, stage2 })
}
