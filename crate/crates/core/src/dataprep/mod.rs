//! Dataset ingestion, channel ground truth, patching, augmentation, folds and
//! synthetic documents.

mod augment;
mod folds;
mod patches;
mod synth;

pub use augment::{augment, AugmentationConfig};
pub use folds::{make_folds, FoldSplit};
pub use patches::{extract_mask_patches, extract_patches, stitch_patches, PatchGrid};
pub use synth::{gen_synthetic_doc, Rgb, SynthSpec, TEXT_DENSITY};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::{intensity_bin, otsu_bin};
use crate::error::{Error, Result};
use crate::io;
use crate::raster::{same_dims, BinaryMask, RasterImage};

/// One dataset entry: an input image and its ground-truth mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePair {
    pub id: String,
    #[serde(rename = "input")]
    pub input_path: PathBuf,
    #[serde(rename = "gt")]
    pub gt_path: PathBuf,
}

impl SamplePair {
    /// Decodes both files, checking that their dimensions agree.
    pub fn load(&self) -> Result<(RasterImage, BinaryMask)> {
        let img = io::read_image(&self.input_path)?;
        let gt = io::read_mask(&self.gt_path)?;
        same_dims(img.dims(), gt.dims())?;
        Ok((img, gt))
    }
}

/// Reads a JSON manifest. Relative paths are resolved against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<SamplePair>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs: Vec<SamplePair> = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in &mut pairs {
        if p.input_path.is_relative() {
            p.input_path = base.join(&p.input_path);
        }
        if p.gt_path.is_relative() {
            p.gt_path = base.join(&p.gt_path);
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = pairs.iter().find(|p| !seen.insert(p.id.as_str())) {
        return Err(Error::Format { path: path.to_path_buf(), reason: format!("duplicate id '{}'", dup.id) });
    }
    Ok(pairs)
}

pub fn write_manifest(path: &Path, pairs: &[SamplePair]) -> Result<()> {
    let mut json = serde_json::to_string_pretty(pairs)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

/// Pairs every `name.png` in `dir` with `name_GT.png`, sorted by id.
/// Inputs without a ground-truth file are skipped.
pub fn scan_folder(dir: &Path) -> Result<Vec<SamplePair>> {
    let mut pairs = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if stem.ends_with("_GT") {
            continue;
        }
        let gt = dir.join(format!("{stem}_GT.png"));
        if gt.exists() {
            pairs.push(SamplePair { id: stem.to_string(), input_path: path, gt_path: gt });
        }
    }
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(pairs)
}

/// How the per-channel ground-truth threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelThreshold {
    Fixed(f32),
    /// Otsu over the channel values of ground-truth text pixels only.
    OtsuOnText,
}

impl Default for ChannelThreshold {
    fn default() -> Self {
        ChannelThreshold::Fixed(0.5)
    }
}

/// Ground truth for one color channel: the channel is masked by `y` (background
/// set to 0) and then thresholded at `t`, so a text pixel survives only where
/// its channel value is at least `t`.
pub fn build_channel_gt(x_k: &RasterImage, y: &BinaryMask, t: f32) -> Result<BinaryMask> {
    if x_k.channels() != 1 {
        return Err(Error::ChannelMismatch { expected: 1, actual: x_k.channels() });
    }
    same_dims(x_k.dims(), y.dims())?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!("channel threshold {t} must lie in (0, 1]")));
    }
    let masked: Vec<f32> = x_k.data().iter().zip(y.data()).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
    let data = masked.iter().map(|&v| v >= t).collect();
    BinaryMask::new(y.width(), y.height(), data)
}

/// The threshold `mode` resolves to for channel `x_k` under ground truth `y`.
/// Otsu falls back to 0.5 when the text pixels occupy a single intensity bin.
pub fn channel_threshold(x_k: &RasterImage, y: &BinaryMask, mode: ChannelThreshold) -> f32 {
    match mode {
        ChannelThreshold::Fixed(t) => t,
        ChannelThreshold::OtsuOnText => {
            let mut hist = [0u64; 256];
            for (&v, &m) in x_k.data().iter().zip(y.data()) {
                if m {
                    hist[intensity_bin(v)] += 1;
                }
            }
            otsu_bin(&hist).map_or(0.5, |b| b as f32 / 255.0)
        }
    }
}

/// Targets for the four stage-one generators in `r, g, b, gray` order. The
/// gray target is `y` itself.
pub fn channel_targets(img: &RasterImage, y: &BinaryMask, mode: ChannelThreshold) -> Result<[BinaryMask; 4]> {
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch { expected: 3, actual: img.channels() });
    }
    let (r, g, b) = img.split_channels()?;
    let build = |c: &RasterImage| build_channel_gt(c, y, channel_threshold(c, y, mode));
    Ok([build(&r)?, build(&g)?, build(&b)?, y.clone()])
}
