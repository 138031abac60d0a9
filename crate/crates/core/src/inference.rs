//! Stage-one enhancement, local and global binarization, and their fusion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataprep::{extract_patches, stitch_patches, PatchGrid};
use crate::error::{Error, Result};
use crate::nets::{Generator, Tensor};
use crate::raster::{square_offsets, BinaryMask, RasterImage, ResizeMode, StructuringElement};
use crate::training::{Stage1State, Stage2State, CHANNEL_NAMES};

/// Patches run through a generator per forward pass.
const INFER_BATCH: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Side of the square global-network input.
    pub r: usize,
    /// Aspect ratios below this are resized directly.
    pub ratio_lo: f64,
    /// Aspect ratios at or above this skip the global network.
    pub ratio_hi: f64,
    /// Weight of each color generator against the gray generator.
    pub omega: f32,
    /// Square dilation radius applied to the global mask; 0 disables it.
    pub dilate_radius: usize,
    /// Probabilities at or above this become text.
    pub prob_threshold: f32,
    /// Inference patch side for the stage-one and local networks.
    pub patch: usize,
    pub stride: usize,
    /// Dilate the global mask at network resolution, before mapping it back.
    pub dilate_before_reproject: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            r: 512,
            ratio_lo: 4.0,
            ratio_hi: 6.0,
            omega: 0.5,
            dilate_radius: 1,
            prob_threshold: 0.5,
            patch: 256,
            stride: 256,
            dilate_before_reproject: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_lo >= 1.0 && self.ratio_lo < self.ratio_hi) {
            return Err(Error::invalid("need 1 <= ratio_lo < ratio_hi"));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::invalid(format!("omega {} outside [0, 1]", self.omega)));
        }
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return Err(Error::invalid("probability threshold must lie in (0, 1)"));
        }
        if self.r == 0 || self.patch == 0 || self.stride == 0 || self.stride > self.patch {
            return Err(Error::invalid("r and patch must be positive and stride within 1..=patch"));
        }
        Ok(())
    }

    fn dilation(&self) -> Option<StructuringElement> {
        StructuringElement::square(self.dilate_radius).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalStrategy {
    DirectResize,
    PadThenResize,
    Skip,
}

/// Images smaller than `r` on both sides are skipped; otherwise the aspect
/// ratio picks the strategy on half-open intervals.
pub fn select_global_strategy(width: usize, height: usize, cfg: &FusionConfig) -> GlobalStrategy {
    if width < cfg.r && height < cfg.r {
        return GlobalStrategy::Skip;
    }
    let ratio = width.max(height) as f64 / width.min(height).max(1) as f64;
    if ratio < cfg.ratio_lo {
        GlobalStrategy::DirectResize
    } else if ratio < cfg.ratio_hi {
        GlobalStrategy::PadThenResize
    } else {
        GlobalStrategy::Skip
    }
}

/// The `r x r` global-network input for `img`, or `None` under [`GlobalStrategy::Skip`].
pub fn global_input(img: &RasterImage, strategy: GlobalStrategy, r: usize) -> Result<Option<RasterImage>> {
    match strategy {
        GlobalStrategy::DirectResize => img.resize(r, r, ResizeMode::Bilinear).map(Some),
        GlobalStrategy::PadThenResize => img.pad_to_square_median().resize(r, r, ResizeMode::Bilinear).map(Some),
        GlobalStrategy::Skip => Ok(None),
    }
}

/// Ground truth matching [`global_input`]; padding is background.
pub fn global_target(gt: &BinaryMask, strategy: GlobalStrategy, r: usize) -> Option<BinaryMask> {
    match strategy {
        GlobalStrategy::DirectResize => Some(gt.resize_nearest(r, r)),
        GlobalStrategy::PadThenResize => Some(gt.pad_to_square().resize_nearest(r, r)),
        GlobalStrategy::Skip => None,
    }
}

/// Maps an `r x r` mask back onto a `width x height` image.
pub fn reproject(mask: &BinaryMask, strategy: GlobalStrategy, width: usize, height: usize) -> Result<BinaryMask> {
    match strategy {
        GlobalStrategy::DirectResize => Ok(mask.resize_nearest(width, height)),
        GlobalStrategy::PadThenResize => {
            let side = width.max(height);
            let (x0, y0) = square_offsets(width, height);
            mask.resize_nearest(side, side).crop(x0, y0, width, height)
        }
        GlobalStrategy::Skip => Err(Error::invalid("nothing to reproject under the skip strategy")),
    }
}

/// The four stage-one generators in `r, g, b, gray` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Model {
    pub generators: [Generator; 4],
}

impl Stage1Model {
    pub fn load(dir: &Path) -> Result<Self> {
        let mut gens = Vec::with_capacity(4);
        for name in CHANNEL_NAMES {
            let path = dir.join(format!("{name}.params"));
            if !path.exists() {
                return Err(Error::Untrained("stage-one generators"));
            }
            gens.push(Generator::load(&path)?);
        }
        let generators: [Generator; 4] = gens.try_into().expect("four generators");
        Self::new(generators)
    }

    pub fn new(generators: [Generator; 4]) -> Result<Self> {
        if generators.iter().any(|g| g.spec().in_channels != 1) {
            return Err(Error::invalid("stage-one generators take one channel"));
        }
        Ok(Self { generators })
    }
}

impl From<&Stage1State> for Stage1Model {
    fn from(state: &Stage1State) -> Self {
        Self { generators: state.generator_nets().map(Clone::clone) }
    }
}

/// The local generator and, unless global training was skipped, the global one.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Model {
    pub local: Generator,
    pub global: Option<Generator>,
}

impl Stage2Model {
    /// Reads `local/g.params` and, if present, `global/g.params`.
    pub fn load(dir: &Path) -> Result<Self> {
        let local = dir.join("local").join("g.params");
        if !local.exists() {
            return Err(Error::Untrained("stage-two local generator"));
        }
        let global = dir.join("global").join("g.params");
        let global = if global.exists() { Some(Generator::load(&global)?) } else { None };
        Self::new(Generator::load(&local)?, global)
    }

    pub fn new(local: Generator, global: Option<Generator>) -> Result<Self> {
        if local.spec().in_channels != 3 || global.as_ref().is_some_and(|g| g.spec().in_channels != 3) {
            return Err(Error::invalid("stage-two generators take three channels"));
        }
        Ok(Self { local, global })
    }
}

impl From<&Stage2State> for Stage2Model {
    fn from(state: &Stage2State) -> Self {
        Self { local: state.local.generator.net.clone(), global: state.global.as_ref().map(|p| p.generator.net.clone()) }
    }
}

/// Runs `gen` over equally sized images in small batches, returning one
/// probability map per image.
fn predict_all(gen: &Generator, images: &[RasterImage]) -> Result<Vec<RasterImage>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFER_BATCH) {
        let batch = Tensor::stack(&chunk.iter().map(Tensor::from_raster).collect::<Vec<_>>())?;
        let probs = gen.predict(&batch)?;
        for n in 0..chunk.len() {
            out.push(probs.to_raster(n)?);
        }
    }
    Ok(out)
}

fn check_color(img: &RasterImage) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch { expected: 3, actual: img.channels() });
    }
    Ok(())
}

/// Patch-wise stage one: each color channel becomes
/// `omega * G_k(x_k) + (1 - omega) * G_gray(x_gray)`; patches are stitched back.
pub fn enhance_stage1(img: &RasterImage, s1: &Stage1Model, cfg: &FusionConfig) -> Result<RasterImage> {
    cfg.validate()?;
    check_color(img)?;
    let (w, h) = img.dims();
    let grid = PatchGrid::new(w, h, cfg.patch, cfg.stride)?;
    let patches = extract_patches(img, &grid);
    let mut planes: [Vec<RasterImage>; 4] = Default::default();
    for p in &patches {
        let (r, g, b) = p.split_channels()?;
        let gray = p.to_grayscale()?;
        for (k, plane) in [r, g, b, gray].into_iter().enumerate() {
            planes[k].push(plane);
        }
    }
    let probs: Vec<Vec<RasterImage>> =
        s1.generators.iter().zip(&planes).map(|(gen, x)| predict_all(gen, x)).collect::<Result<_>>()?;
    let mut enhanced = Vec::with_capacity(patches.len());
    for i in 0..patches.len() {
        let gray = &probs[3][i];
        let [r, g, b] = [0, 1, 2].map(|k| probs[k][i].blend(gray, cfg.omega));
        enhanced.push(RasterImage::merge_channels(&r?, &g?, &b?)?);
    }
    stitch_patches(&enhanced, &grid, (w, h))
}

/// Patch-wise local generator over the enhanced image, stitched and thresholded.
pub fn local_binarize(enhanced: &RasterImage, s2: &Stage2Model, cfg: &FusionConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    check_color(enhanced)?;
    let (w, h) = enhanced.dims();
    let grid = PatchGrid::new(w, h, cfg.patch, cfg.stride)?;
    let probs = predict_all(&s2.local, &extract_patches(enhanced, &grid))?;
    stitch_patches(&probs, &grid, (w, h))?.threshold(cfg.prob_threshold)
}

/// Global mask at the original resolution, or `None` when the strategy is
/// [`GlobalStrategy::Skip`] or no global generator was trained.
pub fn global_binarize(img: &RasterImage, s2: &Stage2Model, cfg: &FusionConfig) -> Result<Option<BinaryMask>> {
    cfg.validate()?;
    check_color(img)?;
    let (w, h) = img.dims();
    let strategy = select_global_strategy(w, h, cfg);
    let (Some(gen), Some(input)) = (&s2.global, global_input(img, strategy, cfg.r)?) else {
        return Ok(None);
    };
    let mut mask = gen.predict_image(&input)?.threshold(cfg.prob_threshold)?;
    if cfg.dilate_before_reproject {
        if let Some(se) = cfg.dilation() {
            mask = mask.dilate(se);
        }
    }
    reproject(&mask, strategy, w, h).map(Some)
}

/// `local AND dilate(global)`, or `local` when there is no global mask.
/// Dilation here is skipped when it was already applied before re-projection.
pub fn fuse(local: &BinaryMask, global: Option<&BinaryMask>, cfg: &FusionConfig) -> Result<BinaryMask> {
    let Some(global) = global else {
        return Ok(local.clone());
    };
    let support = match cfg.dilation() {
        Some(se) if !cfg.dilate_before_reproject => global.dilate(se),
        _ => global.clone(),
    };
    local.and(&support)
}

/// Every intermediate of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct Binarization {
    pub strategy: GlobalStrategy,
    pub enhanced: RasterImage,
    pub local: BinaryMask,
    pub global: Option<BinaryMask>,
    pub mask: BinaryMask,
}

/// The full two-stage pipeline on one color image.
pub fn binarize(img: &RasterImage, s1: &Stage1Model, s2: &Stage2Model, cfg: &FusionConfig) -> Result<Binarization> {
    let (w, h) = img.dims();
    let enhanced = enhance_stage1(img, s1, cfg)?;
    let local = local_binarize(&enhanced, s2, cfg)?;
    let global = global_binarize(img, s2, cfg)?;
    let mask = fuse(&local, global.as_ref(), cfg)?;
    let strategy = if global.is_some() { select_global_strategy(w, h, cfg) } else { GlobalStrategy::Skip };
    Ok(Binarization { strategy, enhanced, local, global, mask })
}
