use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{same_dims, BinaryMask, Orientation, RasterImage, ResizeMode};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Resize factors; each yields an image of `round(side * s)` pixels per side.
    pub scales: Vec<f32>,
    /// Multiples of 90 degrees, counter-clockwise.
    pub rotations: Vec<i32>,
    pub hflip: bool,
    pub vflip: bool,
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.scales.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("scale factor {s} must be positive")));
        }
        for &r in &self.rotations {
            Orientation::from_degrees(r)?;
        }
        Ok(())
    }
}

/// The identity pair followed by one pair per enabled transform, in the order
/// scales, rotations, horizontal flip, vertical flip. Images are resized
/// bilinearly and masks by nearest neighbour so they stay binary.
pub fn augment(
    img: &RasterImage,
    gt: &BinaryMask,
    cfg: &AugmentationConfig,
) -> Result<Vec<(RasterImage, BinaryMask)>> {
    cfg.validate()?;
    same_dims(img.dims(), gt.dims())?;
    let mut out = vec![(img.clone(), gt.clone())];
    let (w, h) = img.dims();
    for &s in &cfg.scales {
        let sw = ((w as f32 * s).round() as usize).max(1);
        let sh = ((h as f32 * s).round() as usize).max(1);
        out.push((img.resize(sw, sh, ResizeMode::Bilinear)?, gt.resize_nearest(sw, sh)));
    }
    let mut orientations = Vec::new();
    for &r in &cfg.rotations {
        orientations.push(Orientation::from_degrees(r)?);
    }
    if cfg.hflip {
        orientations.push(Orientation::FlipHorizontal);
    }
    if cfg.vflip {
        orientations.push(Orientation::FlipVertical);
    }
    for t in orientations {
        out.push((img.remap(t), gt.remap(t)));
    }
    Ok(out)
}
