//! Raster and mask primitives shared by every stage of the pipeline.
//!
//! Intensities are stored normalized to `[0, 1]`, interleaved row-major
//! (`(y * width + x) * channels + c`). Masks use `true` for text.

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Debug, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty raster {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "raster data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from `f(x, y, c)`; values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp01(f(x, y, c)));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Wraps data already known to be valid; values are clamped, NaN becomes 0.
    pub(crate) fn from_raw_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        for v in &mut data {
            *v = clamp01(*v);
        }
        Self { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn expect_channels(&self, expected: usize) -> Result<()> {
        if self.channels != expected {
            return Err(Error::ChannelMismatch { expected, actual: self.channels });
        }
        Ok(())
    }

    /// Single plane `c` as a one-channel image.
    pub fn channel(&self, c: usize) -> Result<RasterImage> {
        if c >= self.channels {
            return Err(Error::invalid(format!("channel {c} out of range")));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Ok(RasterImage { width: self.width, height: self.height, channels: 1, data })
    }

    pub fn split_channels(&self) -> Result<(RasterImage, RasterImage, RasterImage)> {
        self.expect_channels(3)?;
        Ok((self.channel(0)?, self.channel(1)?, self.channel(2)?))
    }

    pub fn merge_channels(r: &RasterImage, g: &RasterImage, b: &RasterImage) -> Result<RasterImage> {
        for plane in [r, g, b] {
            plane.expect_channels(1)?;
            same_dims(r.dims(), plane.dims())?;
        }
        let mut data = Vec::with_capacity(r.data.len() * 3);
        for i in 0..r.data.len() {
            data.extend_from_slice(&[r.data[i], g.data[i], b.data[i]]);
        }
        Ok(RasterImage { width: r.width, height: r.height, channels: 3, data })
    }

    pub fn to_grayscale(&self) -> Result<RasterImage> {
        self.expect_channels(3)?;
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                clamp01(LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
            })
            .collect();
        Ok(RasterImage { width: self.width, height: self.height, channels: 1, data })
    }

    /// Foreground wherever the intensity is at least `t`.
    pub fn threshold(&self, t: f32) -> Result<BinaryMask> {
        self.expect_channels(1)?;
        let data = self.data.iter().map(|&v| v >= t).collect();
        Ok(BinaryMask { width: self.width, height: self.height, data })
    }

    pub fn resize(&self, width: usize, height: usize, mode: ResizeMode) -> Result<RasterImage> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("resize target must be non-empty"));
        }
        if (width, height) == self.dims() {
            return Ok(self.clone());
        }
        let ch = self.channels;
        let mut data = vec![0.0f32; width * height * ch];
        match mode {
            ResizeMode::Nearest => {
                for y in 0..height {
                    let sy = nearest_index(y, height, self.height);
                    for x in 0..width {
                        let sx = nearest_index(x, width, self.width);
                        for c in 0..ch {
                            data[(y * width + x) * ch + c] = self.get(sx, sy, c);
                        }
                    }
                }
            }
            ResizeMode::Bilinear => {
                let xs: Vec<_> = (0..width).map(|x| linear_taps(x, width, self.width)).collect();
                let ys: Vec<_> = (0..height).map(|y| linear_taps(y, height, self.height)).collect();
                for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
                    for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                        for c in 0..ch {
                            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
                            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
                            data[(y * width + x) * ch + c] = top * (1.0 - fy) + bottom * fy;
                        }
                    }
                }
            }
        }
        Ok(RasterImage::from_raw_clamped(width, height, ch, data))
    }

    /// Per-channel median, taking the lower middle value for even counts.
    pub fn channel_medians(&self) -> Vec<f32> {
        (0..self.channels)
            .map(|c| {
                let mut values: Vec<f32> =
                    self.data.iter().skip(c).step_by(self.channels).copied().collect();
                let mid = (values.len() - 1) / 2;
                let (_, median, _) = values.select_nth_unstable_by(mid, f32::total_cmp);
                *median
            })
            .collect()
    }

    /// Centers the image in a `side x side` canvas filled with `fill` (one value per channel).
    pub fn pad_to_square_with(&self, fill: &[f32]) -> RasterImage {
        let side = self.width.max(self.height);
        let (x0, y0) = square_offsets(self.width, self.height);
        let ch = self.channels;
        let mut data: Vec<f32> = fill.iter().copied().cycle().take(side * side * ch).collect();
        for y in 0..self.height {
            let src = &self.data[y * self.width * ch..(y + 1) * self.width * ch];
            let start = ((y + y0) * side + x0) * ch;
            data[start..start + src.len()].copy_from_slice(src);
        }
        RasterImage { width: side, height: side, channels: ch, data }
    }

    pub fn pad_to_square_median(&self) -> RasterImage {
        self.pad_to_square_with(&self.channel_medians())
    }

    /// `w * self + (1 - w) * other`, clamped.
    pub fn blend(&self, other: &RasterImage, w: f32) -> Result<RasterImage> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::invalid(format!("blend weight {w} outside [0, 1]")));
        }
        same_dims(self.dims(), other.dims())?;
        other.expect_channels(self.channels)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| clamp01(w * a + (1.0 - w) * b))
            .collect();
        Ok(RasterImage { data, ..*self })
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<RasterImage> {
        if x0 + width > self.width || y0 + height > self.height || width == 0 || height == 0 {
            return Err(Error::invalid("crop window outside image"));
        }
        let ch = self.channels;
        let mut data = Vec::with_capacity(width * height * ch);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * ch;
            data.extend_from_slice(&self.data[start..start + width * ch]);
        }
        Ok(RasterImage { width, height, channels: ch, data })
    }

    pub fn remap(&self, t: Orientation) -> RasterImage {
        let (width, height, data) =
            remap_pixels(self.width, self.height, self.channels, &self.data, t);
        RasterImage { width, height, channels: self.channels, data }
    }

    /// Maximum absolute difference between two same-shaped images.
    pub fn max_abs_diff(&self, other: &RasterImage) -> Result<f32> {
        same_dims(self.dims(), other.dims())?;
        other.expect_channels(self.channels)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max))
    }
}

pub fn split_channels(img: &RasterImage) -> Result<(RasterImage, RasterImage, RasterImage)> {
    img.split_channels()
}

pub fn merge_channels(r: &RasterImage, g: &RasterImage, b: &RasterImage) -> Result<RasterImage> {
    RasterImage::merge_channels(r, g, b)
}

pub fn to_grayscale(img: &RasterImage) -> Result<RasterImage> {
    img.to_grayscale()
}

pub fn threshold(img: &RasterImage, t: f32) -> Result<BinaryMask> {
    img.threshold(t)
}

pub fn resize(img: &RasterImage, width: usize, height: usize, mode: ResizeMode) -> Result<RasterImage> {
    img.resize(width, height, mode)
}

pub fn pad_to_square_median(img: &RasterImage) -> RasterImage {
    img.pad_to_square_median()
}

pub fn pixelwise_blend(a: &RasterImage, b: &RasterImage, w: f32) -> Result<RasterImage> {
    a.blend(b, w)
}

pub fn logical_and(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.and(b)
}

pub fn dilate(m: &BinaryMask, se: StructuringElement) -> BinaryMask {
    m.dilate(se)
}

/// Top-left placement of a `w x h` image centered in its `max(w, h)` square.
pub fn square_offsets(width: usize, height: usize) -> (usize, usize) {
    let side = width.max(height);
    ((side - width) / 2, (side - height) / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Bilinear,
    Nearest,
}

/// Lossless geometric re-orientations used by augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Identity,
    /// Counter-clockwise quarter turns.
    Rotate90,
    Rotate180,
    Rotate270,
    FlipHorizontal,
    FlipVertical,
}

impl Orientation {
    pub fn from_degrees(deg: i32) -> Result<Self> {
        match deg.rem_euclid(360) {
            0 => Ok(Orientation::Identity),
            90 => Ok(Orientation::Rotate90),
            180 => Ok(Orientation::Rotate180),
            270 => Ok(Orientation::Rotate270),
            _ => Err(Error::invalid(format!("rotation {deg} is not a multiple of 90 degrees"))),
        }
    }

    /// Source coordinates for output pixel `(x, y)` of a `w x h` input.
    fn source(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        match self {
            Orientation::Identity => (x, y),
            // output is h wide, w tall
            Orientation::Rotate90 => (w - 1 - y, x),
            Orientation::Rotate180 => (w - 1 - x, h - 1 - y),
            Orientation::Rotate270 => (y, h - 1 - x),
            Orientation::FlipHorizontal => (w - 1 - x, y),
            Orientation::FlipVertical => (x, h - 1 - y),
        }
    }

    fn swaps_axes(self) -> bool {
        matches!(self, Orientation::Rotate90 | Orientation::Rotate270)
    }
}

fn remap_pixels<T: Copy>(
    w: usize,
    h: usize,
    ch: usize,
    data: &[T],
    t: Orientation,
) -> (usize, usize, Vec<T>) {
    let (ow, oh) = if t.swaps_axes() { (h, w) } else { (w, h) };
    let mut out = Vec::with_capacity(data.len());
    for y in 0..oh {
        for x in 0..ow {
            let (sx, sy) = t.source(x, y, w, h);
            let base = (sy * w + sx) * ch;
            out.extend_from_slice(&data[base..base + ch]);
        }
    }
    (ow, oh, out)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask { data: self.data.iter().map(|b| !b).collect(), ..*self }
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        same_dims(self.dims(), other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Ok(BinaryMask { data, ..*self })
    }

    /// `self ⊆ other`; false on dimension mismatch.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Square-window dilation, computed as two separable 1-D max passes.
    pub fn dilate(&self, se: StructuringElement) -> BinaryMask {
        let r = se.radius();
        let (w, h) = self.dims();
        let mut rows = vec![false; w * h];
        for y in 0..h {
            let line = &self.data[y * w..(y + 1) * w];
            window_any(line, r, &mut rows[y * w..(y + 1) * w]);
        }
        let mut out = vec![false; w * h];
        let mut column = vec![false; h];
        let mut dilated = vec![false; h];
        for x in 0..w {
            for y in 0..h {
                column[y] = rows[y * w + x];
            }
            window_any(&column, r, &mut dilated);
            for y in 0..h {
                out[y * w + x] = dilated[y];
            }
        }
        BinaryMask { width: w, height: h, data: out }
    }

    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        if (width, height) == self.dims() {
            return self.clone();
        }
        BinaryMask::from_fn(width, height, |x, y| {
            self.get(nearest_index(x, width, self.width), nearest_index(y, height, self.height))
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<BinaryMask> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::invalid("crop window outside mask"));
        }
        Ok(BinaryMask::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Centers the mask in its enclosing square, padding with background.
    pub fn pad_to_square(&self) -> BinaryMask {
        let side = self.width.max(self.height);
        let (x0, y0) = square_offsets(self.width, self.height);
        BinaryMask::from_fn(side, side, |x, y| {
            x >= x0 && y >= y0 && x - x0 < self.width && y - y0 < self.height && self.get(x - x0, y - y0)
        })
    }

    pub fn remap(&self, t: Orientation) -> BinaryMask {
        let (width, height, data) = remap_pixels(self.width, self.height, 1, &self.data, t);
        BinaryMask { width, height, data }
    }

    /// Text pixels as 1.0, background as 0.0.
    pub fn to_raster(&self) -> RasterImage {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        RasterImage { width: self.width, height: self.height, channels: 1, data }
    }
}

fn window_any(line: &[bool], r: usize, out: &mut [bool]) {
    let n = line.len();
    // prefix counts of set pixels
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &b in line {
        prefix.push(prefix.last().unwrap() + b as usize);
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        *o = prefix[hi] > prefix[lo];
    }
}

/// Square structuring element of side `2 * radius + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
}

impl StructuringElement {
    pub fn square(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::invalid("structuring element radius must be at least 1"));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self { radius: 1 }
    }
}

pub(crate) fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

#[inline]
pub(crate) fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

// Pixel-center alignment: dst pixel i covers source coordinate (i + 0.5) * src / dst - 0.5.
fn nearest_index(i: usize, dst: usize, src: usize) -> usize {
    (((i as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
}

fn linear_taps(i: usize, dst: usize, src: usize) -> (usize, usize, f32) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, (pos - lo as f64) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rgb(w: usize, h: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RasterImage::from_fn(w, h, 3, |_, _, _| rng.gen()).unwrap()
    }

    fn random_mask(w: usize, h: usize, density: f64, rng: &mut ChaCha8Rng) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
    }

    #[test]
    fn rejects_bad_rasters() {
        assert!(RasterImage::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(RasterImage::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(RasterImage::new(1, 1, 1, vec![1.5]).is_err());
        assert!(RasterImage::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn split_magenta() {
        let img = RasterImage::from_fn(4, 3, 3, |_, _, c| if c == 1 { 0.0 } else { 1.0 }).unwrap();
        let (r, g, b) = img.split_channels().unwrap();
        assert!(r.data().iter().all(|&v| v == 1.0));
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert!(b.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn split_matches_index_arithmetic() {
        let img = random_rgb(8, 8, 3);
        let planes = img.split_channels().unwrap();
        let planes = [planes.0, planes.1, planes.2];
        for (c, plane) in planes.iter().enumerate() {
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(plane.data()[y * 8 + x], img.data()[(y * 8 + x) * 3 + c]);
                }
            }
        }
    }

    #[test]
    fn split_rejects_gray() {
        let img = RasterImage::filled(2, 2, 1, 0.5).unwrap();
        assert!(matches!(img.split_channels(), Err(Error::ChannelMismatch { .. })));
        assert!(img.to_grayscale().is_err());
    }

    #[test]
    fn grayscale_values() {
        let white = RasterImage::filled(3, 3, 3, 1.0).unwrap().to_grayscale().unwrap();
        assert!(white.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let red = RasterImage::from_fn(2, 2, 3, |_, _, c| (c == 0) as u8 as f32).unwrap();
        assert!(red.to_grayscale().unwrap().data().iter().all(|&v| (v - 0.299).abs() < 1e-7));
        let mid = RasterImage::filled(2, 2, 3, 0.5).unwrap().to_grayscale().unwrap();
        assert!(mid.data().iter().all(|&v| (v - 0.5).abs() < 1e-7));
    }

    #[test]
    fn threshold_rules() {
        let zero = RasterImage::filled(4, 4, 1, 0.0).unwrap();
        assert_eq!(zero.threshold(0.5).unwrap().count(), 0);
        let at = RasterImage::filled(2, 2, 1, 0.5).unwrap();
        assert_eq!(at.threshold(0.5).unwrap().count(), 4);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = RasterImage::from_fn(13, 7, 1, |_, _, _| rng.gen()).unwrap();
        let t = 0.37;
        let mask = img.threshold(t).unwrap();
        for y in 0..7 {
            for x in 0..13 {
                assert_eq!(mask.get(x, y), img.get(x, y, 0) >= t);
            }
        }
    }

    #[test]
    fn and_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_mask(9, 5, 0.5, &mut rng);
        let b = random_mask(9, 5, 0.5, &mut rng);
        assert_eq!(a.and(&a).unwrap(), a);
        assert_eq!(a.and(&BinaryMask::filled(9, 5, false)).unwrap().count(), 0);
        let c = a.and(&b).unwrap();
        for y in 0..5 {
            for x in 0..9 {
                assert_eq!(c.get(x, y), a.get(x, y) && b.get(x, y));
            }
        }
        assert!(matches!(
            a.and(&BinaryMask::filled(5, 9, true)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn dilate_oracle(m: &BinaryMask, r: usize) -> BinaryMask {
        let r = r as isize;
        BinaryMask::from_fn(m.width(), m.height(), |x, y| {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x as isize + dx, y as isize + dy);
                    if sx >= 0
                        && sy >= 0
                        && (sx as usize) < m.width()
                        && (sy as usize) < m.height()
                        && m.get(sx as usize, sy as usize)
                    {
                        return true;
                    }
                }
            }
            false
        })
    }

    #[test]
    fn dilate_cases() {
        let mut m = BinaryMask::filled(5, 5, false);
        m.set(2, 2, true);
        let d = m.dilate(StructuringElement::default());
        let expected = BinaryMask::from_fn(5, 5, |x, y| (1..=3).contains(&x) && (1..=3).contains(&y));
        assert_eq!(d, expected);
        assert_eq!(BinaryMask::filled(6, 4, false).dilate(StructuringElement::default()).count(), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for r in 1..4 {
            let m = random_mask(23, 17, 0.05, &mut rng);
            assert_eq!(m.dilate(StructuringElement::square(r).unwrap()), dilate_oracle(&m, r));
        }
        assert!(StructuringElement::square(0).is_err());
        assert_eq!(StructuringElement::square(2).unwrap().side(), 5);
    }

    #[test]
    fn resize_cases() {
        let img = random_rgb(7, 5, 4);
        assert_eq!(img.resize(7, 5, ResizeMode::Bilinear).unwrap(), img);
        let c = RasterImage::filled(3, 5, 3, 0.25).unwrap();
        for mode in [ResizeMode::Bilinear, ResizeMode::Nearest] {
            let r = c.resize(11, 2, mode).unwrap();
            assert_eq!(r.dims(), (11, 2));
            assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        }
    }

    #[test]
    fn bilinear_checkerboard_closed_form() {
        // 2x2 checkerboard [[0,1],[1,0]] upsampled to 4x4 with pixel-center alignment.
        // Sample positions along each axis are -0.25, 0.25, 0.75, 1.25 → clamped to
        // 0, 0.25, 0.75, 1; the bilinear surface is f(u,v) = u + v - 2uv.
        let img = RasterImage::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let up = img.resize(4, 4, ResizeMode::Bilinear).unwrap();
        let pos = [0.0f32, 0.25, 0.75, 1.0];
        for y in 0..4 {
            for x in 0..4 {
                let (u, v) = (pos[x], pos[y]);
                let expected = u + v - 2.0 * u * v;
                assert!((up.get(x, y, 0) - expected).abs() < 1e-6, "({x},{y})");
            }
        }
    }

    #[test]
    fn median_padding() {
        // 4x2 with six zeros and two ones: lower median is 0.
        let img = RasterImage::new(4, 2, 1, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(img.channel_medians(), vec![0.0]);
        let sq = img.pad_to_square_median();
        assert_eq!(sq.dims(), (4, 4));
        // content rows 1..3
        assert_eq!(sq.get(1, 1, 0), 1.0);
        assert_eq!(sq.get(2, 2, 0), 1.0);
        assert!((0..4).all(|x| sq.get(x, 0, 0) == 0.0 && sq.get(x, 3, 0) == 0.0));

        let square = random_rgb(5, 5, 2);
        assert_eq!(square.pad_to_square_median(), square);
        let c = RasterImage::filled(2, 7, 3, 0.6).unwrap().pad_to_square_median();
        assert_eq!(c.dims(), (7, 7));
        assert!(c.data().iter().all(|&v| v == 0.6));

        // even count takes the lower middle
        let img = RasterImage::new(4, 1, 1, vec![0.1, 0.9, 0.4, 0.6]).unwrap();
        assert_eq!(img.channel_medians(), vec![0.4]);
    }

    #[test]
    fn blend_cases() {
        let a = RasterImage::filled(2, 2, 1, 0.8).unwrap();
        let b = RasterImage::filled(2, 2, 1, 0.4).unwrap();
        assert!(a.blend(&b, 0.5).unwrap().data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
        assert_eq!(a.blend(&b, 1.0).unwrap(), a);
        assert!(a.blend(&RasterImage::filled(2, 3, 1, 0.0).unwrap(), 0.5).is_err());

        let x = random_rgb(6, 4, 10);
        let y = random_rgb(6, 4, 11);
        let out = x.blend(&y, 0.3).unwrap();
        for i in 0..x.data().len() {
            assert_eq!(out.data()[i], clamp01(0.3 * x.data()[i] + 0.7 * y.data()[i]));
        }
    }

    #[test]
    fn orientation_oracle() {
        let img = random_rgb(5, 3, 8);
        let r = img.remap(Orientation::Rotate270);
        assert_eq!(r.dims(), (3, 5));
        // Counter-clockwise 270° == clockwise 90°: output (x, y) comes from (y, h-1-x).
        for y in 0..5 {
            for x in 0..3 {
                for c in 0..3 {
                    assert_eq!(r.get(x, y, c), img.get(y, 2 - x, c));
                }
            }
        }
        let back = r.remap(Orientation::Rotate90);
        assert_eq!(back, img);
        assert_eq!(img.remap(Orientation::FlipHorizontal).remap(Orientation::FlipHorizontal), img);
        assert!(Orientation::from_degrees(45).is_err());
    }

    proptest! {
        #[test]
        fn split_merge_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let img = random_rgb(w, h, seed);
            let (r, g, b) = img.split_channels().unwrap();
            prop_assert_eq!(RasterImage::merge_channels(&r, &g, &b).unwrap(), img);
        }

        #[test]
        fn dilate_is_extensive_and_monotone(seed in any::<u64>(), r in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let small = random_mask(12, 9, 0.1, &mut rng);
            let extra = random_mask(12, 9, 0.1, &mut rng);
            let big = BinaryMask::from_fn(12, 9, |x, y| small.get(x, y) || extra.get(x, y));
            let se = StructuringElement::square(r).unwrap();
            prop_assert!(small.is_subset_of(&small.dilate(se)));
            prop_assert!(small.dilate(se).is_subset_of(&big.dilate(se)));
        }

        #[test]
        fn and_is_subset(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_mask(10, 10, 0.5, &mut rng);
            let b = random_mask(10, 10, 0.5, &mut rng);
            let c = a.and(&b).unwrap();
            prop_assert!(c.is_subset_of(&a) && c.is_subset_of(&b));
        }

        #[test]
        fn threshold_monotone(seed in any::<u64>(), t1 in 0.0f32..1.0, t2 in 0.0f32..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = RasterImage::from_fn(8, 8, 1, |_, _, _| rng.gen()).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(img.threshold(hi).unwrap().is_subset_of(&img.threshold(lo).unwrap()));
        }

        #[test]
        fn half_blend_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
            let a = random_rgb(4, 4, s1);
            let b = random_rgb(4, 4, s2);
            prop_assert_eq!(a.blend(&b, 0.5).unwrap(), b.blend(&a, 0.5).unwrap());
        }
    }
}
