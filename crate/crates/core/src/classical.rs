//! Classical thresholding baselines: Otsu (global), Niblack and Sauvola (local).
//!
//! All three treat dark pixels as text, the usual document polarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};

/// Histogram bin of a normalized intensity.
#[inline]
pub fn intensity_bin(v: f32) -> usize {
    ((v * 255.0).round() as i64).clamp(0, 255) as usize
}

/// Otsu's global threshold.
///
/// Returns `(t, mask)` where `t = t_bin / 255` and text pixels are those whose
/// 8-bit bin falls below `t_bin`. Among maximizing bins the lowest is taken. A
/// constant image yields `t` one bin above the constant and an empty mask.
pub fn otsu(img: &RasterImage) -> Result<(f32, BinaryMask)> {
    if img.channels() != 1 {
        return Err(Error::ChannelMismatch { expected: 1, actual: img.channels() });
    }
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[intensity_bin(v)] += 1;
    }
    let (w, h) = img.dims();
    let Some(t_bin) = otsu_bin(&hist) else {
        let bin = intensity_bin(img.data()[0]);
        return Ok(((bin + 1) as f32 / 255.0, BinaryMask::filled(w, h, false)));
    };
    let data = img.data().iter().map(|&v| intensity_bin(v) < t_bin).collect();
    Ok((t_bin as f32 / 255.0, BinaryMask::new(w, h, data)?))
}

/// Lowest split bin maximizing the between-class variance, or `None` when the
/// histogram has a single occupied bin.
///
/// The objective `(N*S0 - n0*S)^2 / (n0*n1)` is evaluated from exact integer
/// class sums, so histogram scaling leaves the argmax unchanged.
pub fn otsu_bin(hist: &[u64; 256]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, f64)> = None;
    for t in 1..256 {
        n0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = total as i128 * s0 as i128 - n0 as i128 * sum as i128;
        let score = (diff * diff) as f64 / (n0 as f64 * n1 as f64);
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((t, score));
        }
    }
    best.map(|(t, _)| t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalThresholdConfig {
    pub window: usize,
    pub k: f64,
    /// Dynamic range of the standard deviation (Sauvola only).
    pub r: f64,
}

impl LocalThresholdConfig {
    pub fn niblack() -> Self {
        Self { window: 25, k: -0.2, r: 0.5 }
    }

    pub fn sauvola() -> Self {
        Self { window: 25, k: 0.34, r: 128.0 / 255.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::invalid(format!("window {} must be odd and >= 3", self.window)));
        }
        if !(self.r > 0.0) {
            return Err(Error::invalid("dynamic range R must be positive"));
        }
        Ok(())
    }
}

/// Local mean and standard deviation over a square window, borders mirrored
/// (reflect-101: index -1 maps to 1).
pub fn local_statistics(img: &RasterImage, window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if img.channels() != 1 {
        return Err(Error::ChannelMismatch { expected: 1, actual: img.channels() });
    }
    let (w, h) = img.dims();
    let half = window / 2;
    let (pw, ph) = (w + 2 * half, h + 2 * half);
    // Shift by the global mean to limit cancellation in E[v^2] - E[v]^2.
    let offset = img.data().iter().map(|&v| v as f64).sum::<f64>() / (w * h) as f64;
    let mut sum = vec![0.0f64; (pw + 1) * (ph + 1)];
    let mut sq = vec![0.0f64; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = reflect(py as isize - half as isize, h);
        let (mut row_s, mut row_q) = (0.0, 0.0);
        for px in 0..pw {
            let sx = reflect(px as isize - half as isize, w);
            let v = img.get(sx, sy, 0) as f64 - offset;
            row_s += v;
            row_q += v * v;
            let i = (py + 1) * (pw + 1) + px + 1;
            sum[i] = sum[i - (pw + 1)] + row_s;
            sq[i] = sq[i - (pw + 1)] + row_q;
        }
    }
    let n = (window * window) as f64;
    let rect = |t: &[f64], x: usize, y: usize| {
        let (x1, y1) = (x + window, y + window);
        t[y1 * (pw + 1) + x1] - t[y * (pw + 1) + x1] - t[y1 * (pw + 1) + x] + t[y * (pw + 1) + x]
    };
    let mut means = Vec::with_capacity(w * h);
    let mut stds = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let m = rect(&sum, x, y) / n;
            let mut var = rect(&sq, x, y) / n - m * m;
            if var < 1e-12 {
                var = 0.0;
            }
            means.push(m + offset);
            stds.push(var.sqrt());
        }
    }
    Ok((means, stds))
}

pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Per-pixel Niblack threshold `m + k*s`.
pub fn niblack_thresholds(img: &RasterImage, cfg: &LocalThresholdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (m, s) = local_statistics(img, cfg.window)?;
    Ok(m.iter().zip(&s).map(|(m, s)| m + cfg.k * s).collect())
}

/// Per-pixel Sauvola threshold `m * (1 + k*(s/R - 1))`.
pub fn sauvola_thresholds(img: &RasterImage, cfg: &LocalThresholdConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (m, s) = local_statistics(img, cfg.window)?;
    Ok(m.iter().zip(&s).map(|(m, s)| m * (1.0 + cfg.k * (s / cfg.r - 1.0))).collect())
}

fn below(img: &RasterImage, thresholds: &[f64]) -> Result<BinaryMask> {
    let data = img.data().iter().zip(thresholds).map(|(&v, &t)| (v as f64) < t).collect();
    BinaryMask::new(img.width(), img.height(), data)
}

pub fn niblack(img: &RasterImage, cfg: &LocalThresholdConfig) -> Result<BinaryMask> {
    below(img, &niblack_thresholds(img, cfg)?)
}

pub fn sauvola(img: &RasterImage, cfg: &LocalThresholdConfig) -> Result<BinaryMask> {
    below(img, &sauvola_thresholds(img, cfg)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Otsu,
    Niblack,
    Sauvola,
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "otsu" => Ok(Self::Otsu),
            "niblack" => Ok(Self::Niblack),
            "sauvola" => Ok(Self::Sauvola),
            other => Err(Error::invalid(format!("unknown baseline method '{other}'"))),
        }
    }
}

/// Runs a baseline on any image, converting color input to grayscale first.
pub fn run_baseline(img: &RasterImage, method: BaselineMethod) -> Result<BinaryMask> {
    let gray = if img.channels() == 3 { img.to_grayscale()? } else { img.clone() };
    match method {
        BaselineMethod::Otsu => Ok(otsu(&gray)?.1),
        BaselineMethod::Niblack => niblack(&gray, &LocalThresholdConfig::niblack()),
        BaselineMethod::Sauvola => sauvola(&gray, &LocalThresholdConfig::sauvola()),
    }
}
