//! Synthetic degraded documents with exact ground truth.
//!
//! Glyphs are drawn from a seven-segment-like stroke alphabet on lines of text.
//! The degraded preset adds large stains whose luminance is close to the ink's,
//! so a single global threshold on gray values cannot separate them, while the
//! color channels can.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, RasterImage, LUMA_WEIGHTS};

pub type Rgb = [f32; 3];

/// Bounds on the fraction of text pixels in a generated page.
pub const TEXT_DENSITY: (f64, f64) = (0.02, 0.40);

const INKS: [Rgb; 3] = [[0.10, 0.16, 0.58], [0.08, 0.50, 0.22], [0.62, 0.10, 0.12]];
const STAINS: [Rgb; 5] =
    [[0.55, 0.35, 0.15], [0.45, 0.20, 0.50], [0.45, 0.45, 0.10], [0.10, 0.42, 0.45], [0.60, 0.15, 0.10]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Ink color; `None` picks one of the built-in inks per page.
    pub text_color: Option<Rgb>,
    pub bg_color: Rgb,
    /// Standard deviation of per-channel gaussian noise.
    pub noise: f32,
    /// Number of stain blobs.
    pub stains: usize,
}

impl SynthSpec {
    /// Black text on white paper without noise or stains.
    pub fn noiseless(width: usize, height: usize) -> Self {
        Self { width, height, text_color: Some([0.0; 3]), bg_color: [1.0; 3], noise: 0.0, stains: 0 }
    }

    /// Colored ink on tinted paper with noise and ink-dark color stains.
    pub fn degraded(width: usize, height: usize) -> Self {
        Self { width, height, text_color: None, bg_color: [0.93, 0.90, 0.82], noise: 0.04, stains: 5 }
    }
}

fn luma(c: Rgb) -> f32 {
    c.iter().zip(LUMA_WEIGHTS).map(|(v, w)| v * w).sum()
}

fn dominant(c: Rgb) -> usize {
    (0..3).max_by(|&a, &b| c[a].total_cmp(&c[b])).expect("three channels")
}

/// Segment endpoints on a 2x3 lattice of glyph corners.
const SEGMENTS: [((f32, f32), (f32, f32)); 9] = [
    ((0.0, 0.0), (1.0, 0.0)),
    ((0.0, 0.0), (0.0, 0.5)),
    ((1.0, 0.0), (1.0, 0.5)),
    ((0.0, 0.5), (1.0, 0.5)),
    ((0.0, 0.5), (0.0, 1.0)),
    ((1.0, 0.5), (1.0, 1.0)),
    ((0.0, 1.0), (1.0, 1.0)),
    ((0.0, 0.0), (1.0, 1.0)),
    ((1.0, 0.0), (0.0, 1.0)),
];

fn draw_segment(mask: &mut BinaryMask, a: (f32, f32), b: (f32, f32), width: f32) {
    let (w, h) = mask.dims();
    let r = width / 2.0;
    let x0 = (a.0.min(b.0) - r).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - r).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + r).ceil() as usize).min(w.saturating_sub(1));
    let y1 = ((a.1.max(b.1) + r).ceil() as usize).min(h.saturating_sub(1));
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let t = if len2 == 0.0 { 0.0 } else { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) };
            let (cx, cy) = (a.0 + t * dx - px, a.1 + t * dy - py);
            if cx * cx + cy * cy <= r * r {
                mask.set(x, y, true);
            }
        }
    }
}

fn render_text(w: usize, h: usize, rng: &mut ChaCha8Rng) -> BinaryMask {
    let mut mask = BinaryMask::filled(w, h, false);
    let margin = 4.0;
    let mut top = margin + rng.gen_range(0.0..4.0);
    loop {
        let glyph_h: f32 = rng.gen_range(9.0..13.0);
        if top + glyph_h > h as f32 - margin {
            break;
        }
        let mut left = margin + rng.gen_range(0.0..8.0);
        loop {
            let glyph_w: f32 = rng.gen_range(5.0..8.0);
            if left + glyph_w > w as f32 - margin {
                break;
            }
            if rng.gen_bool(0.15) {
                left += glyph_w; // word gap
                continue;
            }
            let stroke = if rng.gen_bool(0.5) { 2.0 } else { 2.5 };
            let n = rng.gen_range(3..=5);
            for &(a, b) in SEGMENTS.choose_multiple(rng, n) {
                let pa = (left + a.0 * glyph_w, top + a.1 * glyph_h);
                let pb = (left + b.0 * glyph_w, top + b.1 * glyph_h);
                draw_segment(&mut mask, pa, pb, stroke);
            }
            left += glyph_w + rng.gen_range(2.0..4.0);
        }
        top += glyph_h + rng.gen_range(7.0..12.0);
    }
    mask
}

/// Renders one page and its exact glyph mask. Deterministic per seed.
pub fn gen_synthetic_doc(seed: u64, spec: &SynthSpec) -> (RasterImage, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width.max(1), spec.height.max(1));
    let ink = spec.text_color.unwrap_or_else(|| *INKS.choose(&mut rng).expect("inks"));
    let gt = render_text(w, h, &mut rng);

    let mut pixels: Vec<Rgb> = vec![spec.bg_color; w * h];
    let ink_luma = luma(ink);
    let candidates: Vec<Rgb> = STAINS.iter().copied().filter(|&s| dominant(s) != dominant(ink)).collect();
    for _ in 0..spec.stains {
        let base = *candidates.choose(&mut rng).expect("stain palette");
        let target = ink_luma + rng.gen_range(-0.03..0.06);
        let scale = target / luma(base);
        let color = base.map(|v| (v * scale).clamp(0.0, 1.0));
        let (cx, cy) = (rng.gen_range(0.0..w as f32), rng.gen_range(0.0..h as f32));
        let (rx, ry) = (rng.gen_range(14.0..30.0), rng.gen_range(14.0..30.0));
        let angle: f32 = rng.gen_range(0.0..std::f32::consts::PI);
        let (sin, cos) = angle.sin_cos();
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                let (u, v) = ((dx * cos + dy * sin) / rx, (-dx * sin + dy * cos) / ry);
                let d = (u * u + v * v).sqrt();
                // solid core, linear falloff over the outer fifth
                let alpha = ((1.0 - d) / 0.2).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    let p = &mut pixels[y * w + x];
                    for c in 0..3 {
                        p[c] = alpha * color[c] + (1.0 - alpha) * p[c];
                    }
                }
            }
        }
    }
    for (p, &t) in pixels.iter_mut().zip(gt.data()) {
        if t {
            *p = ink;
        }
    }
    let noise = (spec.noise > 0.0).then(|| Normal::new(0.0f32, spec.noise).expect("finite std"));
    let mut data = Vec::with_capacity(w * h * 3);
    for p in &pixels {
        for &v in p {
            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            data.push(v + n);
        }
    }
    (RasterImage::from_raw_clamped(w, h, 3, data), gt)
}
