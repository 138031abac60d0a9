//! DIBCO evaluation metrics and Levenshtein OCR scoring.
//!
//! All pixel metrics take text (`true`) as the positive class.

mod levenshtein;
mod report;
mod skeleton;

pub use levenshtein::{levenshtein, levenshtein_percent};
pub use report::{aggregate, Aggregate, MetricReport, ReportRow, REPORT_HEADER};
pub use skeleton::{components, skeletonize};

use crate::error::{Error, Result};
use crate::raster::{same_dims, BinaryMask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> Result<f64> {
        if self.tp + self.fn_ == 0 {
            return Err(Error::UndefinedMetric("recall needs at least one ground-truth text pixel"));
        }
        Ok(self.tp as f64 / (self.tp + self.fn_) as f64)
    }
}

pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    same_dims(pred.dims(), gt.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn harmonic_percent(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * p * r / (p + r)
    }
}

/// F-measure in percent.
pub fn f_measure(c: &ConfusionCounts) -> Result<f64> {
    let recall = c.recall()?;
    if c.tp == 0 {
        return Ok(0.0);
    }
    Ok(harmonic_percent(c.precision(), recall))
}

/// Pseudo F-measure: recall measured against the skeleton of the ground truth.
pub fn pseudo_f_measure(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let c = confusion(pred, gt)?;
    c.recall()?;
    let skel = skeletonize(gt);
    let hit = pred.data().iter().zip(skel.data()).filter(|&(&p, &s)| p && s).count();
    let p_recall = hit as f64 / skel.count() as f64;
    Ok(harmonic_percent(c.precision(), p_recall))
}

/// PSNR in dB with `C = 1`; identical masks give `f64::INFINITY`.
pub fn psnr(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    psnr_with_contrast(pred, gt, 1.0)
}

pub fn psnr_with_contrast(pred: &BinaryMask, gt: &BinaryMask, contrast: f64) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let differing = pred.data().iter().zip(gt.data()).filter(|(a, b)| a != b).count();
    if differing == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = differing as f64 / pred.data().len() as f64;
    Ok(10.0 * (contrast * contrast / mse).log10())
}

/// Number of 8x8 ground-truth blocks holding both text and background.
/// Partial blocks on the right and bottom edges count.
pub fn nubn(gt: &BinaryMask) -> usize {
    let (w, h) = gt.dims();
    let mut count = 0;
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let (mut text, mut back) = (false, false);
            for y in by..(by + 8).min(h) {
                for x in bx..(bx + 8).min(w) {
                    if gt.get(x, y) {
                        text = true;
                    } else {
                        back = true;
                    }
                }
            }
            count += (text && back) as usize;
        }
    }
    count
}

fn raw_drd_weights() -> ([[f64; 5]; 5], f64) {
    let mut w = [[0.0; 5]; 5];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 2.0, j as f64 - 2.0);
            if di != 0.0 || dj != 0.0 {
                *v = 1.0 / (di * di + dj * dj).sqrt();
                total += *v;
            }
        }
    }
    (w, total)
}

/// Normalized 5x5 reciprocal-distance weights, center zero.
pub fn drd_weights() -> [[f64; 5]; 5] {
    let (mut w, total) = raw_drd_weights();
    for v in w.iter_mut().flatten() {
        *v /= total;
    }
    w
}

/// Distance reciprocal distortion. Neighbours outside the image contribute nothing.
///
/// Weights are accumulated unnormalized and divided once at the end, so a flip
/// whose whole neighbourhood disagrees scores exactly 1.
pub fn drd(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let blocks = nubn(gt);
    if blocks == 0 {
        return Err(Error::UndefinedMetric("DRD needs a ground truth with a non-uniform 8x8 block"));
    }
    let (weights, weight_total) = raw_drd_weights();
    let (w, h) = gt.dims();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = pred.get(x, y);
            if p == gt.get(x, y) {
                continue;
            }
            let mut flip = 0.0;
            for (i, row) in weights.iter().enumerate() {
                let ny = y as isize + i as isize - 2;
                if ny < 0 || ny as usize >= h {
                    continue;
                }
                for (j, &wt) in row.iter().enumerate() {
                    let nx = x as isize + j as isize - 2;
                    if nx < 0 || nx as usize >= w {
                        continue;
                    }
                    if (i, j) != (2, 2) && gt.get(nx as usize, ny as usize) != p {
                        flip += wt;
                    }
                }
            }
            total += flip / weight_total;
        }
    }
    Ok(total / blocks as f64)
}

/// FM, p-FM, PSNR and DRD for one prediction.
pub fn evaluate(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricReport> {
    let c = confusion(pred, gt)?;
    Ok(MetricReport {
        fm: f_measure(&c)?,
        p_fm: pseudo_f_measure(pred, gt)?,
        psnr: psnr(pred, gt)?,
        drd: drd(pred, gt)?,
        lev: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn confusion_fixture() {
        let gt = mask(&["##.", "##.", "..."]);
        let pred = mask(&["##.", "#..", "#.."]);
        let c = confusion(&pred, &gt).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (3, 1, 1, 4));
        assert_eq!(c.total(), 9);
        assert!((f_measure(&c).unwrap() - 75.0).abs() < 1e-12);

        let same = confusion(&gt, &gt).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        assert_eq!(f_measure(&same).unwrap(), 100.0);
        let inv = confusion(&gt.not(), &gt).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
        assert_eq!(f_measure(&inv).unwrap(), 0.0);
    }

    #[test]
    fn f_measure_needs_text() {
        let gt = BinaryMask::filled(3, 3, false);
        let c = confusion(&gt, &gt).unwrap();
        assert!(matches!(f_measure(&c), Err(Error::UndefinedMetric(_))));
        assert!(confusion(&gt, &BinaryMask::filled(2, 3, false)).is_err());
    }

    #[test]
    fn pseudo_f_measure_rewards_skeleton_coverage() {
        // Thick horizontal bar; prediction keeps only the middle row.
        let gt = BinaryMask::from_fn(20, 9, |x, y| (2..18).contains(&x) && (3..6).contains(&y));
        let skel = skeletonize(&gt);
        let pred = BinaryMask::from_fn(20, 9, |x, y| skel.get(x, y) || ((2..18).contains(&x) && y == 4));
        assert!(pred.is_subset_of(&gt));
        let c = confusion(&pred, &gt).unwrap();
        let fm = f_measure(&c).unwrap();
        let pfm = pseudo_f_measure(&pred, &gt).unwrap();
        assert_eq!(pfm, 100.0); // precision 1, pRecall 1
        assert!(pfm > fm);

        assert_eq!(pseudo_f_measure(&gt, &gt).unwrap(), 100.0);
        assert_eq!(pseudo_f_measure(&BinaryMask::filled(20, 9, false), &gt).unwrap(), 0.0);
    }

    #[test]
    fn psnr_cases() {
        let a = BinaryMask::filled(10, 10, false);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let mut b = a.clone();
        b.set(3, 4, true);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr(&a, &a.not()).unwrap(), 0.0);
    }

    #[test]
    fn nubn_cases() {
        assert_eq!(nubn(&BinaryMask::filled(16, 16, false)), 0);
        let mut m = BinaryMask::filled(8, 8, false);
        m.set(4, 4, true);
        assert_eq!(nubn(&m), 1);
        // partial edge block
        let mut m = BinaryMask::filled(10, 8, false);
        m.set(9, 0, true);
        assert_eq!(nubn(&m), 1);
    }

    #[test]
    fn drd_weight_matrix() {
        let w = drd_weights();
        let total: f64 = w.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(w[2][2], 0.0);
        assert!((w[2][1] / w[0][0] - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn drd_single_flip_against_opposite_neighbourhood() {
        // GT background everywhere except a text block far from the flip, so NUBN = 1.
        let mut gt = BinaryMask::filled(16, 8, false);
        gt.set(15, 7, true);
        let mut pred = gt.clone();
        pred.set(4, 4, true);
        assert_eq!(nubn(&gt), 1);
        assert_eq!(drd(&pred, &gt).unwrap(), 1.0);
        assert_eq!(drd(&gt, &gt).unwrap(), 0.0);
        assert!(drd(&BinaryMask::filled(16, 8, false), &gt).is_ok());
        let uniform = BinaryMask::filled(16, 8, false);
        assert!(matches!(drd(&uniform, &uniform), Err(Error::UndefinedMetric(_))));
    }
}
