use crate::classical::reflect;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};

/// Square patch tiling of an image reflect-padded to `padded_size`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch: usize,
    pub stride: usize,
    /// Top-left corners in row-major order.
    pub offsets: Vec<(usize, usize)>,
    pub padded_size: (usize, usize),
}

fn tiles(len: usize, patch: usize, stride: usize) -> usize {
    if len <= patch {
        1
    } else {
        (len - patch).div_ceil(stride) + 1
    }
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::invalid(format!("need 0 < stride <= patch, got patch {patch}, stride {stride}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("cannot tile an empty image"));
        }
        let (nx, ny) = (tiles(width, patch, stride), tiles(height, patch, stride));
        let offsets = (0..ny).flat_map(|j| (0..nx).map(move |i| (i * stride, j * stride))).collect();
        let padded_size = ((nx - 1) * stride + patch, (ny - 1) * stride + patch);
        Ok(Self { patch, stride, offsets, padded_size })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Cuts `img` into the grid's patches after reflect padding on the right and bottom.
pub fn extract_patches(img: &RasterImage, grid: &PatchGrid) -> Vec<RasterImage> {
    let (w, h) = img.dims();
    let c = img.channels();
    let p = grid.patch;
    grid.offsets
        .iter()
        .map(|&(ox, oy)| {
            let mut data = Vec::with_capacity(p * p * c);
            for y in 0..p {
                let sy = reflect((oy + y) as isize, h);
                for x in 0..p {
                    let sx = reflect((ox + x) as isize, w);
                    data.extend_from_slice(&img.data()[(sy * w + sx) * c..][..c]);
                }
            }
            RasterImage::from_raw_clamped(p, p, c, data)
        })
        .collect()
}

pub fn extract_mask_patches(mask: &BinaryMask, grid: &PatchGrid) -> Vec<BinaryMask> {
    let (w, h) = mask.dims();
    grid.offsets
        .iter()
        .map(|&(ox, oy)| {
            BinaryMask::from_fn(grid.patch, grid.patch, |x, y| {
                mask.get(reflect((ox + x) as isize, w), reflect((oy + y) as isize, h))
            })
        })
        .collect()
}

/// Reassembles patches, averaging where they overlap, and crops to `out_size`.
pub fn stitch_patches(patches: &[RasterImage], grid: &PatchGrid, out_size: (usize, usize)) -> Result<RasterImage> {
    if patches.len() != grid.len() {
        return Err(Error::invalid(format!("{} patches for a grid of {}", patches.len(), grid.len())));
    }
    let (ow, oh) = out_size;
    if ow == 0 || oh == 0 || ow > grid.padded_size.0 || oh > grid.padded_size.1 {
        return Err(Error::invalid(format!("output size {ow}x{oh} does not fit the grid")));
    }
    let c = patches[0].channels();
    let (pw, ph) = grid.padded_size;
    let mut sum = vec![0.0f64; pw * ph * c];
    let mut count = vec![0u32; pw * ph];
    for (patch, &(ox, oy)) in patches.iter().zip(&grid.offsets) {
        if patch.dims() != (grid.patch, grid.patch) || patch.channels() != c {
            return Err(Error::invalid("patch shape does not match the grid"));
        }
        for y in 0..grid.patch {
            for x in 0..grid.patch {
                let i = (oy + y) * pw + ox + x;
                count[i] += 1;
                for ch in 0..c {
                    sum[i * c + ch] += patch.get(x, y, ch) as f64;
                }
            }
        }
    }
    let mut data = Vec::with_capacity(ow * oh * c);
    for y in 0..oh {
        for x in 0..ow {
            let i = y * pw + x;
            let n = count[i] as f64;
            data.extend(sum[i * c..(i + 1) * c].iter().map(|&s| (s / n) as f32));
        }
    }
    Ok(RasterImage::from_raw_clamped(ow, oh, c, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RasterImage::from_fn(w, h, c, |_, _, _| rng.gen()).unwrap()
    }

    #[test]
    fn single_patch_is_the_image() {
        let img = random_image(256, 256, 1, 1);
        let grid = PatchGrid::new(256, 256, 256, 256).unwrap();
        let patches = extract_patches(&img, &grid);
        assert_eq!(patches, vec![img]);
    }

    #[test]
    fn ceil_arithmetic() {
        let grid = PatchGrid::new(300, 300, 256, 256).unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid.padded_size, (512, 512));
        assert_eq!(grid.offsets, vec![(0, 0), (256, 0), (0, 256), (256, 256)]);
        let grid = PatchGrid::new(300, 100, 256, 192).unwrap();
        assert_eq!(grid.padded_size, (448, 256));
        assert!(PatchGrid::new(10, 10, 8, 9).is_err());
    }

    #[test]
    fn round_trips() {
        let img = random_image(300, 170, 3, 2);
        let grid = PatchGrid::new(300, 170, 64, 64).unwrap();
        let back = stitch_patches(&extract_patches(&img, &grid), &grid, (300, 170)).unwrap();
        assert_eq!(back, img);

        let img = random_image(300, 300, 1, 3);
        let grid = PatchGrid::new(300, 300, 256, 192).unwrap();
        let back = stitch_patches(&extract_patches(&img, &grid), &grid, (300, 300)).unwrap();
        assert!(back.max_abs_diff(&img).unwrap() <= 1e-6);
    }

    #[test]
    fn overlap_is_averaged() {
        let grid = PatchGrid::new(12, 8, 8, 4).unwrap();
        assert_eq!(grid.len(), 2);
        let patches = [RasterImage::filled(8, 8, 1, 0.0).unwrap(), RasterImage::filled(8, 8, 1, 1.0).unwrap()];
        let out = stitch_patches(&patches, &grid, (12, 8)).unwrap();
        assert_eq!(out.get(2, 3, 0), 0.0);
        assert_eq!(out.get(5, 3, 0), 0.5);
        assert_eq!(out.get(10, 3, 0), 1.0);
        assert!(stitch_patches(&patches[..1], &grid, (12, 8)).is_err());
    }

    #[test]
    fn mask_patches_follow_image_patches() {
        let mask = BinaryMask::from_fn(70, 40, |x, y| (x * 7 + y * 3) % 5 == 0);
        let grid = PatchGrid::new(70, 40, 32, 32).unwrap();
        let from_mask = extract_mask_patches(&mask, &grid);
        let from_image = extract_patches(&mask.to_raster(), &grid);
        for (m, i) in from_mask.iter().zip(&from_image) {
            assert_eq!(&m.to_raster(), i);
        }
    }
}
