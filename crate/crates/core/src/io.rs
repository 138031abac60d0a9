//! PNG boundary: 8-bit files in, normalized rasters out.
//!
//! Masks follow the DIBCO ground-truth convention on disk (text black, background
//! white) while in memory text is `true`.

use std::path::Path;

use image::{ColorType, DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RasterImage};

pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let img = image::open(path.as_ref())?;
    Ok(from_dynamic(img))
}

pub fn from_dynamic(img: DynamicImage) -> RasterImage {
    let gray = matches!(
        img.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    let (w, h) = (img.width() as usize, img.height() as usize);
    if gray {
        let buf = img.into_luma8();
        let data = buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        RasterImage::new(w, h, 1, data).expect("8-bit data is in range")
    } else {
        let buf = img.into_rgb8();
        let data = buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        RasterImage::new(w, h, 3, data).expect("8-bit data is in range")
    }
}

pub fn to_bytes(img: &RasterImage) -> Vec<u8> {
    img.data().iter().map(|&v| (v * 255.0).round() as u8).collect()
}

pub fn write_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = to_bytes(img);
    match img.channels() {
        1 => GrayImage::from_raw(w, h, bytes).expect("buffer size").save(path)?,
        _ => RgbImage::from_raw(w, h, bytes).expect("buffer size").save(path)?,
    }
    Ok(())
}

/// Reads a ground-truth style mask: dark pixels (< 128) are text.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let buf = image::open(path)?.into_luma8();
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let data = buf.into_raw().into_iter().map(|v| v < 128).collect();
    BinaryMask::new(w, h, data).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask.data().iter().map(|&t| if t { 0u8 } else { 255 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer size")
        .save(path)?;
    Ok(())
}
