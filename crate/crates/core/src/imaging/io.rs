//! PNG / binary PGM persistence.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageBuffer, ImageEncoder, Luma, Rgb, RgbImage};

use super::raster::{BinaryMask, GrayImage, ProbImage};
use crate::error::{Error, Result};

fn is_pgm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "pgm" || e == "pnm"
    )
}

/// Reads an 8-bit grayscale image; color inputs are converted to luma.
pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let img = image::open(path.as_ref())?.into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::from_vec(w as usize, h as usize, img.into_raw())
}

/// Writes PNG, or binary PGM (P5) when the extension is `.pgm`.
pub fn write_gray(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (image.width() as u32, image.height() as u32);
    if is_pgm(path) {
        let out = BufWriter::new(File::create(path)?);
        PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(image.data(), w, h, ExtendedColorType::L8)?;
        return Ok(());
    }
    let buf: ImageBuffer<Luma<u8>, &[u8]> = ImageBuffer::from_raw(w, h, image.data())
        .ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(BinaryMask::from_gray(&read_gray(path)?))
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_gray(&mask.to_gray(), path)
}

/// Probability maps are stored as 16-bit PNG with value `round(p · 65535)`.
pub fn write_prob(map: &ProbImage, path: impl AsRef<Path>) -> Result<()> {
    let raw: Vec<u16> = map
        .data()
        .iter()
        .map(|&p| (p * 65535.0).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
            .ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_prob(path: impl AsRef<Path>) -> Result<ProbImage> {
    let img = image::open(path.as_ref())?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    ProbImage::from_vec(w as usize, h as usize, data)
}

pub fn write_rgb(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    image.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Gray image promoted to RGB, for drawing overlays.
pub fn to_rgb(image: &GrayImage) -> RgbImage {
    RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let v = image.get(x as usize, y as usize);
        Rgb([v, v, v])
    })
}
