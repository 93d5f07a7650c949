//! PNG and PGM renderings of masks and image magnitudes. Frames are laid
//! out side by side with a one-pixel gray separator.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ksampler_core::forward::{DynamicImage, SampleMode, SamplingSet};

use crate::error::{Error, Result};

/// `n1 x n2` grayscale pixels of frame `t`, 255 where sampled.
pub fn frame_pixels(lambda: &SamplingSet, t: usize) -> Vec<u8> {
    let (n1, n2) = (lambda.n1(), lambda.n2());
    let mut px = vec![0u8; n1 * n2];
    for &i in lambda.frame(t) {
        match lambda.mode() {
            SampleMode::Lines => (0..n1).for_each(|r| px[r * n2 + i] = 255),
            SampleMode::Points => px[i] = 255,
        }
    }
    px
}

fn strip(n1: usize, n2: usize, frames: &[Vec<u8>]) -> (u32, u32, Vec<u8>) {
    let nf = frames.len();
    let width = nf * n2 + nf - 1;
    let mut px = vec![96u8; n1 * width];
    for (t, f) in frames.iter().enumerate() {
        let x0 = t * (n2 + 1);
        for r in 0..n1 {
            px[r * width + x0..r * width + x0 + n2].copy_from_slice(&f[r * n2..(r + 1) * n2]);
        }
    }
    (width as u32, n1 as u32, px)
}

fn mask_strip(lambda: &SamplingSet) -> (u32, u32, Vec<u8>) {
    let frames: Vec<Vec<u8>> = (0..lambda.nf()).map(|t| frame_pixels(lambda, t)).collect();
    strip(lambda.n1(), lambda.n2(), &frames)
}

/// Magnitudes scaled by the volume maximum.
fn image_strip(x: &DynamicImage) -> (u32, u32, Vec<u8>) {
    let dims = x.tensor().dims();
    let (n1, n2) = (dims[0], dims[1]);
    let mags: Vec<Vec<f64>> = (0..x.nf()).map(|t| x.frame_magnitude(t).into_data()).collect();
    let peak = mags.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let frames: Vec<Vec<u8>> = mags
        .iter()
        .map(|m| m.iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect())
        .collect();
    strip(n1, n2, &frames)
}

pub fn mask_png(path: &Path, lambda: &SamplingSet) -> Result<()> {
    let (w, h, px) = mask_strip(lambda);
    write_png(path, w, h, &px)
}

pub fn mask_pgm(path: &Path, lambda: &SamplingSet) -> Result<()> {
    let (w, h, px) = mask_strip(lambda);
    write_pgm(path, w, h, &px)
}

pub fn image_png(path: &Path, x: &DynamicImage) -> Result<()> {
    let (w, h, px) = image_strip(x);
    write_png(path, w, h, &px)
}

pub fn image_pgm(path: &Path, x: &DynamicImage) -> Result<()> {
    let (w, h, px) = image_strip(x);
    write_pgm(path, w, h, &px)
}

fn write_pgm(path: &Path, w: u32, h: u32, px: &[u8]) -> Result<()> {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(px);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_png(path: &Path, w: u32, h: u32, px: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), w, h);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    writer.write_image_data(px).map_err(|e| Error::format(path, e.to_string()))
}
