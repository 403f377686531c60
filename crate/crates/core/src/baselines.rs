//! Full-frame reference obfuscations: block pixelation, Gaussian blur and
//! mean-filled masks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineKind {
    Pixelate { block: usize },
    Blur { kappa: usize, sigma: f32 },
    Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    #[serde(flatten)]
    pub kind: BaselineKind,
    /// Square side to resample frames to before obfuscating.
    #[serde(default)]
    pub resize_to: Option<usize>,
}

impl BaselineSpec {
    /// κ = 13, σ = 10.
    pub const WEAK_BLUR: BaselineKind = BaselineKind::Blur {
        kappa: 13,
        sigma: 10.0,
    };
    /// κ = 21, σ = 10.
    pub const STRONG_BLUR: BaselineKind = BaselineKind::Blur {
        kappa: 21,
        sigma: 10.0,
    };

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BaselineKind::Pixelate { block: 0 } => {
                Err(Error::invalid("pixelate block size must be ≥ 1"))
            }
            BaselineKind::Blur { kappa, sigma } => check_blur(kappa, sigma),
            _ => Ok(()),
        }?;
        if self.resize_to == Some(0) {
            return Err(Error::invalid("resize target must be ≥ 1"));
        }
        Ok(())
    }

    /// Applies the baseline to one frame; `mask` is required for the mask kind.
    pub fn apply(&self, frame: &Frame, mask: Option<&[bool]>) -> Result<Frame> {
        self.validate()?;
        let resized;
        let input = match self.resize_to {
            Some(side) if (frame.height, frame.width) != (side, side) => {
                resized = resize(frame, side, side)?;
                &resized
            }
            _ => frame,
        };
        match self.kind {
            BaselineKind::Pixelate { block } => pixelate(input, block),
            BaselineKind::Blur { kappa, sigma } => gaussian_blur(input, kappa, sigma),
            BaselineKind::Mask => {
                let mask =
                    mask.ok_or_else(|| Error::invalid("mask baseline needs a mask per frame"))?;
                if self.resize_to.is_some() {
                    return Err(Error::invalid("mask baseline does not support resizing"));
                }
                mask_fill(input, mask)
            }
        }
    }
}

fn check_blur(kappa: usize, sigma: f32) -> Result<()> {
    if kappa == 0 || kappa.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "blur kernel size must be odd and ≥ 1, got {kappa}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "blur sigma must be > 0, got {sigma}"
        )));
    }
    Ok(())
}

/// Replaces each `block × block` tile by its per-channel mean. Tiles on the
/// right and bottom edges average over their actual extent.
pub fn pixelate(frame: &Frame, block: usize) -> Result<Frame> {
    if block == 0 {
        return Err(Error::invalid("pixelate block size must be ≥ 1"));
    }
    let (h, w, ch) = frame.dims();
    let mut out = frame.clone();
    let tile_rows: Vec<usize> = (0..h).step_by(block).collect();
    let rows: Vec<Vec<f32>> = tile_rows
        .par_iter()
        .map(|&y0| {
            let y1 = (y0 + block).min(h);
            let mut band = vec![0.0f32; (y1 - y0) * w * ch];
            for x0 in (0..w).step_by(block) {
                let x1 = (x0 + block).min(w);
                let mut sums = vec![0.0f64; ch];
                for y in y0..y1 {
                    for x in x0..x1 {
                        for (c, s) in sums.iter_mut().enumerate() {
                            *s += frame.get(y, x, c) as f64;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                let means: Vec<f32> = sums.iter().map(|s| (s / n) as f32).collect();
                for y in y0..y1 {
                    for x in x0..x1 {
                        let base = ((y - y0) * w + x) * ch;
                        band[base..base + ch].copy_from_slice(&means);
                    }
                }
            }
            band
        })
        .collect();
    for (band, &y0) in rows.iter().zip(&tile_rows) {
        let start = y0 * w * ch;
        out.data[start..start + band.len()].copy_from_slice(band);
    }
    Ok(out)
}

/// Sampled Gaussian of `kappa` taps, normalized to sum to 1.
pub fn gaussian_kernel(kappa: usize, sigma: f32) -> Result<Vec<f64>> {
    check_blur(kappa, sigma)?;
    let r = (kappa / 2) as f64;
    let s2 = 2.0 * (sigma as f64).powi(2);
    let raw: Vec<f64> = (0..kappa)
        .map(|i| (-((i as f64 - r).powi(2)) / s2).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|g| g / total).collect())
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(frame: &Frame, kappa: usize, sigma: f32) -> Result<Frame> {
    let kernel = gaussian_kernel(kappa, sigma)?;
    let (h, w, ch) = frame.dims();
    let r = (kappa / 2) as isize;
    if h == 0 || w == 0 {
        return Ok(frame.clone());
    }

    let mut horizontal = vec![0.0f64; h * w * ch];
    horizontal
        .par_chunks_mut(w * ch)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                for c in 0..ch {
                    row[x * ch + c] = kernel
                        .iter()
                        .enumerate()
                        .map(|(k, g)| {
                            g * frame.get(y, reflect(x as isize + k as isize - r, w), c) as f64
                        })
                        .sum();
                }
            }
        });

    let mut data = vec![0.0f32; h * w * ch];
    data.par_chunks_mut(w * ch)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                for c in 0..ch {
                    let acc: f64 = kernel
                        .iter()
                        .enumerate()
                        .map(|(k, g)| {
                            let yy = reflect(y as isize + k as isize - r, h);
                            g * horizontal[(yy * w + x) * ch + c]
                        })
                        .sum();
                    row[x * ch + c] = acc as f32;
                }
            }
        });
    Frame::new(h, w, ch, data)
}

/// Fills masked pixels with the per-channel mean of the masked region.
pub fn mask_fill(frame: &Frame, mask: &[bool]) -> Result<Frame> {
    if mask.len() != frame.pixel_count() {
        return Err(Error::shape(format!(
            "mask has {} pixels, frame has {}",
            mask.len(),
            frame.pixel_count()
        )));
    }
    let ch = frame.channels;
    let mut sums = vec![0.0f64; ch];
    let mut count = 0usize;
    for (px, &m) in frame.data.chunks_exact(ch).zip(mask) {
        if m {
            count += 1;
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
    }
    if count == 0 {
        return Ok(frame.clone());
    }
    let means: Vec<f32> = sums.iter().map(|s| (s / count as f64) as f32).collect();
    let mut out = frame.clone();
    for (px, &m) in out.data.chunks_exact_mut(ch).zip(mask) {
        if m {
            px.copy_from_slice(&means);
        }
    }
    Ok(out)
}

/// Bilinear (triangle filter) resample of an RGB frame.
pub fn resize(frame: &Frame, height: usize, width: usize) -> Result<Frame> {
    if frame.channels != 3 {
        return Err(Error::invalid("only RGB frames can be resized"));
    }
    let img =
        image::Rgb32FImage::from_raw(frame.width as u32, frame.height as u32, frame.data.clone())
            .ok_or_else(|| Error::shape("frame buffer does not match its dimensions"))?;
    let out = image::imageops::resize(
        &img,
        width as u32,
        height as u32,
        image::imageops::FilterType::Triangle,
    );
    let data = out
        .into_raw()
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Frame::new(height, width, 3, data)
}
