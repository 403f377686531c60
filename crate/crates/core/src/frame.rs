//! Channel-last f32 images and their on-disk forms (PNG or TNSR).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{self, TensorData};

/// A row-major `h × w × c` image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{height}×{width}×{channels} frame needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Frame {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Frame {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    /// Per-channel arithmetic mean.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = self.pixel_count().max(1) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    pub fn write_tnsr(&self, path: impl AsRef<Path>) -> Result<()> {
        tensor::write_f32(path, &self.shape(), &self.data)
    }

    /// Writes an 8-bit PNG (RGB for 3 channels, grayscale for 1).
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            c => {
                return Err(Error::invalid(format!(
                    "cannot write {c}-channel frame as PNG"
                )))
            }
        };
        image::save_buffer_with_format(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| image_error(path, e))
    }
}

/// Quantizes a `[0, 1]` value to 8 bits with round-half-up.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

fn is_tnsr(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("tnsr"))
}

/// Loads an RGB frame from PNG (u8 → x/255) or TNSR (`h × w × 3`, f32 or u8).
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    if is_tnsr(path) {
        let t = tensor::read_tensor(path)?;
        match t.shape.as_slice() {
            &[h, w, 3] => Frame::new(h, w, 3, t.data.into_f32()),
            other => Err(Error::format(
                path,
                format!("expected h×w×3 frame tensor, found shape {other:?}"),
            )),
        }
    } else {
        let img = image::open(path)
            .map_err(|e| image_error(path, e))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let data = img
            .into_raw()
            .into_iter()
            .map(|x| x as f32 / 255.0)
            .collect();
        Frame::new(h as usize, w as usize, 3, data)
    }
}

/// Frame dimensions `(h, w, c)` without decoding pixel data.
pub fn probe_frame(path: impl AsRef<Path>) -> Result<(usize, usize, usize)> {
    let path = path.as_ref();
    if is_tnsr(path) {
        let header = tensor::read_header(path)?;
        match header.shape.as_slice() {
            &[h, w, c] => Ok((h, w, c)),
            other => Err(Error::format(
                path,
                format!("expected h×w×c frame tensor, found shape {other:?}"),
            )),
        }
    } else {
        let reader = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?;
        let (w, h) = reader.into_dimensions().map_err(|e| image_error(path, e))?;
        Ok((h as usize, w as usize, 3))
    }
}

/// Loads a binary `h × w` mask; any nonzero value counts as masked.
pub fn load_mask(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<bool>)> {
    let path = path.as_ref();
    if is_tnsr(path) {
        let t = tensor::read_tensor(path)?;
        let (h, w) = match t.shape.as_slice() {
            &[h, w] | &[h, w, 1] => (h, w),
            other => {
                return Err(Error::format(
                    path,
                    format!("expected h×w mask tensor, found shape {other:?}"),
                ))
            }
        };
        let bits = match t.data {
            TensorData::U8(v) => v.into_iter().map(|x| x != 0).collect(),
            TensorData::F32(v) => v.into_iter().map(|x| x != 0.0).collect(),
        };
        Ok((h, w, bits))
    } else {
        let img = image::open(path)
            .map_err(|e| image_error(path, e))?
            .to_luma8();
        let (w, h) = img.dimensions();
        let bits = img.into_raw().into_iter().map(|x| x != 0).collect();
        Ok((h as usize, w as usize, bits))
    }
}

pub fn save_mask_png(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
    mask: &[bool],
) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        width as u32,
        height as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|e| image_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_8bit_grid() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..4 * 5 * 3)
            .map(|i| (i * 7 % 256) as f32 / 255.0)
            .collect();
        let frame = Frame::new(4, 5, 3, data).unwrap();
        let path = dir.path().join("f.png");
        frame.write_png(&path).unwrap();
        assert_eq!(probe_frame(&path).unwrap(), (4, 5, 3));
        assert_eq!(load_frame(&path).unwrap(), frame);
    }

    #[test]
    fn tnsr_frame_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frame = Frame::new(2, 3, 3, (0..18).map(|i| i as f32 / 17.0).collect()).unwrap();
        let path = dir.path().join("f.tnsr");
        frame.write_tnsr(&path).unwrap();
        assert_eq!(load_frame(&path).unwrap(), frame);
    }

    #[test]
    fn u8_tnsr_frame_is_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.tnsr");
        tensor::write_tensor(&path, &[1, 1, 3], &TensorData::U8(vec![0, 51, 255])).unwrap();
        let f = load_frame(&path).unwrap();
        assert_eq!(f.data, vec![0.0, 51.0 / 255.0, 1.0]);
    }

    #[test]
    fn mask_png_nonzero_is_masked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = vec![true, false, false, true, true, false];
        save_mask_png(&path, 2, 3, &mask).unwrap();
        assert_eq!(load_mask(&path).unwrap(), (2, 3, mask));
    }
}
