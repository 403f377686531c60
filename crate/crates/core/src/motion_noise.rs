//! Motion-consistent noise.
//!
//! Frame 1 is drawn uniformly on `[μ − σ, μ + σ]` per channel; later frames
//! are gathered from earlier noise along backward optical flow with
//! nearest-neighbor sampling and border clamping, so every value is a copy of
//! a frame-1 value.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::manifest::ClipManifest;
use crate::rng::CounterRng;
use crate::tensor;

/// Backward flow `(u, v)` in pixels mapping frame `t` to frame `t − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width * 2 {
            return Err(Error::shape(format!(
                "{height}×{width}×2 flow needs {} values, got {}",
                height * width * 2,
                values.len()
            )));
        }
        let bound = height.max(width) as f32;
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || v.abs() >= bound)
        {
            let px = i / 2;
            return Err(Error::invalid(format!(
                "flow at ({}, {}) is {} (must be finite with magnitude < {bound})",
                px / width,
                px % width,
                values[i]
            )));
        }
        Ok(FlowField {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField {
            height,
            width,
            values: vec![0.0; height * width * 2],
        }
    }

    pub fn constant(height: usize, width: usize, u: f32, v: f32) -> Result<Self> {
        let values = std::iter::repeat_n([u, v], height * width)
            .flatten()
            .collect();
        FlowField::new(height, width, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let t = tensor::read_tensor(path)?;
        let &[h, w, 2] = t.shape.as_slice() else {
            return Err(Error::format(
                path,
                format!("expected h×w×2 flow, found shape {:?}", t.shape),
            ));
        };
        FlowField::new(h, w, t.data.into_f32())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        tensor::write_f32(path, &[self.height, self.width, 2], &self.values)
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> (f32, f32) {
        let i = (row * self.width + col) * 2;
        (self.values[i], self.values[i + 1])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `N_t = warp(N_{t−1}, v_t)`.
    #[default]
    WarpIterative,
    /// Flows composed back to frame 1, then one gather from `N_1`.
    WarpComposed,
    /// Independent draw per frame.
    Iid,
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::WarpIterative => "warp",
            NoiseMode::WarpComposed => "composed",
            NoiseMode::Iid => "iid",
        }
    }

    pub fn needs_flow(self) -> bool {
        !matches!(self, NoiseMode::Iid)
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warp" | "warp_iterative" => Ok(NoiseMode::WarpIterative),
            "composed" | "warp_composed" => Ok(NoiseMode::WarpComposed),
            "iid" => Ok(NoiseMode::Iid),
            other => Err(Error::invalid(format!(
                "unknown noise mode {other:?} (expected warp, composed or iid)"
            ))),
        }
    }
}

/// Distribution, seed and mode of a noise sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub seed: u64,
    pub mode: NoiseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSequence {
    pub frames: Vec<Frame>,
    pub seed: u64,
    pub mode: NoiseMode,
}

fn check_stats(mean: [f32; 3], std: [f32; 3]) -> Result<()> {
    for c in 0..3 {
        if !mean[c].is_finite() || !std[c].is_finite() {
            return Err(Error::invalid(format!(
                "noise statistics must be finite (channel {c}: mean {}, std {})",
                mean[c], std[c]
            )));
        }
        if std[c] < 0.0 {
            return Err(Error::invalid(format!("std[{c}] = {} is negative", std[c])));
        }
    }
    Ok(())
}

/// Seeded noise frame, each value uniform on `[mean_c − std_c, mean_c + std_c]`
/// then clamped to `[0, 1]`. Draws are addressed row-major, channel fastest.
pub fn init_noise(
    height: usize,
    width: usize,
    mean: [f32; 3],
    std: [f32; 3],
    seed: u64,
) -> Result<Frame> {
    check_stats(mean, std)?;
    let rng = CounterRng::new(seed);
    let lo = [0, 1, 2].map(|c| mean[c] - std[c]);
    let hi = [0, 1, 2].map(|c| mean[c] + std[c]);
    let mut data = vec![0.0f32; height * width * 3];
    let row_len = width * 3;
    if row_len > 0 {
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(y, row)| {
                let mut draws = rng.uniforms(0, (y * row_len) as u64);
                for px in row.chunks_exact_mut(3) {
                    for c in 0..3 {
                        let u = draws.next_f32();
                        let v = (lo[c] + u * (hi[c] - lo[c])).clamp(lo[c], hi[c]);
                        px[c] = v.clamp(0.0, 1.0);
                    }
                }
            });
    }
    Frame::new(height, width, 3, data)
}

#[inline]
fn clamp_index(pos: f32, len: usize) -> usize {
    let r = pos.round();
    if r <= 0.0 {
        0
    } else {
        (r as usize).min(len - 1)
    }
}

/// `next(p) = prev(clamp(round(p + v(p))))`, per channel.
pub fn warp_step(prev: &Frame, flow: &FlowField) -> Result<Frame> {
    if (prev.height, prev.width) != (flow.height, flow.width) {
        return Err(Error::shape(format!(
            "noise frame is {}×{} but flow is {}×{}",
            prev.height, prev.width, flow.height, flow.width
        )));
    }
    let (h, w, ch) = prev.dims();
    let mut data = vec![0.0f32; prev.data.len()];
    if w > 0 {
        data.par_chunks_mut(w * ch)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..w {
                    let (u, v) = flow.at(y, x);
                    let sx = clamp_index(x as f32 + u, w);
                    let sy = clamp_index(y as f32 + v, h);
                    let src = (sy * w + sx) * ch;
                    row[x * ch..(x + 1) * ch].copy_from_slice(&prev.data[src..src + ch]);
                }
            });
    }
    Frame::new(h, w, ch, data)
}

/// Gathers frame `flows.len() + 1` straight from `first` by following the
/// flows back to frame 1. Positions accumulate unrounded; rounding and
/// clamping happen only when sampling a flow field or the source.
fn warp_composed(first: &Frame, flows: &[&FlowField]) -> Frame {
    let (h, w, ch) = first.dims();
    let mut data = vec![0.0f32; first.data.len()];
    if w > 0 {
        data.par_chunks_mut(w * ch)
            .enumerate()
            .for_each(|(y, row)| {
                for x in 0..w {
                    let (mut px, mut py) = (x as f32, y as f32);
                    for flow in flows.iter().rev() {
                        let (u, v) = flow.at(clamp_index(py, h), clamp_index(px, w));
                        px += u;
                        py += v;
                    }
                    let src = (clamp_index(py, h) * w + clamp_index(px, w)) * ch;
                    row[x * ch..(x + 1) * ch].copy_from_slice(&first.data[src..src + ch]);
                }
            });
    }
    Frame {
        height: h,
        width: w,
        channels: ch,
        data,
    }
}

/// Noise for `frames` frames given the `frames − 1` backward flows
/// (`flows[i]` maps frame `i + 1` to frame `i`, 0-based).
pub fn synthesize_with_flows(
    height: usize,
    width: usize,
    frames: usize,
    flows: &[FlowField],
    spec: &NoiseSpec,
) -> Result<NoiseSequence> {
    let NoiseSpec {
        mean,
        std,
        seed,
        mode,
    } = *spec;
    if frames == 0 {
        return Err(Error::invalid("noise sequence needs at least one frame"));
    }
    if mode.needs_flow() && flows.len() != frames - 1 {
        return Err(Error::invalid(format!(
            "{} mode needs {} flow fields, got {}",
            mode.as_str(),
            frames - 1,
            flows.len()
        )));
    }
    for (i, f) in flows.iter().enumerate() {
        if (f.height, f.width) != (height, width) {
            return Err(Error::shape(format!(
                "flow {i} is {}×{}, expected {height}×{width}",
                f.height, f.width
            )));
        }
    }
    let first = init_noise(height, width, mean, std, seed)?;
    let mut out = Vec::with_capacity(frames);
    match mode {
        NoiseMode::WarpIterative => {
            out.push(first);
            for flow in flows {
                let next = warp_step(out.last().expect("non-empty"), flow)?;
                out.push(next);
            }
        }
        NoiseMode::WarpComposed => {
            let refs: Vec<&FlowField> = flows.iter().collect();
            let rest: Vec<Frame> = (1..frames)
                .map(|t| warp_composed(&first, &refs[..t]))
                .collect();
            out.push(first);
            out.extend(rest);
        }
        NoiseMode::Iid => {
            out.push(first);
            for k in 1..frames {
                out.push(init_noise(
                    height,
                    width,
                    mean,
                    std,
                    CounterRng::frame_seed(seed, k),
                )?);
            }
        }
    }
    Ok(NoiseSequence {
        frames: out,
        seed,
        mode,
    })
}

/// Noise sequence for a clip, using its dataset statistics and flows.
pub fn synthesize(manifest: &ClipManifest, seed: u64, mode: NoiseMode) -> Result<NoiseSequence> {
    let t = manifest.frame_count();
    let (h, w, _) = crate::frame::probe_frame(manifest.frame_path(0))?;
    let flows = if mode.needs_flow() && t > 1 {
        (1..t)
            .map(|k| FlowField::load(manifest.flow_path(k)?))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let spec = NoiseSpec {
        mean: manifest.dataset_mean,
        std: manifest.dataset_std,
        seed,
        mode,
    };
    synthesize_with_flows(h, w, t, &flows, &spec)
}
