//! JSON clip manifest tying frames, descriptor grids, flows and masks together.
//!
//! ```json
//! {
//!   "clip_id": "walk_01",
//!   "frame_paths": ["frames/000.png", "frames/001.png"],
//!   "descriptor_paths": ["keys/000.tnsr", "keys/001.tnsr"],
//!   "flow_paths": ["flow/001.tnsr"],
//!   "mask_paths": ["masks/000.png", "masks/001.png"],
//!   "dataset_mean": [0.45, 0.42, 0.39],
//!   "dataset_std": [0.22, 0.21, 0.21],
//!   "patch_geometry": { "patch": 8, "stride": 8 }
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `flow_paths[i]`
//! holds the backward flow of frame `i + 2` (1-based), mapping it to frame
//! `i + 1`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{self, Frame};
use crate::tensor::{self, DType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub patch: usize,
    pub stride: usize,
}

impl PatchGeometry {
    pub fn new(patch: usize, stride: usize) -> Result<Self> {
        let g = PatchGeometry { patch, stride };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        if self.patch == 0 || self.stride == 0 {
            return Err(Error::invalid(format!(
                "patch geometry needs patch ≥ 1 and stride ≥ 1, got patch={} stride={}",
                self.patch, self.stride
            )));
        }
        Ok(())
    }

    /// Number of patches along an axis of `len` pixels: `floor((len − patch) / stride) + 1`.
    pub fn cells(&self, len: usize) -> Option<usize> {
        if self.stride == 0 || len < self.patch {
            None
        } else {
            Some((len - self.patch) / self.stride + 1)
        }
    }

    pub fn grid_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        match (self.cells(height), self.cells(width)) {
            (Some(gh), Some(gw)) => Ok((gh, gw)),
            _ => Err(Error::shape(format!(
                "{height}×{width} frame is smaller than one {}px patch",
                self.patch
            ))),
        }
    }

    /// Pixel-space coordinate of the center of cell `index`.
    pub fn center(&self, index: usize) -> f32 {
        (index * self.stride) as f32 + self.patch as f32 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: String,
    pub frame_paths: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor_paths: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_paths: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_paths: Option<Vec<PathBuf>>,
    pub dataset_mean: [f32; 3],
    pub dataset_std: [f32; 3],
    pub patch_geometry: PatchGeometry,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Shapes established while validating a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub descriptor_dim: Option<usize>,
}

impl ClipManifest {
    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn frame_path(&self, t: usize) -> PathBuf {
        self.resolve(&self.frame_paths[t])
    }

    pub fn load_frame(&self, t: usize) -> Result<Frame> {
        frame::load_frame(self.frame_path(t))
    }

    pub fn load_frames(&self) -> Result<Vec<Frame>> {
        (0..self.frame_count())
            .map(|t| self.load_frame(t))
            .collect()
    }

    pub fn descriptor_path(&self, t: usize) -> Result<PathBuf> {
        let paths = self.descriptor_paths.as_ref().ok_or_else(|| {
            Error::invalid(format!("clip {} has no descriptor_paths", self.clip_id))
        })?;
        paths.get(t).map(|p| self.resolve(p)).ok_or_else(|| {
            Error::invalid(format!(
                "clip {} has no descriptor grid for frame {t}",
                self.clip_id
            ))
        })
    }

    /// Path of the flow mapping frame `t` to `t − 1` (0-based `t ≥ 1`).
    pub fn flow_path(&self, t: usize) -> Result<PathBuf> {
        let paths = self
            .flow_paths
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("clip {} has no flow_paths", self.clip_id)))?;
        t.checked_sub(1)
            .and_then(|i| paths.get(i))
            .map(|p| self.resolve(p))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "clip {} has no flow field for frame {t}",
                    self.clip_id
                ))
            })
    }

    pub fn mask_path(&self, t: usize) -> Result<PathBuf> {
        let paths = self
            .mask_paths
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("clip {} has no mask_paths", self.clip_id)))?;
        paths.get(t).map(|p| self.resolve(p)).ok_or_else(|| {
            Error::invalid(format!("clip {} has no mask for frame {t}", self.clip_id))
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks every manifest invariant, probing file headers only.
    pub fn validate(&self) -> Result<ClipShape> {
        self.patch_geometry.check()?;
        for c in 0..3 {
            let (m, s) = (self.dataset_mean[c], self.dataset_std[c]);
            if !m.is_finite() || !(0.0..=1.0).contains(&m) {
                return Err(Error::invalid(format!(
                    "dataset_mean[{c}] = {m} is outside [0, 1]"
                )));
            }
            if !s.is_finite() || !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!(
                    "dataset_std[{c}] = {s} is outside [0, 1]"
                )));
            }
        }
        let t = self.frame_count();
        if t == 0 {
            return Err(Error::invalid("frame_paths is empty"));
        }

        let mut dims = None;
        for (i, p) in self.frame_paths.iter().enumerate() {
            let (h, w, c) = frame::probe_frame(self.resolve(p))?;
            if c != 3 {
                return Err(Error::shape(format!(
                    "frame_paths[{i}] ({}) has {c} channels, expected 3",
                    p.display()
                )));
            }
            match dims {
                None => dims = Some((h, w)),
                Some(d) if d != (h, w) => {
                    return Err(Error::shape(format!(
                        "frame_paths[{i}] ({}) is {h}×{w}, expected {}×{}",
                        p.display(),
                        d.0,
                        d.1
                    )))
                }
                _ => {}
            }
        }
        let (height, width) = dims.unwrap_or_default();
        let (grid_height, grid_width) = self.patch_geometry.grid_dims(height, width)?;

        let mut descriptor_dim = None;
        if let Some(paths) = &self.descriptor_paths {
            if paths.len() != t {
                return Err(Error::invalid(format!(
                    "expected {t} descriptor grids, found {}",
                    paths.len()
                )));
            }
            for (i, p) in paths.iter().enumerate() {
                let header = tensor::read_header(self.resolve(p))?;
                let bad = |msg: String| {
                    Error::shape(format!("descriptor_paths[{i}] ({}): {msg}", p.display()))
                };
                if header.dtype != DType::F32 {
                    return Err(bad("descriptor grids must be f32".into()));
                }
                let &[gh, gw, d] = header.shape.as_slice() else {
                    return Err(bad(format!(
                        "expected gh×gw×d, found shape {:?}",
                        header.shape
                    )));
                };
                if (gh, gw) != (grid_height, grid_width) {
                    return Err(bad(format!(
                        "grid is {gh}×{gw}, geometry patch={} stride={} on {height}×{width} frames implies {grid_height}×{grid_width}",
                        self.patch_geometry.patch, self.patch_geometry.stride
                    )));
                }
                if d == 0 {
                    return Err(bad("descriptor dimension is 0".into()));
                }
                match descriptor_dim {
                    None => descriptor_dim = Some(d),
                    Some(d0) if d0 != d => {
                        return Err(bad(format!("descriptor dim {d} differs from {d0}")))
                    }
                    _ => {}
                }
            }
        }

        if let Some(paths) = &self.flow_paths {
            let expected = t - 1;
            if paths.len() != expected {
                return Err(Error::invalid(format!(
                    "expected {expected} flow fields for {t} frames, found {}",
                    paths.len()
                )));
            }
            for (i, p) in paths.iter().enumerate() {
                let header = tensor::read_header(self.resolve(p))?;
                if header.dtype != DType::F32 || header.shape != [height, width, 2] {
                    return Err(Error::shape(format!(
                        "flow_paths[{i}] ({}): expected f32 {height}×{width}×2, found {:?} {:?}",
                        p.display(),
                        header.dtype,
                        header.shape
                    )));
                }
            }
        }

        if let Some(paths) = &self.mask_paths {
            if paths.len() != t {
                return Err(Error::invalid(format!(
                    "expected {t} masks, found {}",
                    paths.len()
                )));
            }
            for (i, p) in paths.iter().enumerate() {
                let (mh, mw) = probe_mask(&self.resolve(p))?;
                if (mh, mw) != (height, width) {
                    return Err(Error::shape(format!(
                        "mask_paths[{i}] ({}) is {mh}×{mw}, expected {height}×{width}",
                        p.display()
                    )));
                }
            }
        }

        Ok(ClipShape {
            frames: t,
            height,
            width,
            grid_height,
            grid_width,
            descriptor_dim,
        })
    }
}

fn probe_mask(path: &Path) -> Result<(usize, usize)> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("tnsr"))
    {
        let header = tensor::read_header(path)?;
        match header.shape.as_slice() {
            &[h, w] | &[h, w, 1] => Ok((h, w)),
            other => Err(Error::format(
                path,
                format!("expected h×w mask, found shape {other:?}"),
            )),
        }
    } else {
        let (h, w, _) = frame::probe_frame(path)?;
        Ok((h, w))
    }
}

/// Parses and fully validates a manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ClipManifest> {
    let manifest = parse_manifest(path)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Parses a manifest without touching the files it lists.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<ClipManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: ClipManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: byte_offset(&text, e.line(), e.column()) as u64,
        message: e.to_string(),
    })?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    text.split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + column.saturating_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

/// Per-channel mean and population standard deviation over every pixel of
/// every frame.
pub fn dataset_stats(frames: &[Frame]) -> Result<DatasetStats> {
    if frames.is_empty() {
        return Err(Error::invalid("dataset statistics need at least one frame"));
    }
    let mut count = 0u64;
    let mut mean = [0.0f64; 3];
    let mut m2 = [0.0f64; 3];
    // Welford, per channel
    for f in frames {
        if f.channels != 3 {
            return Err(Error::shape(format!(
                "expected RGB frames, found {} channels",
                f.channels
            )));
        }
        for px in f.data.chunks_exact(3) {
            count += 1;
            let n = count as f64;
            for c in 0..3 {
                let x = px[c] as f64;
                let delta = x - mean[c];
                mean[c] += delta / n;
                m2[c] += delta * (x - mean[c]);
            }
        }
    }
    let n = count as f64;
    Ok(DatasetStats {
        mean: mean.map(|m| m as f32),
        std: m2.map(|v| (v / n).max(0.0).sqrt() as f32),
    })
}

pub fn compute_dataset_stats<P: AsRef<Path>>(frame_paths: &[P]) -> Result<DatasetStats> {
    if frame_paths.is_empty() {
        return Err(Error::invalid("dataset statistics need at least one frame"));
    }
    let frames = frame_paths
        .iter()
        .map(frame::load_frame)
        .collect::<Result<Vec<_>>>()?;
    dataset_stats(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_224_patch8_stride8_is_28() {
        let g = PatchGeometry::new(8, 8).unwrap();
        assert_eq!(g.grid_dims(224, 224).unwrap(), (28, 28));
        assert_eq!(PatchGeometry::new(16, 8).unwrap().cells(224), Some(27));
        assert_eq!(g.cells(7), None);
    }

    #[test]
    fn constant_frames_have_zero_std() {
        let frames = vec![Frame::filled(4, 4, 3, 0.5); 3];
        let s = dataset_stats(&frames).unwrap();
        assert_eq!(s.mean, [0.5; 3]);
        assert_eq!(s.std, [0.0; 3]);
    }

    #[test]
    fn half_black_half_white_is_mean_half_std_half() {
        let mut f = Frame::filled(2, 2, 3, 0.0);
        for c in 0..3 {
            f.set(0, 0, c, 1.0);
            f.set(0, 1, c, 1.0);
        }
        let s = dataset_stats(&[f]).unwrap();
        for c in 0..3 {
            assert!((s.mean[c] - 0.5).abs() < 1e-7);
            assert!((s.std[c] - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(dataset_stats(&[]).is_err());
        assert!(compute_dataset_stats::<&str>(&[]).is_err());
    }

    #[test]
    fn json_parse_error_carries_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, "{\n  \"clip_id\": 3,\n}").unwrap();
        let err = parse_manifest(&p).unwrap_err();
        assert!(
            matches!(err, Error::Parse { offset, .. } if offset > 0),
            "{err}"
        );
    }
}
