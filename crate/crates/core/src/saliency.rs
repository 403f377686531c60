//! Privacy saliency from clipped cosine template matching.
//!
//! For every patch key `k_j` of a frame and a selection of templates, the
//! patch score is the mean over templates of `max(0, cos(τ, k_j))`. A template
//! holding several descriptors contributes the mean of its clipped cosines.
//! Patch scores are then reassembled into a pixel-resolution map.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{ClipManifest, PatchGeometry};
use crate::template_lib::SelectedTemplates;
use crate::tensor;

/// Per-frame grid of patch descriptors, `gh × gw × d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    pub grid_height: usize,
    pub grid_width: usize,
    pub dim: usize,
    pub vectors: Vec<f32>,
    pub geometry: PatchGeometry,
    pub frame_height: usize,
    pub frame_width: usize,
}

impl DescriptorGrid {
    pub fn new(
        vectors: Vec<f32>,
        dim: usize,
        geometry: PatchGeometry,
        frame_height: usize,
        frame_width: usize,
    ) -> Result<Self> {
        let (gh, gw) = geometry.grid_dims(frame_height, frame_width)?;
        if dim == 0 || vectors.len() != gh * gw * dim {
            return Err(Error::shape(format!(
                "{gh}×{gw}×{dim} descriptor grid needs {} values, got {}",
                gh * gw * dim,
                vectors.len()
            )));
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            let cell = i / dim;
            return Err(Error::invalid(format!(
                "non-finite descriptor value at cell ({}, {})",
                cell / gw,
                cell % gw
            )));
        }
        Ok(DescriptorGrid {
            grid_height: gh,
            grid_width: gw,
            dim,
            vectors,
            geometry,
            frame_height,
            frame_width,
        })
    }

    /// Loads a `gh × gw × d` f32 TNSR and checks it against the frame geometry.
    pub fn load(
        path: impl AsRef<Path>,
        geometry: PatchGeometry,
        frame_height: usize,
        frame_width: usize,
    ) -> Result<Self> {
        let path = path.as_ref();
        let t = tensor::read_tensor(path)?;
        let &[gh, gw, d] = t.shape.as_slice() else {
            return Err(Error::format(
                path,
                format!(
                    "expected gh×gw×d descriptor grid, found shape {:?}",
                    t.shape
                ),
            ));
        };
        let grid = DescriptorGrid::new(t.data.into_f32(), d, geometry, frame_height, frame_width)?;
        if (gh, gw) != (grid.grid_height, grid.grid_width) {
            return Err(Error::format(
                path,
                format!(
                    "grid is {gh}×{gw} but geometry implies {}×{}",
                    grid.grid_height, grid.grid_width
                ),
            ));
        }
        Ok(grid)
    }

    pub fn cells(&self) -> usize {
        self.grid_height * self.grid_width
    }

    pub fn vector(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.grid_width + col) * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        tensor::write_f32(
            path,
            &[self.grid_height, self.grid_width, self.dim],
            &self.vectors,
        )
    }
}

/// Patch-resolution scores, `gh × gw`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub grid_height: usize,
    pub grid_width: usize,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
    pub frame_index: usize,
}

impl SaliencyMap {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn save_tnsr(&self, path: impl AsRef<Path>) -> Result<()> {
        tensor::write_f32(path, &[self.height, self.width], &self.values)
    }

    /// Grayscale heat map, raw `[0, 1]` → `[0, 255]`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::frame::Frame {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.values.clone(),
        }
        .write_png(path)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reassembly {
    #[default]
    Nearest,
    Bilinear,
}

impl std::str::FromStr for Reassembly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Reassembly::Nearest),
            "bilinear" => Ok(Reassembly::Bilinear),
            other => Err(Error::invalid(format!(
                "unknown reassembly mode {other:?} (expected nearest or bilinear)"
            ))),
        }
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Unit-normalized template descriptors grouped per template.
struct PreparedTemplates {
    groups: Vec<Vec<Vec<f64>>>,
}

impl PreparedTemplates {
    fn new(selected: &SelectedTemplates, dim: usize) -> Result<Self> {
        if selected.dim() != dim {
            return Err(Error::shape(format!(
                "templates have dimension {} but descriptors have {dim}",
                selected.dim()
            )));
        }
        let groups = selected
            .groups()
            .iter()
            .map(|t| {
                t.descriptors
                    .iter()
                    .map(|d| {
                        let n = norm(d);
                        d.iter().map(|&x| x as f64 / n).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(PreparedTemplates { groups })
    }

    fn score(&self, key: &[f32]) -> f32 {
        let n = norm(key);
        if n <= 1e-12 {
            return 0.0;
        }
        let total: f64 = self
            .groups
            .iter()
            .map(|group| {
                let sum: f64 = group
                    .iter()
                    .map(|t| {
                        let dot: f64 = t.iter().zip(key).map(|(a, &b)| a * b as f64).sum();
                        (dot / n).clamp(0.0, 1.0)
                    })
                    .sum();
                sum / group.len() as f64
            })
            .sum();
        (total / self.groups.len() as f64).clamp(0.0, 1.0) as f32
    }
}

/// Clipped-cosine saliency of each grid cell against the selected templates.
///
/// Zero-norm patch keys score 0.
pub fn patch_saliency(grid: &DescriptorGrid, selected: &SelectedTemplates) -> Result<PatchScores> {
    let prepared = PreparedTemplates::new(selected, grid.dim)?;
    if let Some(i) = grid.vectors.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite descriptor value at index {i}"
        )));
    }
    let values = grid
        .vectors
        .par_chunks(grid.dim)
        .map(|key| prepared.score(key))
        .collect();
    Ok(PatchScores {
        grid_height: grid.grid_height,
        grid_width: grid.grid_width,
        values,
    })
}

/// Index of the nearest patch center along one axis; ties go to the later cell.
fn nearest_cell(pixel: usize, geometry: PatchGeometry, cells: usize) -> usize {
    let pos = pixel as f32 + 0.5 - geometry.patch as f32 / 2.0;
    let idx = (pos / geometry.stride as f32 + 0.5).floor();
    (idx.max(0.0) as usize).min(cells - 1)
}

/// Lower cell and interpolation weight toward the next cell along one axis.
fn bilinear_cell(pixel: usize, geometry: PatchGeometry, cells: usize) -> (usize, usize, f32) {
    let pos = pixel as f32 + 0.5 - geometry.patch as f32 / 2.0;
    let f = (pos / geometry.stride as f32).clamp(0.0, (cells - 1) as f32);
    let lo = f.floor() as usize;
    let hi = (lo + 1).min(cells - 1);
    (lo, hi, f - lo as f32)
}

/// Upsamples patch scores to an `h × w` pixel map.
///
/// Patch `(r, c)` is centered at `(r·stride + patch/2, c·stride + patch/2)`
/// and pixel `(y, x)` at `(y + 0.5, x + 0.5)`. Pixels beyond the outer
/// centers take the border cell's value.
pub fn reassemble(
    scores: &PatchScores,
    geometry: PatchGeometry,
    height: usize,
    width: usize,
    mode: Reassembly,
) -> Result<SaliencyMap> {
    let (gh, gw) = geometry.grid_dims(height, width)?;
    if (gh, gw) != (scores.grid_height, scores.grid_width) || scores.values.len() != gh * gw {
        return Err(Error::shape(format!(
            "{}×{} patch grid does not match geometry patch={} stride={} on {height}×{width} (expects {gh}×{gw})",
            scores.grid_height, scores.grid_width, geometry.patch, geometry.stride
        )));
    }
    let cell = |r: usize, c: usize| scores.values[r * gw + c];
    let mut values = vec![0.0f32; height * width];
    match mode {
        Reassembly::Nearest => {
            let cols: Vec<usize> = (0..width).map(|x| nearest_cell(x, geometry, gw)).collect();
            values
                .par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| {
                    let r = nearest_cell(y, geometry, gh);
                    for (out, &c) in row.iter_mut().zip(&cols) {
                        *out = cell(r, c);
                    }
                });
        }
        Reassembly::Bilinear => {
            let cols: Vec<_> = (0..width).map(|x| bilinear_cell(x, geometry, gw)).collect();
            values
                .par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| {
                    let (r0, r1, fy) = bilinear_cell(y, geometry, gh);
                    for (out, &(c0, c1, fx)) in row.iter_mut().zip(&cols) {
                        let top = cell(r0, c0) * (1.0 - fx) + cell(r0, c1) * fx;
                        let bottom = cell(r1, c0) * (1.0 - fx) + cell(r1, c1) * fx;
                        *out = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
                    }
                });
        }
    }
    Ok(SaliencyMap {
        height,
        width,
        values,
        frame_index: 0,
    })
}

pub fn frame_saliency(
    grid: &DescriptorGrid,
    selected: &SelectedTemplates,
    mode: Reassembly,
) -> Result<SaliencyMap> {
    let scores = patch_saliency(grid, selected)?;
    reassemble(
        &scores,
        grid.geometry,
        grid.frame_height,
        grid.frame_width,
        mode,
    )
}

/// One saliency map per frame of a clip; frame `t` depends only on grid `t`.
pub fn saliency_for_clip(
    manifest: &ClipManifest,
    selected: &SelectedTemplates,
    mode: Reassembly,
) -> Result<Vec<SaliencyMap>> {
    let (h, w, _) = crate::frame::probe_frame(manifest.frame_path(0))?;
    (0..manifest.frame_count())
        .into_par_iter()
        .map(|t| {
            let path = manifest.descriptor_path(t)?;
            let grid = DescriptorGrid::load(&path, manifest.patch_geometry, h, w)?;
            let mut map = frame_saliency(&grid, selected, mode)?;
            map.frame_index = t;
            Ok(map)
        })
        .collect()
}

/// Pixel-wise mean of a set of equally sized maps.
pub fn average_saliency(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::invalid("average saliency needs at least one map"))?;
    let mut sums = vec![0.0f64; first.values.len()];
    for (i, m) in maps.iter().enumerate() {
        if (m.height, m.width) != (first.height, first.width) {
            return Err(Error::shape(format!(
                "map {i} is {}×{}, expected {}×{}",
                m.height, m.width, first.height, first.width
            )));
        }
        for (s, &v) in sums.iter_mut().zip(&m.values) {
            *s += v as f64;
        }
    }
    let n = maps.len() as f64;
    Ok(SaliencyMap {
        height: first.height,
        width: first.width,
        values: sums.into_iter().map(|s| (s / n) as f32).collect(),
        frame_index: 0,
    })
}

/// Pairwise L1 distances between per-template average maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("template");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            out.push_str(n);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `v[i][j] = Σ_p |S̄_i(p) − S̄_j(p)|`; with `per_pixel` the sum is divided by
/// the pixel count.
pub fn template_similarity_matrix(
    avg_maps: &BTreeMap<String, SaliencyMap>,
    per_pixel: bool,
) -> Result<SimilarityMatrix> {
    if avg_maps.len() < 2 {
        return Err(Error::invalid(
            "similarity matrix needs at least two templates",
        ));
    }
    let names: Vec<String> = avg_maps.keys().cloned().collect();
    let maps: Vec<&SaliencyMap> = avg_maps.values().collect();
    let (h, w) = (maps[0].height, maps[0].width);
    for (n, m) in names.iter().zip(&maps) {
        if (m.height, m.width) != (h, w) {
            return Err(Error::shape(format!(
                "average map for {n} is {}×{}, expected {h}×{w}",
                m.height, m.width
            )));
        }
    }
    let k = maps.len();
    let mut values = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let mut v: f64 = maps[i]
                .values
                .iter()
                .zip(&maps[j].values)
                .map(|(&a, &b)| (a as f64 - b as f64).abs())
                .sum();
            if per_pixel {
                v /= (h * w) as f64;
            }
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(SimilarityMatrix { names, values })
}
