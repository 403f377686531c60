//! Synthetic clips with analytically known saliency.
//!
//! Patch descriptors inside the saliency pattern are positive multiples of
//! the fixture template's basis vector (cosine exactly 1); everything else is
//! a negative all-ones vector, which has a negative cosine with every basis
//! template and so clips to 0. Frame 1 is seeded texture and each later frame
//! is the previous one warped along the generated flow.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{self, Frame};
use crate::manifest::{self, ClipManifest, PatchGeometry};
use crate::motion_noise::{self, FlowField};
use crate::rng::CounterRng;
use crate::saliency::DescriptorGrid;
use crate::template_lib::{Template, TemplateLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlowPattern {
    Zero,
    Constant {
        dx: f32,
        dy: f32,
    },
    /// Horizontal shear `u = k·(y − (h − 1)/2)`, `v = 0`.
    Shear {
        k: f32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SaliencyPattern {
    None,
    /// Disc in pixel coordinates, `center` as `[y, x]`.
    Blob {
        center: [f32; 2],
        radius: f32,
    },
    Full,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    #[default]
    Png,
    Tnsr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub patch: usize,
    pub stride: usize,
    pub flow: FlowPattern,
    pub saliency: SaliencyPattern,
    pub seed: u64,
    /// Library template names; the first is the one the pattern matches.
    #[serde(default = "default_templates")]
    pub templates: Vec<String>,
    #[serde(default)]
    pub frame_format: FrameFormat,
}

fn default_templates() -> Vec<String> {
    vec!["fixture".to_string()]
}

impl SynthSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn geometry(&self) -> Result<PatchGeometry> {
        PatchGeometry::new(self.patch, self.stride)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::invalid("synthetic clip needs at least one frame"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("descriptor dimension must be ≥ 2"));
        }
        if self.templates.is_empty() {
            return Err(Error::invalid(
                "synthetic library needs at least one template name",
            ));
        }
        if self.templates.len() > self.dim {
            return Err(Error::invalid(format!(
                "{} template names do not fit in dimension {}",
                self.templates.len(),
                self.dim
            )));
        }
        self.geometry()?.grid_dims(self.height, self.width)?;
        let bound = self.height.max(self.width) as f32;
        match self.flow {
            FlowPattern::Constant { dx, dy } if !(dx.abs() < bound && dy.abs() < bound) => {
                return Err(Error::invalid(format!(
                    "constant flow ({dx}, {dy}) exceeds frame size"
                )))
            }
            FlowPattern::Shear { k }
                if !(k.is_finite() && (k * self.height as f32 / 2.0).abs() < bound) =>
            {
                return Err(Error::invalid(format!("shear {k} exceeds frame size")))
            }
            _ => {}
        }
        if let SaliencyPattern::Blob { radius, center } = self.saliency {
            if !(radius.is_finite() && radius >= 0.0 && center.iter().all(|c| c.is_finite())) {
                return Err(Error::invalid("blob needs a finite center and radius ≥ 0"));
            }
        }
        Ok(())
    }

    /// Whether grid cell `(row, col)` carries the fixture descriptor.
    pub fn cell_is_salient(&self, row: usize, col: usize) -> bool {
        match self.saliency {
            SaliencyPattern::None => false,
            SaliencyPattern::Full => true,
            SaliencyPattern::Blob { center, radius } => {
                let Ok(g) = self.geometry() else { return false };
                let dy = g.center(row) - center[0];
                let dx = g.center(col) - center[1];
                dy * dy + dx * dx <= radius * radius
            }
        }
    }

    pub fn flow_field(&self) -> Result<FlowField> {
        let (h, w) = (self.height, self.width);
        match self.flow {
            FlowPattern::Zero => Ok(FlowField::zeros(h, w)),
            FlowPattern::Constant { dx, dy } => FlowField::constant(h, w, dx, dy),
            FlowPattern::Shear { k } => {
                let mid = (h as f32 - 1.0) / 2.0;
                let values = (0..h)
                    .flat_map(|y| std::iter::repeat_n([k * (y as f32 - mid), 0.0], w))
                    .flatten()
                    .collect();
                FlowField::new(h, w, values)
            }
        }
    }
}

/// Library of mutually orthogonal unit descriptors: template `i` is basis
/// vector `e_i` of `R^d`.
pub fn make_library<S: AsRef<str>>(dim: usize, names: &[S]) -> Result<TemplateLibrary> {
    if names.len() > dim {
        return Err(Error::invalid(format!(
            "{} names need dimension ≥ {}, got {dim}",
            names.len(),
            names.len()
        )));
    }
    TemplateLibrary::from_templates(
        names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let mut v = vec![0.0f32; dim];
                v[i] = 1.0;
                Template::from_descriptors(n.as_ref(), vec![v])
            })
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Descriptor grid for the spec's saliency pattern.
pub fn descriptor_grid(spec: &SynthSpec, frame_index: usize) -> Result<DescriptorGrid> {
    let g = spec.geometry()?;
    let (gh, gw) = g.grid_dims(spec.height, spec.width)?;
    let d = spec.dim;
    let rng = CounterRng::new(CounterRng::frame_seed(spec.seed, frame_index));
    let mut scales = vec![0.0f32; gh * gw];
    rng.fill_uniform(2, 0, &mut scales);
    let mut vectors = vec![0.0f32; gh * gw * d];
    for r in 0..gh {
        for c in 0..gw {
            let cell = r * gw + c;
            let scale = 0.5 + scales[cell];
            let v = &mut vectors[cell * d..(cell + 1) * d];
            if spec.cell_is_salient(r, c) {
                v[0] = scale;
            } else {
                v.fill(-scale);
            }
        }
    }
    DescriptorGrid::new(vectors, d, g, spec.height, spec.width)
}

fn texture(spec: &SynthSpec) -> Result<Frame> {
    let rng = CounterRng::new(spec.seed);
    let mut u = vec![0.0f32; spec.height * spec.width * 3];
    rng.fill_uniform(1, 0, &mut u);
    // on the 8-bit grid so PNG storage is lossless
    let data = u
        .into_iter()
        .map(|x| (x * 256.0).floor().min(255.0) / 255.0)
        .collect();
    Frame::new(spec.height, spec.width, 3, data)
}

fn pixel_mask(spec: &SynthSpec) -> Vec<bool> {
    let mut mask = vec![false; spec.height * spec.width];
    for y in 0..spec.height {
        for x in 0..spec.width {
            mask[y * spec.width + x] = match spec.saliency {
                SaliencyPattern::None => false,
                SaliencyPattern::Full => true,
                SaliencyPattern::Blob { center, radius } => {
                    let (dy, dx) = (y as f32 + 0.5 - center[0], x as f32 + 0.5 - center[1]);
                    dy * dy + dx * dx <= radius * radius
                }
            };
        }
    }
    mask
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub manifest_path: PathBuf,
    pub manifest: ClipManifest,
    pub library_dir: PathBuf,
    pub library: TemplateLibrary,
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Writes frames, descriptor grids, flows, masks, a manifest and a template
/// library under `out`.
pub fn make_clip(spec: &SynthSpec, out: impl AsRef<Path>) -> Result<SynthClip> {
    spec.validate()?;
    let out = out.as_ref();
    for sub in ["frames", "keys", "flow", "masks"] {
        mkdir(&out.join(sub))?;
    }
    let flow = spec.flow_field()?;
    let mask = pixel_mask(spec);
    let ext = match spec.frame_format {
        FrameFormat::Png => "png",
        FrameFormat::Tnsr => "tnsr",
    };

    let mut frames = Vec::with_capacity(spec.frames);
    let mut frame_paths = Vec::new();
    let mut descriptor_paths = Vec::new();
    let mut flow_paths = Vec::new();
    let mut mask_paths = Vec::new();
    let mut current = texture(spec)?;
    for t in 0..spec.frames {
        if t > 0 {
            current = motion_noise::warp_step(&current, &flow)?;
            let rel = PathBuf::from(format!("flow/{t:04}.tnsr"));
            flow.save(out.join(&rel))?;
            flow_paths.push(rel);
        }
        let rel = PathBuf::from(format!("frames/{t:04}.{ext}"));
        match spec.frame_format {
            FrameFormat::Png => current.write_png(out.join(&rel))?,
            FrameFormat::Tnsr => current.write_tnsr(out.join(&rel))?,
        }
        frame_paths.push(rel);

        let rel = PathBuf::from(format!("keys/{t:04}.tnsr"));
        descriptor_grid(spec, t)?.save(out.join(&rel))?;
        descriptor_paths.push(rel);

        let rel = PathBuf::from(format!("masks/{t:04}.png"));
        frame::save_mask_png(out.join(&rel), spec.height, spec.width, &mask)?;
        mask_paths.push(rel);

        frames.push(current.clone());
    }
    let stats = manifest::dataset_stats(&frames)?;
    let manifest = ClipManifest {
        clip_id: format!("synth-{}", spec.seed),
        frame_paths,
        descriptor_paths: Some(descriptor_paths),
        flow_paths: Some(flow_paths),
        mask_paths: Some(mask_paths),
        dataset_mean: stats.mean,
        dataset_std: stats.std,
        patch_geometry: spec.geometry()?,
        base_dir: out.to_path_buf(),
    };
    let manifest_path = out.join("manifest.json");
    manifest.save(&manifest_path)?;
    manifest.validate()?;

    let library = make_library(spec.dim, &spec.templates)?;
    let library_dir = out.join("library");
    library.save(&library_dir)?;

    let spec_json =
        serde_json::to_string_pretty(spec).map_err(|e| Error::invalid(e.to_string()))?;
    let spec_path = out.join("synth_spec.json");
    fs::write(&spec_path, spec_json + "\n").map_err(|e| Error::io(&spec_path, e))?;

    Ok(SynthClip {
        manifest_path,
        manifest,
        library_dir,
        library,
    })
}
