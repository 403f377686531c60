//! Selective blend of source frames toward motion-consistent noise,
//! weighted per pixel by saliency: `O = I + S·(N − I)`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::manifest::ClipManifest;
use crate::motion_noise::{self, NoiseMode, NoiseSequence};
use crate::saliency::{self, Reassembly, SaliencyMap};
use crate::template_lib::{SelectedTemplates, TemplateLibrary};
use crate::tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationConfig {
    pub template_names: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default)]
    pub reassembly: Reassembly,
    #[serde(default = "default_gain")]
    pub saliency_gain: f32,
    /// Treat every template descriptor as a separate template.
    #[serde(default)]
    pub flatten: bool,
}

fn default_gain() -> f32 {
    1.0
}

impl ObfuscationConfig {
    pub fn new(template_names: Vec<String>, seed: u64) -> Self {
        ObfuscationConfig {
            template_names,
            seed,
            noise_mode: NoiseMode::default(),
            reassembly: Reassembly::default(),
            saliency_gain: 1.0,
            flatten: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.template_names.is_empty() {
            return Err(Error::invalid("at least one template must be selected"));
        }
        if !self.saliency_gain.is_finite() || self.saliency_gain < 0.0 {
            return Err(Error::invalid(format!(
                "saliency gain must be finite and ≥ 0, got {}",
                self.saliency_gain
            )));
        }
        Ok(())
    }

    pub fn select(&self, library: &TemplateLibrary) -> Result<SelectedTemplates> {
        let selected = library.select(&self.template_names)?;
        Ok(if self.flatten {
            selected.flattened()
        } else {
            selected
        })
    }
}

fn check_unit(name: &str, values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::invalid(format!(
            "{name} value {} at index {i} is outside [0, 1]",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// Blends one pixel channel. `s = 0` returns `i` and `s = 1` returns `n`
/// exactly; the result never leaves `[min(i, n), max(i, n)]`.
#[inline]
pub fn blend_value(i: f32, s: f32, n: f32) -> f32 {
    if s >= 1.0 {
        return n;
    }
    let (lo, hi) = if i <= n { (i, n) } else { (n, i) };
    (i + s * (n - i)).clamp(lo, hi)
}

pub fn blend_frame(source: &Frame, saliency: &SaliencyMap, noise: &Frame) -> Result<Frame> {
    if source.dims() != noise.dims() {
        return Err(Error::shape(format!(
            "source is {:?} but noise is {:?}",
            source.dims(),
            noise.dims()
        )));
    }
    if (saliency.height, saliency.width) != (source.height, source.width) {
        return Err(Error::shape(format!(
            "saliency is {}×{} but frame is {}×{}",
            saliency.height, saliency.width, source.height, source.width
        )));
    }
    check_unit("source", &source.data)?;
    check_unit("noise", &noise.data)?;
    check_unit("saliency", &saliency.values)?;
    let ch = source.channels;
    let data = source
        .data
        .chunks_exact(ch)
        .zip(noise.data.chunks_exact(ch))
        .zip(&saliency.values)
        .flat_map(|((i, n), &s)| i.iter().zip(n).map(move |(&i, &n)| blend_value(i, s, n)))
        .collect();
    Frame::new(source.height, source.width, ch, data)
}

/// `clamp(gain · S, 0, 1)`; gain 1 leaves the map untouched.
pub fn apply_gain(map: &SaliencyMap, gain: f32) -> SaliencyMap {
    if gain == 1.0 {
        return map.clone();
    }
    SaliencyMap {
        values: map
            .values
            .iter()
            .map(|&v| (v * gain).clamp(0.0, 1.0))
            .collect(),
        ..map.clone()
    }
}

#[derive(Debug, Clone)]
pub struct ObfuscationOutput {
    pub frames: Vec<Frame>,
    pub saliency: Vec<SaliencyMap>,
    pub noise: NoiseSequence,
}

/// Where cached stage outputs came from, for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheReport {
    pub saliency_hit: bool,
    pub noise_hit: bool,
}

/// Directory of reusable saliency and noise tensors keyed by input digests.
#[derive(Debug, Clone)]
pub struct StageCache {
    dir: PathBuf,
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(StageCache { dir })
    }

    fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{key}.tnsr"))
    }

    fn load(&self, stage: &str, key: &str) -> Result<Option<tensor::Tensor>> {
        let p = self.path(stage, key);
        if p.is_file() {
            tensor::read_tensor(&p).map(Some)
        } else {
            Ok(None)
        }
    }

    fn store(&self, stage: &str, key: &str, shape: &[usize], values: &[f32]) -> Result<()> {
        tensor::write_f32(self.path(stage, key), shape, values)
    }
}

fn saliency_key(
    manifest: &ClipManifest,
    selected: &SelectedTemplates,
    mode: Reassembly,
) -> Result<String> {
    let mut h = digest::Hasher::new();
    h.field("stage", "saliency");
    h.field("reassembly", &format!("{mode:?}"));
    h.field("geometry", &format!("{:?}", manifest.patch_geometry));
    for t in 0..manifest.frame_count() {
        h.field(
            "frame-dims",
            &format!("{:?}", crate::frame::probe_frame(manifest.frame_path(t))?),
        );
        h.field("grid", &digest::file_sha256(manifest.descriptor_path(t)?)?);
    }
    for t in selected.groups() {
        h.field("template", &t.name);
        for d in &t.descriptors {
            h.floats(d);
        }
    }
    Ok(h.finish())
}

fn noise_key(manifest: &ClipManifest, seed: u64, mode: NoiseMode) -> Result<String> {
    let mut h = digest::Hasher::new();
    h.field("stage", "noise");
    h.field("mode", mode.as_str());
    h.field("seed", &seed.to_string());
    h.floats(&manifest.dataset_mean);
    h.floats(&manifest.dataset_std);
    h.field("frames", &manifest.frame_count().to_string());
    h.field(
        "dims",
        &format!("{:?}", crate::frame::probe_frame(manifest.frame_path(0))?),
    );
    if mode.needs_flow() {
        for t in 1..manifest.frame_count() {
            h.field("flow", &digest::file_sha256(manifest.flow_path(t)?)?);
        }
    }
    Ok(h.finish())
}

fn saliency_stage(
    manifest: &ClipManifest,
    selected: &SelectedTemplates,
    mode: Reassembly,
    cache: Option<&StageCache>,
    report: &mut CacheReport,
) -> Result<Vec<SaliencyMap>> {
    let key = match cache {
        Some(_) => Some(saliency_key(manifest, selected, mode)?),
        None => None,
    };
    if let (Some(c), Some(k)) = (cache, &key) {
        if let Some(t) = c.load("saliency", k)? {
            if let &[n, h, w] = t.shape.as_slice() {
                report.saliency_hit = true;
                let values = t.data.into_f32();
                return Ok(values
                    .chunks_exact(h * w)
                    .take(n)
                    .enumerate()
                    .map(|(i, v)| SaliencyMap {
                        height: h,
                        width: w,
                        values: v.to_vec(),
                        frame_index: i,
                    })
                    .collect());
            }
        }
    }
    let maps = saliency::saliency_for_clip(manifest, selected, mode)?;
    if let (Some(c), Some(k)) = (cache, &key) {
        let (h, w) = (maps[0].height, maps[0].width);
        let flat: Vec<f32> = maps.iter().flat_map(|m| m.values.iter().copied()).collect();
        c.store("saliency", k, &[maps.len(), h, w], &flat)?;
    }
    Ok(maps)
}

fn noise_stage(
    manifest: &ClipManifest,
    seed: u64,
    mode: NoiseMode,
    cache: Option<&StageCache>,
    report: &mut CacheReport,
) -> Result<NoiseSequence> {
    let key = match cache {
        Some(_) => Some(noise_key(manifest, seed, mode)?),
        None => None,
    };
    if let (Some(c), Some(k)) = (cache, &key) {
        if let Some(t) = c.load("noise", k)? {
            if let &[n, h, w, 3] = t.shape.as_slice() {
                report.noise_hit = true;
                let values = t.data.into_f32();
                let frames = values
                    .chunks_exact(h * w * 3)
                    .take(n)
                    .map(|v| Frame::new(h, w, 3, v.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                return Ok(NoiseSequence { frames, seed, mode });
            }
        }
    }
    let seq = motion_noise::synthesize(manifest, seed, mode)?;
    if let (Some(c), Some(k)) = (cache, &key) {
        let (h, w, _) = seq.frames[0].dims();
        let flat: Vec<f32> = seq
            .frames
            .iter()
            .flat_map(|f| f.data.iter().copied())
            .collect();
        c.store("noise", k, &[seq.frames.len(), h, w, 3], &flat)?;
    }
    Ok(seq)
}

/// Runs saliency, noise and blend over a whole clip.
pub fn obfuscate_clip(
    manifest: &ClipManifest,
    library: &TemplateLibrary,
    config: &ObfuscationConfig,
) -> Result<ObfuscationOutput> {
    obfuscate_clip_cached(manifest, library, config, None).map(|(out, _)| out)
}

pub fn obfuscate_clip_cached(
    manifest: &ClipManifest,
    library: &TemplateLibrary,
    config: &ObfuscationConfig,
    cache: Option<&Path>,
) -> Result<(ObfuscationOutput, CacheReport)> {
    config.validate()?;
    let cache = cache.map(StageCache::new).transpose()?;
    let mut report = CacheReport::default();
    let t = manifest.frame_count();
    let selected = config
        .select(library)
        .map_err(|e| e.in_stage("template selection"))?;
    let clock = Instant::now();
    let saliency = saliency_stage(
        manifest,
        &selected,
        config.reassembly,
        cache.as_ref(),
        &mut report,
    )
    .map_err(|e| e.in_stage("saliency"))?;
    log_stage("saliency", t, clock, report.saliency_hit);
    let clock = Instant::now();
    let noise = noise_stage(
        manifest,
        config.seed,
        config.noise_mode,
        cache.as_ref(),
        &mut report,
    )
    .map_err(|e| e.in_stage("noise"))?;
    log_stage("noise", t, clock, report.noise_hit);
    let clock = Instant::now();
    let frames = blend_clip(manifest, &saliency, &noise, config.saliency_gain)
        .map_err(|e| e.in_stage("blend"))?;
    log_stage("blend", t, clock, false);
    Ok((
        ObfuscationOutput {
            frames,
            saliency,
            noise,
        },
        report,
    ))
}

/// Logs `frames` processed since `since` at info level.
pub fn log_stage(stage: &str, frames: usize, since: Instant, cached: bool) {
    let secs = since.elapsed().as_secs_f64();
    let rate = if secs > 0.0 {
        frames as f64 / secs
    } else {
        f64::INFINITY
    };
    let note = if cached { " (cached)" } else { "" };
    log::info!(
        "{stage}: {frames} frames in {:.1} ms, {rate:.1} frames/s{note}",
        secs * 1e3
    );
}

fn blend_clip(
    manifest: &ClipManifest,
    saliency: &[SaliencyMap],
    noise: &NoiseSequence,
    gain: f32,
) -> Result<Vec<Frame>> {
    let t = manifest.frame_count();
    if saliency.len() != t || noise.frames.len() != t {
        return Err(Error::shape(format!(
            "clip has {t} frames but {} saliency maps and {} noise frames",
            saliency.len(),
            noise.frames.len()
        )));
    }
    (0..t)
        .into_par_iter()
        .map(|k| {
            let source = manifest.load_frame(k)?;
            blend_frame(&source, &apply_gain(&saliency[k], gain), &noise.frames[k])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, v: f32) -> SaliencyMap {
        SaliencyMap {
            height: h,
            width: w,
            values: vec![v; h * w],
            frame_index: 0,
        }
    }

    #[test]
    fn zero_saliency_returns_source() {
        let i = Frame::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let n = Frame::filled(1, 2, 3, 0.9);
        assert_eq!(blend_frame(&i, &map(1, 2, 0.0), &n).unwrap(), i);
    }

    #[test]
    fn full_saliency_returns_noise() {
        let i = Frame::new(1, 2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let n = Frame::new(1, 2, 3, vec![0.7, 0.71, 0.93, 0.05, 0.333, 1.0]).unwrap();
        assert_eq!(blend_frame(&i, &map(1, 2, 1.0), &n).unwrap(), n);
    }

    #[test]
    fn half_way_blend() {
        let o = blend_frame(
            &Frame::filled(1, 1, 3, 0.2),
            &map(1, 1, 0.5),
            &Frame::filled(1, 1, 3, 0.8),
        )
        .unwrap();
        for v in o.data {
            assert!((v - 0.5).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_and_range_errors() {
        let i = Frame::filled(2, 2, 3, 0.5);
        assert!(blend_frame(&i, &map(2, 3, 0.5), &i).is_err());
        assert!(blend_frame(&i, &map(2, 2, 0.5), &Frame::filled(2, 3, 3, 0.5)).is_err());
        assert!(blend_frame(&i, &map(2, 2, 1.5), &i).is_err());
        assert!(blend_frame(&Frame::filled(2, 2, 3, -0.1), &map(2, 2, 0.5), &i).is_err());
    }

    #[test]
    fn gain_scales_and_clamps() {
        let m = SaliencyMap {
            height: 1,
            width: 3,
            values: vec![0.2, 0.5, 0.8],
            frame_index: 0,
        };
        assert_eq!(apply_gain(&m, 1.0), m);
        assert_eq!(apply_gain(&m, 2.0).values, vec![0.4, 1.0, 1.0]);
        assert_eq!(apply_gain(&m, 0.0).values, vec![0.0; 3]);
    }

    #[test]
    fn config_validation() {
        assert!(ObfuscationConfig::new(vec![], 0).validate().is_err());
        let mut c = ObfuscationConfig::new(vec!["hair".into()], 0);
        c.saliency_gain = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn blend_is_monotone_in_saliency() {
        let (i, n) = (0.137f32, 0.861f32);
        let mut prev = blend_value(i, 0.0, n);
        for k in 1..=1000 {
            let o = blend_value(i, k as f32 / 1000.0, n);
            assert!(o >= prev);
            prev = o;
        }
        let (i, n) = (0.9f32, 0.05f32);
        let mut prev = blend_value(i, 0.0, n);
        for k in 1..=1000 {
            let o = blend_value(i, k as f32 / 1000.0, n);
            assert!(o <= prev);
            prev = o;
        }
    }
}
