use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use veilkit_core::baselines::{BaselineKind, BaselineSpec};
use veilkit_core::frame::{self, Frame};
use veilkit_core::manifest::{self, compute_dataset_stats};
use veilkit_core::metrics::{self, MetricRecord};
use veilkit_core::motion_noise::{self, NoiseMode};
use veilkit_core::obfuscator::{log_stage, obfuscate_clip_cached};
use veilkit_core::saliency::{self, template_similarity_matrix, Reassembly, SaliencyMap};
use veilkit_core::synth::{self, SynthSpec};
use veilkit_core::template_lib::{build_template, LIBRARY_FILE};
use veilkit_core::{
    load_manifest, ClipManifest, Error, ObfuscationConfig, Result, TemplateLibrary,
};

use crate::cli::*;
use crate::provenance::RunRecord;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Obfuscate(a) => obfuscate(a),
        Command::Saliency(a) => saliency_maps(a),
        Command::Noise(a) => noise(a),
        Command::Baseline(b) => baseline(b),
        Command::Template(TemplateCommand::Build {
            library,
            name,
            manifest,
            frame,
            patches,
            replace,
        }) => template_build(library, name, manifest, *frame, patches, *replace),
        Command::Template(TemplateCommand::List { library }) => template_list(library),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth_clip(a),
        Command::Stats(a) => stats(a),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem(t: usize) -> String {
    format!("{t:04}")
}

fn write_pngs(dir: &Path, frames: &[Frame]) -> Result<()> {
    mkdir(dir)?;
    frames
        .par_iter()
        .enumerate()
        .try_for_each(|(t, f)| f.write_png(dir.join(format!("{}.png", stem(t)))))
}

fn write_maps(dir: &Path, maps: &[SaliencyMap], png: bool) -> Result<()> {
    mkdir(dir)?;
    maps.par_iter().enumerate().try_for_each(|(t, m)| {
        m.save_tnsr(dir.join(format!("{}.tnsr", stem(t))))?;
        if png {
            m.save_png(dir.join(format!("{}.png", stem(t))))?;
        }
        Ok(())
    })
}

fn write_noise(dir: &Path, frames: &[Frame], png: bool) -> Result<()> {
    mkdir(dir)?;
    frames.par_iter().enumerate().try_for_each(|(t, f)| {
        f.write_tnsr(dir.join(format!("{}.tnsr", stem(t))))?;
        if png {
            f.write_png(dir.join(format!("{}.png", stem(t))))?;
        }
        Ok(())
    })
}

fn mode_name(m: NoiseMode) -> &'static str {
    m.as_str()
}

fn reassembly_name(r: Reassembly) -> &'static str {
    match r {
        Reassembly::Nearest => "nearest",
        Reassembly::Bilinear => "bilinear",
    }
}

fn obfuscate(a: &ObfuscateArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let library = TemplateLibrary::load(&a.library)?;
    let mut config = ObfuscationConfig::new(a.select.clone(), a.seed);
    config.noise_mode = a.mode.into();
    config.reassembly = a.reassembly.into();
    config.saliency_gain = a.gain;
    config.flatten = a.flatten;
    let (out, _) = obfuscate_clip_cached(&manifest, &library, &config, a.cache.as_deref())?;

    let clock = Instant::now();
    write_pngs(&a.out.join("frames"), &out.frames)?;
    if a.emit_saliency {
        write_maps(&a.out.join("saliency"), &out.saliency, true)?;
    }
    if a.emit_noise {
        write_noise(&a.out.join("noise"), &out.noise.frames, false)?;
    }
    log_stage("write", out.frames.len(), clock, false);

    let mut run = RunRecord::new("obfuscate");
    run.seed(a.seed)
        .set("select", json!(a.select))
        .set("mode", mode_name(config.noise_mode))
        .set("reassembly", reassembly_name(config.reassembly))
        .set("gain", a.gain)
        .set("flatten", a.flatten)
        .set("emit_saliency", a.emit_saliency)
        .set("emit_noise", a.emit_noise);
    run.manifest(&a.manifest, &manifest)?.library(&a.library)?;
    run.write(&a.out)?;
    println!(
        "wrote {} frames to {}",
        out.frames.len(),
        a.out.join("frames").display()
    );
    Ok(())
}

fn saliency_maps(a: &SaliencyArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let library = TemplateLibrary::load(&a.library)?;
    let select = |names: &[String]| -> Result<_> {
        let s = library.select(names)?;
        Ok(if a.flatten { s.flattened() } else { s })
    };
    let mode: Reassembly = a.reassembly.into();
    let t = manifest.frame_count();

    let clock = Instant::now();
    let maps = saliency::saliency_for_clip(&manifest, &select(&a.select)?, mode)?;
    log_stage("saliency", t, clock, false);
    write_maps(&a.out.join("saliency"), &maps, a.png)?;
    let avg = saliency::average_saliency(&maps)?;
    avg.save_tnsr(a.out.join("average.tnsr"))?;
    if a.png {
        avg.save_png(a.out.join("average.png"))?;
    }

    if a.per_template || a.similarity {
        let names: Vec<String> = library
            .select(&a.select)?
            .names()
            .iter()
            .map(|s| s.to_string())
            .collect();
        let dir = a.out.join("templates");
        mkdir(&dir)?;
        let mut averages = BTreeMap::new();
        for name in &names {
            let clock = Instant::now();
            let per =
                saliency::saliency_for_clip(&manifest, &select(std::slice::from_ref(name))?, mode)?;
            log_stage(&format!("saliency[{name}]"), t, clock, false);
            let avg = saliency::average_saliency(&per)?;
            avg.save_tnsr(dir.join(format!("{name}.tnsr")))?;
            if a.png {
                avg.save_png(dir.join(format!("{name}.png")))?;
            }
            averages.insert(name.clone(), avg);
        }
        if a.similarity {
            let m = template_similarity_matrix(&averages, a.per_pixel)?;
            write_text(&a.out.join("similarity.csv"), &m.to_csv())?;
            print!("{}", m.to_csv());
        }
    }

    let mut run = RunRecord::new("saliency");
    run.set("select", json!(a.select))
        .set("reassembly", reassembly_name(mode))
        .set("flatten", a.flatten)
        .set("per_template", a.per_template)
        .set("similarity", a.similarity)
        .set("per_pixel", a.per_pixel)
        .set("png", a.png);
    run.manifest(&a.manifest, &manifest)?.library(&a.library)?;
    run.write(&a.out)
}

fn noise(a: &NoiseArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let mode: NoiseMode = a.mode.into();
    let clock = Instant::now();
    let seq = motion_noise::synthesize(&manifest, a.seed, mode)?;
    log_stage("noise", seq.frames.len(), clock, false);
    write_noise(&a.out.join("noise"), &seq.frames, a.png)?;
    let mut run = RunRecord::new("noise");
    run.seed(a.seed)
        .set("mode", mode_name(mode))
        .set("png", a.png);
    run.manifest(&a.manifest, &manifest)?;
    run.write(&a.out)
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("tnsr"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no .png or .tnsr files",
            dir.display()
        )));
    }
    Ok(files)
}

fn baseline(cmd: &BaselineCommand) -> Result<()> {
    let (common, kind, masks) = match cmd {
        BaselineCommand::Pixelate { common, block } => {
            (common, BaselineKind::Pixelate { block: *block }, None)
        }
        BaselineCommand::Blur {
            common,
            kappa,
            sigma,
        } => (
            common,
            BaselineKind::Blur {
                kappa: *kappa,
                sigma: *sigma,
            },
            None,
        ),
        BaselineCommand::Mask { common, masks } => (common, BaselineKind::Mask, Some(masks)),
    };
    let spec = BaselineSpec {
        kind,
        resize_to: common.resize,
    };
    spec.validate()?;
    let manifest = load_manifest(&common.manifest)?;
    let t = manifest.frame_count();
    let mask_files: Option<Vec<PathBuf>> = match masks {
        None => None,
        Some(Some(dir)) => Some(list_frames(dir)?),
        Some(None) => Some(
            (0..t)
                .map(|k| manifest.mask_path(k))
                .collect::<Result<_>>()
                .map_err(|_| {
                    Error::invalid("mask baseline needs --masks DIR or mask_paths in the manifest")
                })?,
        ),
    };
    if let Some(files) = &mask_files {
        if files.len() != t {
            return Err(Error::invalid(format!(
                "{} masks for {t} frames",
                files.len()
            )));
        }
    }

    let clock = Instant::now();
    let frames = (0..t)
        .into_par_iter()
        .map(|k| {
            let source = manifest.load_frame(k)?;
            let mask = match &mask_files {
                Some(files) => {
                    let (h, w, m) = frame::load_mask(&files[k])?;
                    if (h, w) != (source.height, source.width) {
                        return Err(Error::invalid(format!(
                            "{}: mask is {h}×{w}, frame is {}×{}",
                            files[k].display(),
                            source.height,
                            source.width
                        )));
                    }
                    Some(m)
                }
                None => None,
            };
            spec.apply(&source, mask.as_deref())
        })
        .collect::<Result<Vec<_>>>()?;
    log_stage("baseline", t, clock, false);
    write_pngs(&common.out.join("frames"), &frames)?;

    let mut run = RunRecord::new("baseline");
    run.set(
        "baseline",
        serde_json::to_value(spec).expect("spec serializes"),
    );
    run.manifest(&common.manifest, &manifest)?;
    if let Some(files) = &mask_files {
        for f in files {
            run.input(f)?;
        }
    }
    run.write(&common.out)
}

fn parse_patches(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let bad = || Error::invalid(format!("patch coordinate {p:?} is not row,col"));
            let (r, c) = p.split_once(',').ok_or_else(bad)?;
            Ok((
                r.trim().parse().map_err(|_| bad())?,
                c.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn template_build(
    library_dir: &Path,
    name: &str,
    manifest_path: &Path,
    frame: usize,
    patches: &str,
    replace: bool,
) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    if frame >= manifest.frame_count() {
        return Err(Error::invalid(format!(
            "frame {frame} is out of range for a {}-frame clip",
            manifest.frame_count()
        )));
    }
    let (h, w, _) = frame::probe_frame(manifest.frame_path(frame))?;
    let grid = veilkit_core::DescriptorGrid::load(
        manifest.descriptor_path(frame)?,
        manifest.patch_geometry,
        h,
        w,
    )?;
    let mut template = build_template(&grid, &parse_patches(patches)?, name)?;
    template.provenance.source_image = manifest.frame_paths[frame].display().to_string();
    let mut library = if library_dir.join(LIBRARY_FILE).is_file() {
        TemplateLibrary::load(library_dir)?
    } else {
        TemplateLibrary::new()
    };
    let count = template.descriptors.len();
    if replace {
        library.upsert(template)?;
    } else {
        library.insert(template)?;
    }
    library.save(library_dir)?;
    println!(
        "{name}: {count} descriptor(s) of dimension {} saved to {}",
        grid.dim,
        library_dir.display()
    );
    Ok(())
}

fn template_list(library_dir: &Path) -> Result<()> {
    let library = TemplateLibrary::load(library_dir)?;
    let width = library.names().map(str::len).max().unwrap_or(4).max(8);
    println!(
        "{:<width$}  {:>11}  {:>4}  source",
        "template", "descriptors", "dim"
    );
    for t in library.templates() {
        println!(
            "{:<width$}  {:>11}  {:>4}  {}",
            t.name,
            t.descriptors.len(),
            t.dim(),
            t.provenance.source_image
        );
    }
    Ok(())
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn eval(a: &EvalArgs) -> Result<()> {
    if a.results.is_none() && a.templates.is_none() {
        return Err(Error::invalid("eval needs --results or --templates"));
    }
    if a.select_k.is_some() != a.templates.is_some() {
        return Err(Error::invalid("--select-k and --templates go together"));
    }
    if a.sweep.is_some() && a.results.is_none() {
        return Err(Error::invalid("--sweep needs --results"));
    }
    let mut report = String::new();
    let mut files = Vec::new();

    if let Some(path) = &a.results {
        let ingested = metrics::ingest_results(path)?;
        warn_all(&ingested.warnings);
        let records: Vec<MetricRecord> = ingested
            .records
            .into_iter()
            .filter(|r| a.dataset.as_ref().is_none_or(|d| &r.dataset == d))
            .collect();
        if records.is_empty() {
            return Err(Error::invalid(format!(
                "{}: no matching records",
                path.display()
            )));
        }
        if let Some(spec) = &a.sweep {
            let table = metrics::sweep(&records, &metrics::parse_sweep(spec)?)?;
            files.push(("sweep.csv", table.to_csv()));
        } else {
            let mut datasets: Vec<&str> = Vec::new();
            for r in &records {
                if !datasets.contains(&r.dataset.as_str()) {
                    datasets.push(&r.dataset);
                }
            }
            for d in datasets {
                let group: Vec<MetricRecord> =
                    records.iter().filter(|r| r.dataset == d).cloned().collect();
                let ranked = metrics::rank(&group, a.lambda)?;
                report.push_str(&format!("dataset {d}, lambda {}\n", a.lambda));
                report.push_str(&metrics::format_ranking(&ranked, a.lambda));
                report.push('\n');
            }
        }
    }

    if let (Some(path), Some(k)) = (&a.templates, a.select_k) {
        let ingested = metrics::ingest_template_results(path, a.dataset.as_deref())?;
        warn_all(&ingested.warnings);
        let mut names: Vec<&str> = ingested
            .records
            .iter()
            .map(|r| r.template.as_str())
            .collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "{}: several rows per template; choose one with --dataset",
                path.display()
            )));
        }
        let picked = metrics::select_templates(&ingested.records, k)?;
        report.push_str(&format!(
            "selected templates (k = {k}): {}\n",
            picked.join(", ")
        ));
        if let Some(expect) = &a.expect {
            if let Some(w) = metrics::selection_divergence(&picked, expect) {
                eprintln!("warning: {w}");
                report.push_str(&format!("warning: {w}\n"));
            }
        }
    }
    if !report.is_empty() {
        files.insert(0, ("report.txt", report));
    }

    match &a.out {
        None => {
            for (_, text) in &files {
                print!("{text}");
            }
        }
        Some(dir) => {
            mkdir(dir)?;
            for (name, text) in &files {
                write_text(&dir.join(name), text)?;
            }
            let mut run = RunRecord::new("eval");
            run.set("lambda", a.lambda)
                .set("sweep", json!(a.sweep))
                .set("select_k", json!(a.select_k))
                .set("dataset", json!(a.dataset))
                .set("expect", json!(a.expect));
            for p in a.results.iter().chain(&a.templates) {
                run.input(p)?;
            }
            run.write(dir)?;
        }
    }
    Ok(())
}

fn synth_clip(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::load(&a.spec)?;
    let clock = Instant::now();
    let clip = synth::make_clip(&spec, &a.out)?;
    log_stage("synth", spec.frames, clock, false);
    let mut run = RunRecord::new("synth");
    run.seed(spec.seed).set(
        "spec",
        serde_json::to_value(&spec).expect("spec serializes"),
    );
    run.input(&a.spec)?;
    run.write(&a.out)?;
    println!("{}", clip.manifest_path.display());
    Ok(())
}

fn stats(a: &StatsArgs) -> Result<()> {
    let (paths, manifest): (Vec<PathBuf>, Option<ClipManifest>) = match (&a.manifest, &a.frames) {
        (Some(m), _) => {
            let manifest = manifest::parse_manifest(m)?;
            (
                (0..manifest.frame_count())
                    .map(|t| manifest.frame_path(t))
                    .collect(),
                Some(manifest),
            )
        }
        (None, Some(dir)) => (list_frames(dir)?, None),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let clock = Instant::now();
    let stats = compute_dataset_stats(&paths)?;
    log_stage("stats", paths.len(), clock, false);
    println!(
        "{}",
        serde_json::to_string(&stats).expect("stats serialize")
    );
    if a.update {
        let (Some(mut m), Some(path)) = (manifest, &a.manifest) else {
            unreachable!("clap ties --update to a manifest")
        };
        m.dataset_mean = stats.mean;
        m.dataset_std = stats.std;
        m.validate()?;
        m.save(path)?;
    }
    Ok(())
}
