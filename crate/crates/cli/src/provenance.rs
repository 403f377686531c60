//! `run.json`: what produced an output directory. Contains no timestamps or
//! output paths, so identical runs write identical records.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use veilkit_core::{digest, ClipManifest, Error, Result};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Default)]
pub struct RunRecord {
    command: String,
    config: BTreeMap<String, Value>,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(command: &str) -> Self {
        RunRecord {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self.set("seed", seed)
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs
            .insert(path.display().to_string(), digest::file_sha256(path)?);
        Ok(self)
    }

    /// The manifest file and every file it references.
    pub fn manifest(&mut self, path: &Path, manifest: &ClipManifest) -> Result<&mut Self> {
        self.input(path)?;
        let lists = [
            Some(&manifest.frame_paths),
            manifest.descriptor_paths.as_ref(),
            manifest.flow_paths.as_ref(),
            manifest.mask_paths.as_ref(),
        ];
        for p in lists.into_iter().flatten().flatten() {
            self.input(&manifest.resolve(p))?;
        }
        Ok(self)
    }

    /// `library.json` and every descriptor file next to it.
    pub fn library(&mut self, dir: &Path) -> Result<&mut Self> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .is_some_and(|n| n == veilkit_core::template_lib::LIBRARY_FILE)
                    || p.extension().is_some_and(|e| e == "tnsr")
            })
            .collect();
        files.sort();
        for f in files {
            self.input(&f)?;
        }
        Ok(self)
    }

    pub fn config_hash(&self) -> String {
        let canonical = json!({ "command": self.command, "config": self.config });
        digest::bytes_sha256(canonical.to_string().as_bytes())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool": "veilkit",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash(),
            "seed": self.seed,
            "inputs": self.inputs,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(RUN_FILE);
        let text = serde_json::to_string_pretty(&self.to_json()).expect("json values serialize");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}
