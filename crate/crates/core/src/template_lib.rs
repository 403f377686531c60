//! Named privacy templates and user selections over them.
//!
//! On disk a library is a directory holding `library.json` plus one
//! `<name>.tnsr` (`n × d` f32) per template.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::DescriptorGrid;
use crate::tensor;

pub const LIBRARY_FILE: &str = "library.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub source_image: String,
    #[serde(default)]
    pub patch_coords: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub descriptors: Vec<Vec<f32>>,
    pub provenance: Provenance,
}

impl Template {
    pub fn from_descriptors(name: impl Into<String>, descriptors: Vec<Vec<f32>>) -> Result<Self> {
        let t = Template {
            name: name.into(),
            descriptors,
            provenance: Provenance::default(),
        };
        t.check()?;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.descriptors.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<()> {
        check_name(&self.name)?;
        let d = self.dim();
        if self.descriptors.is_empty() || d == 0 {
            return Err(Error::invalid(format!(
                "template {:?} needs at least one non-empty descriptor",
                self.name
            )));
        }
        for (i, v) in self.descriptors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::shape(format!(
                    "template {:?} descriptor {i} has dimension {}, expected {d}",
                    self.name,
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "template {:?} descriptor {i} is not finite",
                    self.name
                )));
            }
            let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                return Err(Error::invalid(format!(
                    "template {:?} descriptor {i} is the zero vector",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "template name {name:?} must be non-empty ASCII letters, digits, '_', '-' or '.'"
        )))
    }
}

/// Copies the grid vectors at `coords` verbatim into a new template.
pub fn build_template(
    grid: &DescriptorGrid,
    coords: &[(usize, usize)],
    name: &str,
) -> Result<Template> {
    if coords.is_empty() {
        return Err(Error::invalid(
            "template needs at least one patch coordinate",
        ));
    }
    let mut descriptors = Vec::with_capacity(coords.len());
    for &(r, c) in coords {
        if r >= grid.grid_height || c >= grid.grid_width {
            return Err(Error::invalid(format!(
                "patch coordinate ({r},{c}) is outside the {}×{} grid",
                grid.grid_height, grid.grid_width
            )));
        }
        let v = grid.vector(r, c);
        if v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt() <= 1e-12 {
            return Err(Error::invalid(format!(
                "descriptor at patch coordinate ({r},{c}) is the zero vector"
            )));
        }
        descriptors.push(v.to_vec());
    }
    let mut t = Template::from_descriptors(name, descriptors)?;
    t.provenance.patch_coords = coords.to_vec();
    Ok(t)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateLibrary {
    templates: BTreeMap<String, Template>,
    descriptor_dim: usize,
}

impl TemplateLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_templates(templates: impl IntoIterator<Item = Template>) -> Result<Self> {
        let mut lib = Self::new();
        for t in templates {
            lib.insert(t)?;
        }
        Ok(lib)
    }

    /// Adds a template; names must be unique and dimensions must agree.
    pub fn insert(&mut self, template: Template) -> Result<()> {
        template.check()?;
        if self.templates.contains_key(&template.name) {
            return Err(Error::invalid(format!(
                "library already holds a template named {:?}",
                template.name
            )));
        }
        if self.templates.is_empty() {
            self.descriptor_dim = template.dim();
        } else if template.dim() != self.descriptor_dim {
            return Err(Error::shape(format!(
                "template {:?} has dimension {}, library uses {}",
                template.name,
                template.dim(),
                self.descriptor_dim
            )));
        }
        self.templates.insert(template.name.clone(), template);
        Ok(())
    }

    /// Replaces an existing template of the same name, or inserts it.
    pub fn upsert(&mut self, template: Template) -> Result<()> {
        let previous = self.templates.remove(&template.name);
        if self.templates.is_empty() {
            self.descriptor_dim = 0;
        }
        match self.insert(template) {
            Ok(()) => Ok(()),
            Err(e) => {
                if let Some(p) = previous {
                    self.descriptor_dim = p.dim();
                    self.templates.insert(p.name.clone(), p);
                }
                Err(e)
            }
        }
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Template> {
        self.templates.get(name)
    }

    pub fn templates(&self) -> impl Iterator<Item = &Template> {
        self.templates.values()
    }

    /// Resolves a requested name, accepting a singular/plural variant
    /// (`eye` ↔ `eyes`, `leg` ↔ `legs`).
    fn lookup(&self, name: &str) -> Option<&Template> {
        if let Some(t) = self.templates.get(name) {
            return Some(t);
        }
        let alt = match name.strip_suffix('s') {
            Some(stem) => stem.to_string(),
            None => format!("{name}s"),
        };
        self.templates.get(&alt)
    }

    fn closest_name(&self, query: &str) -> Option<&str> {
        self.names()
            .map(|n| (strsim::jaro_winkler(query, n), n))
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
            .map(|(_, n)| n)
    }

    /// The ordered subset of templates named in `names`.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<SelectedTemplates> {
        if names.is_empty() {
            return Err(Error::invalid("template selection is empty"));
        }
        let mut picked: Vec<Template> = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref().trim();
            let t = self.lookup(name).ok_or_else(|| {
                let hint = self
                    .closest_name(name)
                    .map(|n| format!("; did you mean {n:?}?"))
                    .unwrap_or_default();
                Error::invalid(format!("unknown template {name:?}{hint}"))
            })?;
            if !picked.iter().any(|p| p.name == t.name) {
                picked.push(t.clone());
            }
        }
        SelectedTemplates::new(picked)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.len());
        for t in self.templates.values() {
            let file = format!("{}.tnsr", t.name);
            let flat: Vec<f32> = t.descriptors.iter().flatten().copied().collect();
            tensor::write_f32(dir.join(&file), &[t.descriptors.len(), t.dim()], &flat)?;
            entries.push(LibraryEntry {
                name: t.name.clone(),
                path: PathBuf::from(file),
                count: t.descriptors.len(),
                dim: t.dim(),
                provenance: t.provenance.clone(),
            });
        }
        let manifest = LibraryManifest {
            descriptor_dim: self.descriptor_dim,
            templates: entries,
        };
        let path = dir.join(LIBRARY_FILE);
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(LIBRARY_FILE);
        if !path.is_file() {
            let missing = std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no library manifest (library.json)",
            );
            return Err(Error::io(dir, missing));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: LibraryManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        let mut lib = TemplateLibrary::new();
        for entry in manifest.templates {
            let tpath = dir.join(&entry.path);
            let t = tensor::read_tensor(&tpath)?;
            let &[n, d] = t.shape.as_slice() else {
                return Err(Error::format(
                    &tpath,
                    format!("expected n×d template tensor, found shape {:?}", t.shape),
                ));
            };
            if d != manifest.descriptor_dim || d != entry.dim || n != entry.count {
                return Err(Error::format(
                    &tpath,
                    format!(
                        "template {:?} is {n}×{d}, manifest declares {}×{} (library dimension {})",
                        entry.name, entry.count, entry.dim, manifest.descriptor_dim
                    ),
                ));
            }
            let values = t.data.into_f32();
            let template = Template {
                name: entry.name,
                descriptors: values.chunks_exact(d).map(<[f32]>::to_vec).collect(),
                provenance: entry.provenance,
            };
            lib.insert(template)?;
        }
        Ok(lib)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryEntry {
    name: String,
    path: PathBuf,
    count: usize,
    dim: usize,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryManifest {
    descriptor_dim: usize,
    templates: Vec<LibraryEntry>,
}

/// A non-empty, ordered selection of templates sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedTemplates {
    templates: Vec<Template>,
}

impl SelectedTemplates {
    pub fn new(templates: Vec<Template>) -> Result<Self> {
        let first = templates
            .first()
            .ok_or_else(|| Error::invalid("template selection is empty"))?;
        let d = first.dim();
        for t in &templates {
            t.check()?;
            if t.dim() != d {
                return Err(Error::shape(format!(
                    "template {:?} has dimension {}, selection uses {d}",
                    t.name,
                    t.dim()
                )));
            }
        }
        Ok(SelectedTemplates { templates })
    }

    pub fn groups(&self) -> &[Template] {
        &self.templates
    }

    pub fn names(&self) -> Vec<&str> {
        self.templates.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.templates[0].dim()
    }

    /// Every descriptor becomes its own single-descriptor template.
    pub fn flattened(&self) -> SelectedTemplates {
        let templates = self
            .templates
            .iter()
            .flat_map(|t| {
                t.descriptors
                    .iter()
                    .enumerate()
                    .map(move |(i, d)| Template {
                        name: format!("{}.{i}", t.name),
                        descriptors: vec![d.clone()],
                        provenance: t.provenance.clone(),
                    })
            })
            .collect();
        SelectedTemplates { templates }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::PatchGeometry;

    /// The nine anatomical regions of the reference template set.
    const REGIONS: [&str; 9] = [
        "forehead", "hair", "eye", "cheek", "lips", "hand", "arm", "torso", "legs",
    ];

    fn grid_2x2x3() -> DescriptorGrid {
        let v = vec![
            1.0, 0.0, 0.0, /**/ 0.0, 2.0, 0.0, //
            0.0, 0.0, 3.0, /**/ 1.0, 1.0, 1.0,
        ];
        DescriptorGrid::new(v, 3, PatchGeometry::new(1, 1).unwrap(), 2, 2).unwrap()
    }

    fn region_library(d: usize) -> TemplateLibrary {
        TemplateLibrary::from_templates(REGIONS.iter().enumerate().map(|(i, n)| {
            let mut v = vec![0.01f32; d];
            v[i % d] = 1.0 + i as f32 * 0.125;
            Template::from_descriptors(*n, vec![v]).unwrap()
        }))
        .unwrap()
    }

    #[test]
    fn build_copies_grid_vector() {
        let t = build_template(&grid_2x2x3(), &[(0, 1)], "hair").unwrap();
        assert_eq!(t.descriptors, vec![vec![0.0, 2.0, 0.0]]);
        assert_eq!(t.provenance.patch_coords, vec![(0, 1)]);
    }

    #[test]
    fn build_preserves_coordinate_order() {
        let t = build_template(&grid_2x2x3(), &[(0, 0), (1, 1)], "hand").unwrap();
        assert_eq!(
            t.descriptors,
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]]
        );
    }

    #[test]
    fn build_out_of_bounds_names_coordinate() {
        let err = build_template(&grid_2x2x3(), &[(5, 0)], "x").unwrap_err();
        assert!(err.to_string().contains("(5,0)"), "{err}");
    }

    #[test]
    fn build_rejects_zero_descriptor() {
        let g =
            DescriptorGrid::new(vec![0.0; 3], 3, PatchGeometry::new(1, 1).unwrap(), 1, 1).unwrap();
        assert!(build_template(&g, &[(0, 0)], "z").is_err());
    }

    #[test]
    fn nine_region_library_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let lib = region_library(16);
        lib.save(dir.path()).unwrap();
        let back = TemplateLibrary::load(dir.path()).unwrap();
        assert_eq!(back, lib);
        assert_eq!(back.len(), 9);
    }

    #[test]
    fn empty_dir_has_no_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let err = TemplateLibrary::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no library manifest"), "{err}");
    }

    #[test]
    fn mixed_dimensions_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let lib = TemplateLibrary::from_templates([Template::from_descriptors(
            "hair",
            vec![vec![1.0; 384]],
        )
        .unwrap()])
        .unwrap();
        lib.save(dir.path()).unwrap();
        let other = tempfile::tempdir().unwrap();
        TemplateLibrary::from_templates([
            Template::from_descriptors("hand", vec![vec![1.0; 768]]).unwrap()
        ])
        .unwrap()
        .save(other.path())
        .unwrap();
        fs::copy(other.path().join("hand.tnsr"), dir.path().join("hand.tnsr")).unwrap();
        let text = fs::read_to_string(dir.path().join(LIBRARY_FILE)).unwrap();
        let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
        m["templates"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({
                "name": "hand", "path": "hand.tnsr", "count": 1, "dim": 768
            }));
        fs::write(dir.path().join(LIBRARY_FILE), m.to_string()).unwrap();
        assert!(TemplateLibrary::load(dir.path()).is_err());
    }

    #[test]
    fn insert_rejects_dimension_mismatch() {
        let mut lib = region_library(8);
        let err = lib
            .insert(Template::from_descriptors("new", vec![vec![1.0; 4]]).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn select_body_parts_for_kth_sbu() {
        let lib = region_library(16);
        let s = lib.select(&["torso", "arm", "leg", "hair"]).unwrap();
        assert_eq!(s.names(), vec!["torso", "arm", "legs", "hair"]);
    }

    #[test]
    fn select_face_parts_for_ipn() {
        let lib = region_library(16);
        let s = lib.select(&["cheek", "eyes", "forehead", "hair"]).unwrap();
        assert_eq!(s.names(), vec!["cheek", "eye", "forehead", "hair"]);
    }

    #[test]
    fn unknown_name_suggests_nearest() {
        let err = region_library(16).select(&["face"]).unwrap_err();
        assert!(
            err.to_string().contains("did you mean \"forehead\""),
            "{err}"
        );
    }

    #[test]
    fn empty_selection_is_an_error() {
        assert!(region_library(16).select::<&str>(&[]).is_err());
    }

    #[test]
    fn select_all_keeps_requested_order_and_is_idempotent() {
        let lib = region_library(16);
        let mut names: Vec<&str> = REGIONS.to_vec();
        names.reverse();
        let s = lib.select(&names).unwrap();
        assert_eq!(s.names(), names);
        let again = lib.select(&s.names()).unwrap();
        assert_eq!(again, s);
    }
}
