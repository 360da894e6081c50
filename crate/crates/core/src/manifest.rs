//! Dataset index tying together, per frame, the clear image, its occluded
//! counterpart, the lane ground truth and the occluder boxes.
//!
//! Files on disk are UTF-8 JSON with sorted keys and relative paths that
//! resolve against the manifest's own directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbox::{default_class_names, BBox};
use crate::error::{Error, Result};
use crate::io;
use crate::raster::Polygon;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub clear_image: String,
    #[serde(default)]
    pub occluded_image: Option<String>,
    pub lane_mask: String,
    #[serde(default)]
    pub occlusion_boxes: Vec<BBox>,
    #[serde(default)]
    pub road_roi: Option<Polygon>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    #[serde(default = "default_class_names")]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub frames: Vec<FrameRecord>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            class_names: default_class_names(),
            frames: Vec::new(),
        }
    }
}

/// Whether `read_manifest` checks that referenced files exist and that boxes
/// fit inside the referenced images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathCheck {
    #[default]
    Strict,
    /// Structural checks only; file problems surface later, per frame.
    Lenient,
}

impl DatasetManifest {
    pub fn frame(&self, id: &str) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.id == id)
    }

    /// Structural invariants that don't need the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = HashSet::new();
        for f in &self.frames {
            if f.id.is_empty() {
                return Err(Error::Manifest("frame with empty id".into()));
            }
            if !ids.insert(f.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate frame id {:?}", f.id)));
            }
            for b in &f.occlusion_boxes {
                b.validate()
                    .map_err(|e| Error::Manifest(format!("frame {:?}: {e}", f.id)))?;
                if b.class_id as usize >= self.class_names.len() {
                    return Err(Error::Manifest(format!(
                        "frame {:?}: box {b} has class id outside the {} known classes",
                        f.id,
                        self.class_names.len()
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_files(&self, root: &Path) -> Result<()> {
        for f in &self.frames {
            let ctx = |e: Error| Error::Manifest(format!("frame {:?}: {e}", f.id));
            let (w, h) = io::image_dimensions(root.join(&f.clear_image)).map_err(ctx)?;
            for rel in std::iter::once(&f.lane_mask).chain(f.occluded_image.as_ref()) {
                let dims = io::image_dimensions(root.join(rel)).map_err(ctx)?;
                if dims != (w, h) {
                    return Err(ctx(Error::dims((w, h), dims)));
                }
            }
            if let Some(b) = f.occlusion_boxes.iter().find(|b| !b.fits_within(w, h)) {
                return Err(ctx(Error::InvalidBox(format!("{b} exceeds {w}x{h} frame"))));
            }
        }
        Ok(())
    }

    /// Canonical text: sorted keys, two-space indent, trailing newline.
    pub fn to_canonical_json(&self) -> Result<String> {
        to_canonical_json(self)
    }
}

/// Serialize through `serde_json::Value`, whose maps are ordered, so equal
/// values always produce equal bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    read_manifest_with(path, PathCheck::Strict)
}

pub fn read_manifest_with(path: impl AsRef<Path>, check: PathCheck) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    m.validate()?;
    if check == PathCheck::Strict {
        m.validate_files(&manifest_root(path))?;
    }
    Ok(m)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    manifest.validate()?;
    let text = manifest.to_canonical_json()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Directory that relative frame paths resolve against.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}
