//! Config files, run snapshots and the corpus seed they carry forward.

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use occlane_core::manifest::to_canonical_json;

use crate::{usage, Failure};

pub const SNAPSHOT: &str = "run_config.json";

/// Reads a JSON config, filling missing fields from defaults. Unreadable
/// files, malformed JSON and unknown keys are usage errors.
pub fn load<T: DeserializeOwned + Serialize + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(usage)?;
    let raw: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(usage)?;
    let parsed: T = serde_json::from_value(raw.clone())
        .with_context(|| format!("config {}", path.display()))
        .map_err(usage)?;
    let known = serde_json::to_value(&parsed)?;
    if let Some(key) = unknown_key(&raw, &known, "") {
        return Err(usage(anyhow!(
            "config {}: unknown key {key}",
            path.display()
        )));
    }
    Ok(parsed)
}

/// First key path in `raw` that the parsed value does not have. Maps that
/// pass through verbatim compare equal and are never flagged.
fn unknown_key(raw: &Value, known: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(r), Value::Object(k)) = (raw, known) else {
        return None;
    };
    for (key, v) in r {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match k.get(key) {
            None => return Some(path),
            Some(kv) => {
                if let Some(p) = unknown_key(v, kv, &path) {
                    return Some(p);
                }
            }
        }
    }
    None
}

/// Writes `<dir>/run_config.json` with sorted keys.
pub fn write_snapshot(dir: &Path, snapshot: &Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(SNAPSHOT);
    std::fs::write(&path, to_canonical_json(snapshot)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// `corpus_seed` from the snapshot beside a dataset, if there is one.
pub fn corpus_seed(dataset_root: &Path) -> Option<u64> {
    let text = std::fs::read_to_string(dataset_root.join(SNAPSHOT)).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v.get("corpus_seed")?.as_u64()
}
