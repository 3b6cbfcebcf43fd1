//! Artifact writers. Every file is written to a temporary sibling and then
//! renamed into place, so readers never observe partial output.

use std::io::Write;
use std::path::{Component, Path, PathBuf};

use crystalflow_core::GridField;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Snapshot sidecar contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    #[serde(rename = "N_g")]
    pub n_g: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// An output directory that only accepts paths below its root.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Files written so far, in order.
    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    fn target(&self, rel: &str) -> Result<PathBuf> {
        let path = Path::new(rel);
        let ok = !rel.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)));
        if !ok {
            return Err(HarnessError::ConfigInvalid(format!("output path `{rel}` escapes the output directory")));
        }
        Ok(self.root.join(path))
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.target(rel)?;
        let parent = path.parent().unwrap_or(&self.root).to_path_buf();
        std::fs::create_dir_all(&parent).map_err(|e| HarnessError::io(&parent, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| HarnessError::io(&parent, e))?;
        tmp.write_all(bytes).map_err(|e| HarnessError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| HarnessError::io(tmp.path(), e))?;
        tmp.persist(&path).map_err(|e| HarnessError::io(&path, e.error))?;
        self.files.push(OutputFile {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("value serialises");
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    /// One compact JSON document per line.
    pub fn write_ndjson<T: Serialize>(&mut self, rel: &str, records: impl IntoIterator<Item = T>) -> Result<()> {
        let mut bytes = Vec::new();
        for r in records {
            serde_json::to_writer(&mut bytes, &r).expect("record serialises");
            bytes.push(b'\n');
        }
        self.write_bytes(rel, &bytes)
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| HarnessError::ConfigInvalid(format!("csv encoding failed: {e}"));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        self.write_bytes(rel, &bytes)
    }

    /// Writes `<stem>.f64` (little-endian doubles) and `<stem>.json`.
    pub fn write_snapshot(&mut self, stem: &str, field: &GridField, t: f64) -> Result<()> {
        self.write_bytes(&format!("{stem}.f64"), &encode_f64(field.values()))?;
        self.write_json(&format!("{stem}.json"), &SnapshotMeta { n_g: field.len(), t })
    }
}

pub fn encode_f64(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64(bytes: &[u8]) -> Option<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    Some(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// Reads a snapshot written by [`OutputDir::write_snapshot`], given the
/// path of either file.
pub fn read_snapshot(path: &Path) -> Result<(GridField, f64)> {
    let data = path.with_extension("f64");
    let meta_path = path.with_extension("json");
    let meta: SnapshotMeta = serde_json::from_slice(&std::fs::read(&meta_path).map_err(|e| HarnessError::io(&meta_path, e))?)
        .map_err(|e| HarnessError::ConfigInvalid(format!("{}: {e}", meta_path.display())))?;
    let bytes = std::fs::read(&data).map_err(|e| HarnessError::io(&data, e))?;
    let values = decode_f64(&bytes)
        .filter(|v| v.len() == meta.n_g)
        .ok_or_else(|| HarnessError::ConfigInvalid(format!("{} does not hold {} doubles", data.display(), meta.n_g)))?;
    Ok((GridField::new(values)?, meta.t))
}

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputFile>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_escaping_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        for rel in ["../x", "/etc/x", "", "a/../../b"] {
            assert!(out.write_bytes(rel, b"1").is_err(), "{rel}");
        }
        out.write_bytes("a/b.txt", b"hi").unwrap();
        assert_eq!(std::fs::read(dir.path().join("a/b.txt")).unwrap(), b"hi");
        assert_eq!(out.files().len(), 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let f = GridField::from_fn(16, |x| x * x - 0.1).unwrap();
        out.write_snapshot("snapshots/h_0000", &f, 0.25).unwrap();
        let bytes = std::fs::read(dir.path().join("snapshots/h_0000.f64")).unwrap();
        assert_eq!(bytes.len(), 128);
        assert_eq!(&bytes[8..16], &f.values()[1].to_le_bytes());
        let (g, t) = read_snapshot(&dir.path().join("snapshots/h_0000.json")).unwrap();
        assert_eq!((g, t), (f, 0.25));
        let meta = std::fs::read_to_string(dir.path().join("snapshots/h_0000.json")).unwrap();
        assert!(meta.contains("\"N_g\": 16"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e22] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
