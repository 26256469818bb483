use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{load_toml, save_toml};
use crate::error::{Error, Result};
use crate::gait::PROFILE_SCHEMA;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(dir: &Path, name: &str) -> Result<Self> {
        let data = std::fs::read(dir.join(name))?;
        Ok(Self {
            path: name.to_string(),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

/// Written after every other output of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub experiment: String,
    pub seed: u64,
    /// Hash of the resolved spec, plant, controller and profile texts.
    pub spec_sha256: String,
    pub versions: BTreeMap<String, String>,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn versions() -> BTreeMap<String, String> {
        BTreeMap::from([
            (env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("manifest".to_string(), MANIFEST_VERSION.to_string()),
            ("stride_profile".to_string(), PROFILE_SCHEMA.trim_start_matches("# stride_profile ").to_string()),
        ])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        save_toml(self, &dir.join(MANIFEST_FILE))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        load_toml(&dir.join(MANIFEST_FILE))
    }

    /// Re-hashes every listed file and reports each mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let mut bad = Vec::new();
        for f in &self.files {
            match FileEntry::of(dir, &f.path) {
                Ok(now) if now == *f => {}
                Ok(_) => bad.push(format!("{}: checksum mismatch", f.path)),
                Err(e) => bad.push(format!("{}: {e}", f.path)),
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(bad.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let m = RunManifest {
            manifest_version: MANIFEST_VERSION,
            experiment: "bench_step".into(),
            seed: 1,
            spec_sha256: sha256_hex(b""),
            versions: RunManifest::versions(),
            wall_time: 0.0,
            files: vec![FileEntry::of(dir.path(), "a.csv").unwrap()],
        };
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        back.verify(dir.path()).unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n2\n").unwrap();
        assert!(back.verify(dir.path()).is_err());
    }
}
