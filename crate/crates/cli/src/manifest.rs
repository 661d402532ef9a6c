//! `manifest.json`: per stage, the config digest and the sha256 of every
//! input and output file. No timestamps, so identical runs give identical
//! manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageEntry>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn display_relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        if !p.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&p)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(dir.join(MANIFEST), json)?;
        Ok(())
    }

    pub fn record(
        &mut self,
        dir: &Path,
        stage: &str,
        inputs: &[PathBuf],
        outputs: &[String],
        config_sha256: &str,
    ) -> Result<()> {
        let mut entry = StageEntry {
            config_sha256: config_sha256.to_string(),
            ..StageEntry::default()
        };
        for p in inputs {
            entry.inputs.insert(display_relative(dir, p), file_sha256(p)?);
        }
        for o in outputs {
            entry.outputs.insert(o.clone(), file_sha256(&dir.join(o))?);
        }
        self.stages.insert(stage.to_string(), entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_hashes_relative_to_the_work_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "abc").unwrap();
        fs::write(dir.path().join("b.txt"), "").unwrap();
        let mut m = Manifest::load(dir.path()).unwrap();
        m.record(dir.path(), "s", &[dir.path().join("a.txt")], &["b.txt".into()], "cfg")
            .unwrap();
        m.save(dir.path()).unwrap();
        let back = Manifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        let e = &back.stages["s"];
        assert_eq!(
            e.inputs["a.txt"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            e.outputs["b.txt"],
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert!(m.record(dir.path(), "s", &[], &["missing".into()], "cfg").is_err());
    }
}
