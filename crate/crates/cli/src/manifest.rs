//! Run manifests and the stage output directories they describe.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory when the file lives inside it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, u64>,
}

/// Carries no timestamps or absolute output paths, so identical runs write
/// identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn new(cfg: &PipelineConfig, stages: Vec<StageRecord>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").replace("-cli", ""),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: cfg.clone(),
            stages,
        }
    }

    pub fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut b = serde_json::to_vec_pretty(self)?;
        b.push(b'\n');
        Ok(b)
    }
}

fn digest(out: &Path, path: &Path, bytes: &[u8]) -> FileDigest {
    let shown = path.strip_prefix(out).unwrap_or(path);
    FileDigest { path: shown.to_string_lossy().replace('\\', "/"), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() as u64 }
}

fn is_occupied(path: &Path) -> anyhow::Result<bool> {
    if path.is_file() {
        return Ok(true);
    }
    Ok(path.is_dir() && fs::read_dir(path)?.next().is_some())
}

/// Refuses when any of `paths` already holds output, unless `overwrite` is
/// set, in which case all of them are removed. Checks every path before
/// touching any.
pub fn claim(paths: &[PathBuf], overwrite: bool) -> anyhow::Result<()> {
    let occupied: Vec<&PathBuf> =
        paths.iter().filter_map(|p| is_occupied(p).map(|o| o.then_some(p)).transpose()).collect::<anyhow::Result<_>>()?;
    if occupied.is_empty() {
        return Ok(());
    }
    if !overwrite {
        let list: Vec<String> = occupied.iter().map(|p| p.display().to_string()).collect();
        bail!("refusing to overwrite existing output in {}; pass --overwrite to replace it", list.join(", "));
    }
    for p in occupied {
        if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) }.with_context(|| format!("removing {}", p.display()))?;
    }
    Ok(())
}

/// One stage's output directory `<out>/<stage>/`. Every file read or written
/// through it is digested into the stage record.
pub struct StageDir {
    out: PathBuf,
    dir: PathBuf,
    record: StageRecord,
}

impl StageDir {
    pub fn create(out: &Path, stage: &str) -> anyhow::Result<Self> {
        let dir = out.join(stage);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(StageDir {
            out: out.to_path_buf(),
            dir,
            record: StageRecord { stage: stage.into(), inputs: Vec::new(), outputs: Vec::new(), counts: BTreeMap::new() },
        })
    }

    pub fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.record.inputs.push(digest(&self.out, path, &bytes));
        Ok(bytes)
    }

    /// Reads the output `file` of an earlier `stage`.
    pub fn read_stage(&mut self, stage: &str, file: &str) -> anyhow::Result<Vec<u8>> {
        let path = self.out.join(stage).join(file);
        if !path.is_file() {
            bail!("missing {}; run the {stage} stage first", path.display());
        }
        self.read(&path)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record.outputs.push(digest(&self.out, &path, bytes));
        Ok(())
    }

    pub fn write_with<E>(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> anyhow::Result<()>
    where
        anyhow::Error: From<E>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut b = serde_json::to_vec_pretty(value)?;
        b.push(b'\n');
        self.write(name, &b)
    }

    pub fn count(&mut self, key: &str, n: usize) {
        self.record.counts.insert(key.into(), n as u64);
    }

    /// Writes the stage manifest and returns the record.
    pub fn finish(self, cfg: &PipelineConfig) -> anyhow::Result<StageRecord> {
        let m = Manifest::new(cfg, vec![self.record]);
        let path = self.dir.join(MANIFEST);
        fs::write(&path, m.to_bytes()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(m.stages.into_iter().next().expect("one stage"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_relative_digests() {
        let tmp = tempfile::tempdir().unwrap();
        let mut st = StageDir::create(tmp.path(), "demo").unwrap();
        st.write("a.txt", b"abc").unwrap();
        st.count("rows", 3);
        let rec = st.finish(&PipelineConfig::default()).unwrap();
        assert_eq!(rec.outputs[0].path, "demo/a.txt");
        assert_eq!(rec.outputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let m: Manifest = serde_json::from_slice(&fs::read(tmp.path().join("demo").join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m.stages, vec![rec]);
        assert_eq!(m.config, PipelineConfig::default());
    }

    #[test]
    fn claim_refuses_then_clears() {
        let tmp = tempfile::tempdir().unwrap();
        let (full, empty) = (tmp.path().join("full"), tmp.path().join("empty"));
        fs::create_dir_all(&full).unwrap();
        fs::create_dir_all(&empty).unwrap();
        fs::write(full.join("x"), "1").unwrap();
        let paths = [full.clone(), empty.clone(), tmp.path().join("absent")];
        assert!(claim(&paths, false).is_err());
        assert!(full.join("x").exists());
        claim(&paths, true).unwrap();
        assert!(!full.exists());
        claim(&paths, false).unwrap();
    }
}
