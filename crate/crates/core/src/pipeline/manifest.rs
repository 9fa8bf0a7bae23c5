//! `manifest.json`: config hash, seed, and per-stage file digests.

use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Run, RunConfig, Stage};
use crate::tsv::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rows: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageEntry>,
}

fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn count_lines(path: &Path) -> io::Result<u64> {
    let mut n = 0;
    for line in BufReader::new(fs::File::open(path)?).split(b'\n') {
        line?;
        n += 1;
    }
    Ok(n)
}

/// Path shown relative to the first base it lies under.
fn display(path: &Path, bases: &[&Path]) -> String {
    bases
        .iter()
        .find_map(|b| path.strip_prefix(b).ok())
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

impl StageEntry {
    pub(super) fn new(run: &Run, stage: Stage, inputs: &[PathBuf]) -> Result<Self, PipelineError> {
        let bases = [run.dir.as_path(), run.config.base_dir.as_path()];
        let mut input_digests = Vec::with_capacity(inputs.len());
        for p in inputs {
            input_digests.push(FileDigest {
                path: display(p, &bases),
                sha256: sha256_file(p)?,
                rows: None,
            });
        }
        let mut outputs = Vec::new();
        for rel in stage.outputs() {
            let p = run.path(rel);
            outputs.push(FileDigest {
                path: rel.to_string(),
                sha256: sha256_file(&p)?,
                rows: Some(count_lines(&p)?),
            });
        }
        Ok(StageEntry {
            stage: stage.name().to_string(),
            seed: run.config.stage_seed(stage.name()),
            inputs: input_digests,
            outputs,
        })
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Option<Self> {
        serde_json::from_slice(&fs::read(path).ok()?).ok()
    }

    /// Replaces the stage's entry and keeps entries in pipeline order.
    /// A changed config or seed invalidates the entries recorded under the old one.
    pub fn record(&mut self, config: &RunConfig, entry: StageEntry) {
        let hash = config.hash();
        if self.config_hash != hash || self.seed != config.seed {
            self.stages.clear();
        }
        self.config_hash = hash;
        self.seed = config.seed;
        self.stages.retain(|s| s.stage != entry.stage);
        self.stages.push(entry);
        let order = |name: &str| Stage::ALL.iter().position(|s| s.name() == name);
        self.stages.sort_by_key(|s| order(&s.stage));
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        write_atomic(path, |w| {
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")
        })
    }
}
