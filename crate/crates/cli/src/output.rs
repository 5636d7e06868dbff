//! Atomic output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Output files staged under temporary names and renamed into place only
/// when the whole run succeeds. Dropping without [`commit`](Self::commit)
/// removes everything staged.
#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl Outputs {
    /// Reserves `path` and returns the temporary path to write instead.
    pub fn stage(&mut self, path: &Path) -> Result<PathBuf> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let name = path
            .file_name()
            .with_context(|| format!("{} is not a file path", path.display()))?
            .to_string_lossy();
        let tmp = path.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        self.staged.push((tmp.clone(), path.to_path_buf()));
        Ok(tmp)
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = self.stage(path)?;
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", path.display()))
    }

    /// Final paths and the SHA-256 of their staged contents.
    pub fn digests(&self) -> Result<Vec<FileDigest>> {
        self.staged
            .iter()
            .map(|(tmp, fin)| {
                Ok(FileDigest {
                    path: fin.display().to_string(),
                    sha256: digest_file(tmp)?,
                })
            })
            .collect()
    }

    pub fn commit(mut self) -> Result<()> {
        for (tmp, fin) in &self.staged {
            fs::rename(tmp, fin).with_context(|| format!("moving output into {}", fin.display()))?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = fs::remove_file(tmp);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// What a run consumed and produced. Contains nothing that varies between
/// identical runs (no timestamps, hosts, or thread counts).
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub arguments: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub versions: Versions,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub percept_ops: &'static str,
    pub cli: &'static str,
    pub manifest_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            percept_ops: percept_ops::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
            manifest_format: 1,
        }
    }
}

/// Digests of the input files, in the order given.
pub fn input_digests(paths: &[&Path]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: digest_file(p)?,
            })
        })
        .collect()
}

/// Stages the manifest describing everything already staged, then commits.
pub fn finish(
    mut outputs: Outputs,
    manifest_path: &Path,
    command: &str,
    seed: Option<u64>,
    arguments: serde_json::Value,
    inputs: Vec<FileDigest>,
) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        seed,
        arguments,
        inputs,
        outputs: outputs.digests()?,
        versions: Versions::current(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    outputs.write(manifest_path, text.as_bytes())?;
    outputs.commit()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = std::env::temp_dir().join(format!("percept-ops-output-{}", std::process::id()));
        let target = dir.join("a.csv");
        {
            let mut out = Outputs::default();
            out.write(&target, b"x\n").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 0);
        let mut out = Outputs::default();
        out.write(&target, b"x\n").unwrap();
        out.commit().unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"x\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
