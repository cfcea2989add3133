//! Plain-text run manifests: command, seed, config digest and SHA-256 of
//! every input and output file. No timestamps, so identical runs produce
//! identical manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::Failure;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").expect("write to string");
        s
    })
}

pub fn file_digest(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Core(dlstf::Error::io(path, e)))?;
    Ok(sha256_hex(&bytes))
}

pub fn config_digest(cfg: &RunConfig) -> String {
    sha256_hex(cfg.dump().as_bytes())
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            lines: vec![("command".into(), command.into()), ("seed".into(), seed.to_string())],
        }
    }

    pub fn config(mut self, cfg: &RunConfig) -> Self {
        self.lines.push(("config_sha256".into(), config_digest(cfg)));
        for line in cfg.dump().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                self.lines.push((format!("config.{k}"), v.to_string()));
            }
        }
        self
    }

    pub fn entry(mut self, key: &str, value: impl ToString) -> Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn input(self, path: &Path) -> Result<Self, Failure> {
        let digest = file_digest(path)?;
        Ok(self.entry(&format!("input.{}.sha256", file_name(path)), digest))
    }

    pub fn output(self, path: &Path) -> Result<Self, Failure> {
        let digest = file_digest(path)?;
        Ok(self.entry(&format!("output.{}.sha256", file_name(path)), digest))
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Writes to `<target>.manifest`, or `<target>/run.manifest` for a
    /// directory.
    pub fn write_for(&self, target: &Path) -> Result<PathBuf, Failure> {
        let path = if target.is_dir() {
            target.join("run.manifest")
        } else {
            let mut p = target.as_os_str().to_owned();
            p.push(".manifest");
            PathBuf::from(p)
        };
        std::fs::write(&path, self.render()).map_err(|e| Failure::Core(dlstf::Error::io(&path, e)))?;
        Ok(path)
    }
}
