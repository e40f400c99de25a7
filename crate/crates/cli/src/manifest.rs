use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Everything needed to rerun a command: resolved flags, input digests,
/// seed and version. Written next to every output.
pub struct RunManifest {
    subcommand: &'static str,
    started: Instant,
    seed: Option<u64>,
    flags: Vec<(String, String)>,
    inputs: Vec<(String, PathBuf, String)>,
    outputs: Vec<(String, PathBuf, String)>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(subcommand: &'static str) -> Self {
        RunManifest {
            subcommand,
            started: Instant::now(),
            seed: None,
            flags: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) {
        self.flags.push((name.to_string(), value.to_string()));
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.push((role.to_string(), path.to_path_buf(), digest));
        Ok(())
    }

    /// Writes `contents` to `path` and records its digest.
    pub fn output(&mut self, role: &str, path: &Path, contents: &[u8]) -> Result<()> {
        write_bytes(path, contents)?;
        self.record_output(role, path)
    }

    pub fn record_output(&mut self, role: &str, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.outputs.push((role.to_string(), path.to_path_buf(), digest));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# sgaae run manifest\n");
        let _ = writeln!(out, "subcommand\t{}", self.subcommand);
        let _ = writeln!(out, "version\tsgaae {}", env!("CARGO_PKG_VERSION"));
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed\t{seed}");
        }
        for (k, v) in &self.flags {
            let _ = writeln!(out, "flag\t{k}\t{v}");
        }
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(out, "input\t{role}\t{}\t{digest}", path.display());
        }
        for (role, path, digest) in &self.outputs {
            let _ = writeln!(out, "output\t{role}\t{}\t{digest}", path.display());
        }
        let _ = writeln!(out, "wall_clock_ms\t{}", self.started.elapsed().as_millis());
        out
    }

    /// Writes the manifest to `explicit`, or to `<primary>.manifest`.
    pub fn finish(self, explicit: Option<&Path>, primary: &Path) -> Result<PathBuf> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => with_suffix(primary, "manifest"),
        };
        write_bytes(&path, self.render().as_bytes())?;
        Ok(path)
    }
}

/// `path` with `.suffix` appended to its full file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_bytes(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
