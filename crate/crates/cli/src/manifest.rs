//! Per-command run manifest: what went in, what came out, and how long it
//! took.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileHash {
    /// Base name only, so runs in different directories compare equal.
    pub file: String,
    /// Left out for files that record wall-clock time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// The only field that differs between identical runs.
    pub timings: Timings,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn hash_all(paths: &[(PathBuf, bool)]) -> std::io::Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|(p, timed)| {
            Ok(FileHash {
                file: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                sha256: if *timed { None } else { Some(sha256_file(p)?) },
            })
        })
        .collect()
}

pub struct Recorder {
    command: &'static str,
    seed: u64,
    start: Instant,
    inputs: Vec<(PathBuf, bool)>,
    outputs: Vec<(PathBuf, bool)>,
}

impl Recorder {
    pub fn start(command: &'static str, seed: u64) -> Self {
        Recorder { command, seed, start: Instant::now(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push((p.to_path_buf(), false));
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push((p.to_path_buf(), false));
    }

    /// An output holding wall-clock times, listed but not hashed.
    pub fn timed_output(&mut self, p: &Path) {
        self.outputs.push((p.to_path_buf(), true));
    }

    /// Writes `<command>_manifest.json` into `dir`.
    pub fn finish(self, dir: &Path) -> std::io::Result<PathBuf> {
        let m = Manifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            timings: Timings { total_seconds: self.start.elapsed().as_secs_f64() },
        };
        let path = dir.join(format!("{}_manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&m).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let mut r = Recorder::start("clean", 3);
        r.input(&p);
        r.timed_output(&p);
        let out = r.finish(dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
        assert_eq!(v["inputs"][0]["file"], "abc.txt");
        assert_eq!(v["seed"], 3);
        assert!(v["outputs"][0].get("sha256").is_none());
    }
}
