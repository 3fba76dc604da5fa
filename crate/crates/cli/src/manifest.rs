use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Settings;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written beside every output file as `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub timestamp: String,
    pub seed: Option<u64>,
    pub config: &'a Settings,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// SHA-256 of a file, or of a directory's files in sorted relative-path order
/// (each path and its content go into the digest).
pub fn digest(path: &Path) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        for f in files {
            h.update(f.strip_prefix(path)?.to_string_lossy().as_bytes());
            h.update([0]);
            hash_file(&f, &mut h)?;
        }
    } else {
        hash_file(path, &mut h)?;
    }
    Ok(hex::encode(h.finalize()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn hash_file(path: &Path, h: &mut Sha256) -> anyhow::Result<()> {
    let mut f = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        h.update(&buf[..n]);
    }
}

pub fn digests(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: digest(p)?,
            })
        })
        .collect()
}

/// Writes one manifest next to each output.
pub fn write_manifests(command: &str, config: &Settings, inputs: &[PathBuf], outputs: &[PathBuf]) -> anyhow::Result<()> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        timestamp: chrono::Utc::now().to_rfc3339(),
        seed: config.seed,
        config,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    for out in outputs {
        fs::write(manifest_path(out), &json)?;
    }
    Ok(())
}
