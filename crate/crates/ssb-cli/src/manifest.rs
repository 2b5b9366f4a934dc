//! Output directory with a checksummed manifest of every emitted file.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub struct OutputDir {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    wall_time_secs: f64,
    files: &'a BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<OutputDir> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    /// Write a file and record its checksum for the manifest.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> io::Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.insert(name.to_string(), sha256_hex(contents));
        Ok(())
    }

    /// Write `manifest.json`; call once, after all other files.
    pub fn finish(
        self,
        experiment: &str,
        config_raw: &[u8],
        seed: u64,
        wall_time_secs: f64,
    ) -> io::Result<()> {
        let manifest = Manifest {
            experiment,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: sha256_hex(config_raw),
            wall_time_secs,
            files: &self.files,
        };
        let body = serde_json::to_vec_pretty(&manifest)?;
        std::fs::write(self.dir.join("manifest.json"), body)
    }
}
