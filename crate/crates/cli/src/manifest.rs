use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chanvec::util::{sha256_hex, write_atomic};
use serde::Serialize;
use serde_json::Value;

/// What a command ran with and what it produced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub params: Value,
    pub seed: Option<u64>,
    pub version: String,
    /// Path to SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub results: Value,
    pub started_at: String,
    pub finished_at: String,
}

pub struct Run {
    manifest: RunManifest,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Run {
    pub fn start(command: &str, params: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Run {
            manifest: RunManifest {
                command: command.to_string(),
                argv: std::env::args().collect(),
                params: serde_json::to_value(params)?,
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                results: Value::Null,
                started_at: now(),
                finished_at: String::new(),
            },
        })
    }

    /// Record an input file, or every file directly inside an input directory.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for f in files {
                self.input(&f)?;
            }
            return Ok(());
        }
        self.manifest.inputs.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    /// Write an output atomically and record its digest.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Record an output some other code already wrote.
    pub fn wrote(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn results(&mut self, v: impl Serialize) -> Result<()> {
        self.manifest.results = serde_json::to_value(v)?;
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.manifest.finished_at = now();
        write_atomic(path, &json_bytes(&self.manifest)?)?;
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

/// `<file>.manifest.json` beside a single-file output.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// CSV with an explicit header, so empty outputs still have one.
pub fn csv_bytes<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}
