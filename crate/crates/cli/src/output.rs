//! Atomic output files and the run manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through a temporary file in the same directory, then
    /// renames it into place.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let target = self.root.join(name);
        let tmp = tempfile::NamedTempFile::new_in(&self.root)
            .with_context(|| format!("cannot create a temporary file in {}", self.root.display()))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w).with_context(|| format!("while writing {name}"))?;
            w.flush()?;
        }
        tmp.persist(&target)
            .with_context(|| format!("cannot move output into {}", target.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        self.write_with(name, |w| {
            let mut csv = csv::Writer::from_writer(w);
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
            Ok(())
        })
    }

    /// Writes a CSV from a header and string records.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        self.write_with(name, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(header)?;
            for r in rows {
                csv.write_record(r)?;
            }
            csv.flush()?;
            Ok(())
        })
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.outputs = self.written.clone();
        let body = serde_json::to_vec_pretty(&manifest)?;
        self.write_with("manifest.json", |w| {
            w.write_all(&body)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &str) -> Result<InputDigest> {
    let data = fs::read(path).with_context(|| format!("cannot read {path}"))?;
    Ok(InputDigest {
        path: path.to_string(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

/// Everything needed to rerun a command exactly.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub params: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub notes: serde_json::Map<String, serde_json::Value>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, params: impl Serialize, inputs: Vec<InputDigest>) -> Result<Self> {
        Ok(Self {
            tool: "ersecov",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            params: serde_json::to_value(params)?,
            inputs,
            notes: serde_json::Map::new(),
            outputs: Vec::new(),
        })
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.notes.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }
}

/// A label made safe for file names: `ERSE(delta=0.3)` becomes `ERSE_delta_0_3`.
pub fn file_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| x.to_string())
}

/// Empty for missing values in per-month series.
pub fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}
