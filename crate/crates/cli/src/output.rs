//! Report envelopes and file emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Format, RunConfig};

#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_digest: &'a str,
    pub config: &'a RunConfig,
    pub report: &'a T,
}

/// sha256 over the serialized config and the raw bytes of every input file.
pub fn config_digest(config: &RunConfig, inputs: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    for bytes in inputs {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// One named artifact in every format it supports.
pub struct Artifact {
    pub stem: String,
    pub json: String,
    pub csv: Option<String>,
    pub md: Option<String>,
}

impl Artifact {
    pub fn new<T: Serialize>(stem: &str, config: &RunConfig, digest: &str, report: &T) -> Self {
        let env =
            Envelope { tool: "qdspec", version: env!("CARGO_PKG_VERSION"), config_digest: digest, config, report };
        let json = serde_json::to_string_pretty(&env).expect("report serializes") + "\n";
        Self { stem: stem.to_string(), json, csv: None, md: None }
    }

    pub fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }

    pub fn with_md(mut self, md: String) -> Self {
        self.md = Some(md);
        self
    }

    fn get(&self, format: Format) -> Option<&str> {
        match format {
            Format::Json => Some(&self.json),
            Format::Csv => self.csv.as_deref(),
            Format::Md => self.md.as_deref(),
        }
    }
}

/// Writes every artifact in every format to `out`, or the first artifact in
/// the chosen format to stdout.
pub fn emit(config: &RunConfig, artifacts: &[Artifact]) -> Result<()> {
    match &config.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for a in artifacts {
                for (ext, body) in [("json", Some(&a.json)), ("csv", a.csv.as_ref()), ("md", a.md.as_ref())] {
                    if let Some(body) = body {
                        write_file(&dir.join(format!("{}.{ext}", a.stem)), body)?;
                    }
                }
            }
            Ok(())
        }
        None => {
            let first = &artifacts[0];
            let body = first.get(config.format).unwrap_or(&first.json);
            std::io::stdout().write_all(body.as_bytes()).context("writing stdout")
        }
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// CSV text from a header and rows of already-formatted fields.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Shortest round-trip representation of a float.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
