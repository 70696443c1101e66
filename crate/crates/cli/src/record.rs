//! Per-run provenance. Every command that writes files also writes a run
//! record next to its output, holding the effective configuration, its
//! digest and the digests of the input files. Wall-clock times go to a
//! separate `.log` sidecar so the record itself is reproducible.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use predsens_core::digest::{json_digest, sha256_hex};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: &'static str,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

pub struct Run {
    record: RunRecord,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn start(command: &'static str, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Run {
            record: RunRecord {
                command,
                config_digest: json_digest(&config),
                config,
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
            },
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.record
            .inputs
            .insert(format!("{role}:{}", path.display()), sha256_hex(&bytes));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.record.outputs.push(path.display().to_string());
    }

    /// Writes the record to `record_path` and appends timing to `log_path`.
    pub fn finish(self, record_path: &Path, log_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.record)? + "\n";
        fs::write(record_path, json).with_context(|| format!("writing {}", record_path.display()))?;
        let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .with_context(|| format!("opening {}", log_path.display()))?;
        writeln!(
            log,
            "command={} config_digest={} started_unix={:.3} finished_unix={:.3} elapsed_s={:.3}",
            self.record.command,
            self.record.config_digest,
            unix(self.started),
            unix(SystemTime::now()),
            self.clock.elapsed().as_secs_f64()
        )?;
        Ok(())
    }

    /// Record and log next to a file output: `x.csv` gets `x.run.json` and
    /// `x.log`.
    pub fn finish_beside(self, out: &Path) -> Result<()> {
        let (record, log) = sidecars(out);
        self.finish(&record, &log)
    }
}

pub fn sidecars(out: &Path) -> (PathBuf, PathBuf) {
    (out.with_extension("run.json"), out.with_extension("log"))
}
