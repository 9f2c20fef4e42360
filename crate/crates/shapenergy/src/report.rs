//! CSV and JSON artifacts of a run, and the `run.json` manifest that lists them.
//!
//! Floats are written as shortest round-trip decimals so identical runs produce
//! identical bytes. Wall-clock measurements live in their own files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapenergy_core::train::{CvReport, GridSearchRow, History, Prediction};

use crate::error::{self, Result};
use crate::{sha256_hex, VERSION};

pub const RUN_FORMAT_VERSION: u32 = 1;
pub const RUN_FILE: &str = "run.json";

pub fn grid_csv(rows: &[GridSearchRow]) -> String {
    let mut out = String::from("depth,params,mse,time_per_step_s\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.depth, r.params, r.mse, r.time_per_step_s);
    }
    out
}

/// Test-set predictions sorted by simulated energy, ties by id.
pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut sorted = predictions.to_vec();
    sorted.sort_by(|a, b| a.simulated_kwh.total_cmp(&b.simulated_kwh).then(a.id.cmp(&b.id)));
    let mut out = String::from("id,simulated_kwh,predicted_kwh\n");
    for p in &sorted {
        let _ = writeln!(out, "{},{},{}", p.id, p.simulated_kwh, p.predicted_kwh);
    }
    out
}

pub fn cv_csv(report: &CvReport) -> String {
    let mut out = String::from("fold,n_val,mse\n");
    for (f, (ids, mse)) in report.folds.iter().zip(&report.fold_mse).enumerate() {
        let _ = writeln!(out, "{f},{},{mse}", ids.len());
    }
    out
}

/// Per-epoch losses; the validation column is empty when no validation set was used.
pub fn history_csv(history: &History) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (e, loss) in history.train_loss.iter().enumerate() {
        let val = history.val_loss.get(e).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{loss},{val}", e + 1);
    }
    out
}

pub fn timing_csv(history: &History) -> String {
    let mut out = String::from("epoch,seconds_per_step\n");
    for (e, s) in history.seconds_per_step.iter().enumerate() {
        let _ = writeln!(out, "{},{s}", e + 1);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a subcommand was asked to do and what it wrote. `options` uses the same
/// keys as the command-line flags, so the file can be passed back with `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub options: serde_json::Value,
    /// Configuration the options resolved to.
    pub resolved: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

/// Collects artifacts as they are written into one run directory.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl RunWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        error::create_dir(dir)?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` under the run directory and records its checksum.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        error::write(&self.dir.join(name), bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, text)
    }

    /// Records a file written by someone else, relative to the run directory.
    pub fn record_file(&mut self, name: &str) -> Result<()> {
        let bytes = error::read(&self.dir.join(name))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.artifacts.push(Artifact { path: PathBuf::from(name), sha256: sha256_hex(bytes) });
    }

    pub fn finish(self, subcommand: &str, options: serde_json::Value, resolved: serde_json::Value) -> Result<RunManifest> {
        let manifest = RunManifest {
            format_version: RUN_FORMAT_VERSION,
            tool_version: VERSION.to_string(),
            subcommand: subcommand.to_string(),
            options,
            resolved,
            artifacts: self.artifacts,
        };
        error::write_json(&self.dir.join(RUN_FILE), &manifest)?;
        Ok(manifest)
    }
}
