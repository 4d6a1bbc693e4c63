//! Output directory bookkeeping and the plain-text formats.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use pathlasso::trainer::StageReport;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

/// An output directory that remembers what was written into it.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Relative paths in write order, without duplicates.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn record(&mut self, rel: &str) {
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(rel);
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
            path: self.path(rel),
            source,
        })?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Appends one row to a CSV table, writing the header first if the file is new.
    pub fn append_row(&mut self, rel: &str, header: &[&str], row: &[String]) -> Result<PathBuf> {
        let path = self.path(rel);
        append_csv_row(&path, header, row)?;
        self.record(rel);
        Ok(path)
    }
}

pub fn append_csv_row(path: &Path, header: &[&str], row: &[String]) -> Result<()> {
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(header)?;
    }
    w.write_record(row)?;
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Matrix as CSV with an optional header row and an optional label column.
pub fn matrix_csv(x: ArrayView2<'_, f64>, header: Option<&[String]>, labels: Option<&[i64]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for (i, row) in x.outer_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CliError::settings(e.to_string()))
}

/// Column names `prefix0, prefix1, …`, plus `label` when asked.
pub fn column_names(prefix: &str, n: usize, label: bool) -> Vec<String> {
    let mut names: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
    if label {
        names.push("label".into());
    }
    names
}

/// Loss curves of every stage, one row per epoch.
pub fn curves_csv(stages: &[StageReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "epoch", "train_loss", "val_loss", "val_objective"])?;
    for s in stages {
        for e in 0..s.epochs.max(s.val_loss.len()) {
            let cell = |v: &[f64]| v.get(e).map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                s.name.clone(),
                (e + 1).to_string(),
                cell(&s.train_loss),
                cell(&s.val_loss),
                cell(&s.val_objective),
            ])?;
        }
    }
    w.into_inner().map_err(|e| CliError::settings(e.to_string()))
}

/// Writes the wall-clock file; it is deliberately not part of the manifest hash.
pub fn write_timing(out: &Path, timing: &serde_json::Value) -> Result<()> {
    let path = out.join(TIMING_FILE);
    let mut f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    writeln!(f, "{}", serde_json::to_string_pretty(timing).expect("timing serializes")).map_err(|e| CliError::io(&path, e))
}
