//! Result files: CSV tables, JSON reports, plot series and the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// 17 significant digits, locale independent.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct SeriesEntry {
    name: String,
    file: String,
    caption: String,
    x: String,
    y: String,
}

/// An output directory that records every file written into it.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    series: Vec<SeriesEntry>,
    timings: Vec<(String, f64)>,
    started: Instant,
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl OutputDir {
    /// Creates the directory and checks that it accepts writes.
    pub fn create(root: &Path) -> Result<OutputDir, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let probe = root.join(".write-probe");
        fs::write(&probe, b"").map_err(|e| io_err(root, e))?;
        fs::remove_file(&probe).map_err(|e| io_err(&probe, e))?;
        // A marker left by an earlier failed run would be stale now.
        let _ = fs::remove_file(root.join("FAILED"));
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
            series: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serialisable report");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    /// Two-column `(x, y)` series under `plots/`, indexed in `plots/index.json`.
    pub fn write_series(
        &mut self,
        name: &str,
        caption: &str,
        (x, y): (&str, &str),
        points: &[(f64, f64)],
    ) -> Result<(), CliError> {
        let file = format!("plots/{name}.dat");
        let mut text = format!("# {x} {y}\n");
        for (a, b) in points {
            text.push_str(&format!("{} {}\n", num(*a), num(*b)));
        }
        self.write(&file, text.as_bytes())?;
        self.series.retain(|s| s.name != name);
        self.series.push(SeriesEntry {
            name: name.to_string(),
            file,
            caption: caption.to_string(),
            x: x.to_string(),
            y: y.to_string(),
        });
        Ok(())
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    /// Writes the FAILED marker; the manifest still follows.
    pub fn mark_failed(&mut self, err: &CliError) -> Result<(), CliError> {
        self.write("FAILED", format!("{err}\n").as_bytes())
    }

    /// Writes the plot index and the manifest, which lists every other file.
    pub fn finish(mut self, config: &Value, status: &str) -> Result<(), CliError> {
        if !self.series.is_empty() {
            let index = serde_json::to_value(&self.series).expect("serialisable index");
            self.write_json("plots/index.json", &index)?;
        }
        let timings: serde_json::Map<String, Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "status": status,
            "config": config,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "stage_times_s": timings,
            "files": self.files,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("serialisable manifest");
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}
