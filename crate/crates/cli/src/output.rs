//! Deterministic artifact writing: CSV tables, heatmaps and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

/// Round-trip exact double formatting (17 significant digits).
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Collects artifacts written under one output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<String>,
    started: Instant,
}

impl ArtifactWriter {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self { dir, files: Vec::new(), started: Instant::now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let path = self.dir.join(name);
        let fail = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(&path, std::io::Error::other(e.to_string())))?;
        self.write_text(name, &String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Square matrix as CSV with columns `i,j,value`.
    pub fn write_matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        let mut rows = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                rows.push(vec![i.to_string(), j.to_string(), num(m[(i, j)])]);
            }
        }
        self.write_csv(name, &["i", "j", "value"], &rows)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("serialisable");
        self.write_text(name, &(text + "\n"))
    }

    /// Writes `manifest.json` listing every artifact (itself included).
    pub fn finish(mut self, command: &str, config_hash: &str, seeds: &[u64]) -> Result<PathBuf, CliError> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        files.sort();
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seeds: seeds.to_vec(),
            files,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(self.dir)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), -1e-300, 6.02e23] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn manifest_lists_every_file() {
        let tmp = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(tmp.path().join("out")).unwrap();
        w.write_csv("a.csv", &["x"], &[vec!["1".into()]]).unwrap();
        w.write_text("sub/b.txt", "hi").unwrap();
        let dir = w.finish("test", "abc", &[1]).unwrap();
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(files, vec!["a.csv", "manifest.json", "sub/b.txt"]);
        assert_eq!(fs::read_to_string(dir.join("a.csv")).unwrap(), "x\n1\n");
    }
}
