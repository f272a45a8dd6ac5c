use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliError;

/// 17 significant digits, enough to round-trip any double.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes artifacts below one directory and remembers what it wrote.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    /// The directory itself appears with the first file.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            written: Vec::new(),
        }
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn target(&mut self, name: &str) -> Result<PathBuf, CliError> {
        if self.written.is_empty() {
            fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))?;
        }
        self.written.push(name.to_string());
        Ok(self.root.join(name))
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &[String], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.target(name)?;
        let io = |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(err) => CliError::io(&path, err),
            other => CliError::io(&path, std::io::Error::other(format!("{other:?}"))),
        };
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.into_iter().collect::<Vec<_>>())
                .map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }

    /// Square matrix with a `mode,1..K` header and 1-based row labels.
    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        let header: Vec<String> = std::iter::once("mode".to_string())
            .chain((1..=m.ncols()).map(|k| k.to_string()))
            .collect();
        let rows = (0..m.nrows()).map(|i| {
            std::iter::once((i + 1).to_string())
                .chain(m.row(i).iter().map(|&x| fmt(x)))
                .collect::<Vec<_>>()
        });
        self.csv(name, &header, rows)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.target(name)?;
        write_json(&path, value)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}{k}"))
}
