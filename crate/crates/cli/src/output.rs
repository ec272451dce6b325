//! CSV emission with a reproducible metadata header.
//!
//! Floats are printed in Rust's shortest round-trip form, so re-parsing an
//! output file reproduces the exact binary values; nothing time- or
//! machine-dependent enters the stream, making outputs byte-identical for
//! identical (config, seed, version).

use crate::CliError;
use std::fmt::Write as _;
use std::path::Path;

pub struct CsvWriter {
    buffer: String,
}

impl CsvWriter {
    pub fn new(command: &str, model_hash: &str, seed: u64) -> Self {
        let mut buffer = String::new();
        let _ = writeln!(buffer, "# ruin v{}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(buffer, "# command = {command}");
        let _ = writeln!(buffer, "# model_sha256 = {model_hash}");
        let _ = writeln!(buffer, "# seed = {seed}");
        CsvWriter { buffer }
    }

    pub fn header(&mut self, columns: &[&str]) {
        let _ = writeln!(self.buffer, "{}", columns.join(","));
    }

    pub fn row(&mut self, fields: &[CsvField])
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.buffer.push(',');
            }
            first = false;
            match f {
                CsvField::Float(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
                CsvField::Int(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
                CsvField::Text(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
                CsvField::Bool(v) => {
                    let _ = write!(self.buffer, "{v}");
                }
            }
        }
        self.buffer.push('\n');
    }

    pub fn write_to(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.buffer.as_bytes())
            .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))
    }
}

pub enum CsvField {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

pub fn float(v: f64) -> CsvField {
    CsvField::Float(v)
}

pub fn int(v: i64) -> CsvField {
    CsvField::Int(v)
}

pub fn text(v: impl Into<String>) -> CsvField {
    CsvField::Text(v.into())
}

pub fn boolean(v: bool) -> CsvField {
    CsvField::Bool(v)
}
