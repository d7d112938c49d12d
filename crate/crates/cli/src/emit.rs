//! Output formatting: CSV tables with a self-describing comment header
//! and JSON documents with the same metadata.
//!
//! Reals are written with 17 significant digits ('.' decimal, no
//! grouping), which round-trips every double. Output is built in memory
//! and written in one shot, so a failed run never leaves a partial
//! file.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17-significant-digit representation of a double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// A CSV document under construction.
pub struct CsvDoc {
    buf: String,
}

impl CsvDoc {
    /// Starts a document with the standard header block: command,
    /// version, and the resolved semantic config as one JSON line.
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Self> {
        let mut buf = String::new();
        writeln!(buf, "# bclab {command}")?;
        writeln!(buf, "# version: {VERSION}")?;
        writeln!(
            buf,
            "# config: {}",
            serde_json::to_string(config).context("serializing config header")?
        )?;
        Ok(CsvDoc { buf })
    }

    pub fn comment(&mut self, line: &str) {
        let _ = writeln!(self.buf, "# {line}");
    }

    pub fn columns(&mut self, names: &[&str]) {
        let _ = writeln!(self.buf, "{}", names.join(","));
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.buf, "{}", fields.join(","));
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Wraps results in the standard JSON envelope.
pub fn json_doc<C: Serialize, R: Serialize>(
    command: &str,
    config: &C,
    results: &R,
) -> Result<String> {
    #[derive(Serialize)]
    struct Envelope<'a, C, R> {
        command: &'a str,
        version: &'a str,
        config: &'a C,
        results: &'a R,
    }
    let mut out = serde_json::to_string_pretty(&Envelope {
        command,
        version: VERSION,
        config,
        results,
    })
    .context("serializing results")?;
    out.push('\n');
    Ok(out)
}

/// Writes to the path, or to stdout when no path is given.
pub fn write_output(out: Option<&Path>, payload: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, payload)
            .with_context(|| format!("writing output to {}", path.display())),
        None => std::io::stdout()
            .write_all(payload.as_bytes())
            .context("writing output to stdout"),
    }
}
