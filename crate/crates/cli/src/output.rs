//! Buffered emission: outputs are rendered fully in memory, then written to
//! a sibling temp file and renamed, so a failing command never leaves a
//! truncated file behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// JSON when the path ends in `.json`, else `fallback`.
    pub fn for_path(path: Option<&Path>, fallback: Format) -> Format {
        match path.and_then(|p| p.extension()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => fallback,
        }
    }
}

pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
        Some(p) => {
            let tmp = temp_sibling(p);
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, p)?;
        }
    }
    Ok(())
}

fn temp_sibling(p: &Path) -> PathBuf {
    let mut name = p.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    p.with_file_name(name)
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| crate::error::CliError::usage(format!("csv: {e}")))
}

pub fn json_bytes<T: serde::Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn num(v: f64) -> String {
    lpmtl::rademacher::format_f64(v)
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
