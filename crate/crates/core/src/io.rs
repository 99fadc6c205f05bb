//! Plain-text output helpers shared by the run modes: CSV with a fixed
//! header, deterministic float formatting and content hashing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Shortest round-trip representation; exponent form only for very small or
/// very large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// In-memory CSV table: header row plus rows of preformatted cells.
#[derive(Debug, Clone)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        CsvTable {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            debug_assert!(!c.contains([',', '\n']), "cell {c:?}");
            self.text.push_str(c);
        }
        self.text.push('\n');
    }

    pub fn row_f64(&mut self, cells: &[f64]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, &c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{}", fmt_f64(c));
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<String> {
        fs::write(path, self.text.as_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(self.text.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Parsed CSV: header names and raw cells.
#[derive(Debug, Clone)]
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

impl ParsedCsv {
    /// Numeric column; empty or non-numeric cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.cells.iter().map(|r| r[idx].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn text_column(&self, name: &str) -> Option<Vec<&str>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.cells.iter().map(|r| r[idx].as_str()).collect())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Reads a numeric CSV whose header must equal `expected` exactly.
pub fn read_csv(path: &Path, expected: &[&str]) -> Result<ParsedCsv> {
    read_csv_mixed(path, expected, &[])
}

/// As [`read_csv`], with `text_columns` exempt from the numeric check.
pub fn read_csv_mixed(path: &Path, expected: &[&str], text_columns: &[&str]) -> Result<ParsedCsv> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_mixed(&text, expected, text_columns).map_err(|msg| Error::Config(format!("{}: {msg}", path.display())))
}

pub fn parse_csv(text: &str, expected: &[&str]) -> std::result::Result<ParsedCsv, String> {
    parse_csv_mixed(text, expected, &[])
}

pub fn parse_csv_mixed(text: &str, expected: &[&str], text_columns: &[&str]) -> std::result::Result<ParsedCsv, String> {
    if text.contains('\r') {
        return Err("CR line endings are not allowed".into());
    }
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("missing header row")?
        .split(',')
        .map(str::to_owned)
        .collect();
    if header != expected {
        return Err(format!("header {:?} does not match {:?}", header, expected));
    }
    let numeric: Vec<bool> = header.iter().map(|h| !text_columns.contains(&h.as_str())).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(format!(
                "row {} has {} cells, expected {}",
                i + 2,
                cells.len(),
                header.len()
            ));
        }
        for (c, &num) in cells.iter().zip(&numeric) {
            if num && !c.is_empty() && c.parse::<f64>().is_err() {
                return Err(format!("row {}: `{c}` is not a number", i + 2));
            }
        }
        rows.push(cells.into_iter().map(str::to_owned).collect());
    }
    Ok(ParsedCsv { header, cells: rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.5, -2.25e-7, 1e-4, 0.26328492553632892, 3.0e20, 1.0 / 3.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1.5e-7), "1.5e-7");
    }

    #[test]
    fn csv_header_is_enforced() {
        let mut t = CsvTable::new(&["time", "l2"]);
        t.row_f64(&[0.0, 1e-3]);
        let parsed = parse_csv(t.as_str(), &["time", "l2"]).unwrap();
        assert_eq!(parsed.column("l2").unwrap(), vec![1e-3]);
        assert!(parse_csv(t.as_str(), &["time", "linf"]).is_err());
        assert!(parse_csv("time,l2\r\n0,1\r\n", &["time", "l2"]).is_err());
        assert!(parse_csv("time,l2\n0\n", &["time", "l2"]).is_err());
    }
}
