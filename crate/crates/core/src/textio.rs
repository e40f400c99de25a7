//! Shared pieces of the crate's plain-text file formats.
//!
//! Reals are written with Rust's shortest round-trip formatting, so a value
//! read back is bit-identical to the value written.

use ndarray::Array2;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        FormatError {
            line,
            message: message.into(),
        }
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Appends `matrix <label> <rows> <cols>` followed by one line per row.
pub fn write_matrix(out: &mut String, label: &str, m: &Array2<f64>) {
    let _ = writeln!(out, "matrix {label} {} {}", m.nrows(), m.ncols());
    for row in m.rows() {
        write_reals(out, row.iter().copied());
    }
}

pub fn write_reals(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

/// Line cursor over a text file that skips blank lines and `#` comments and
/// remembers 1-based line numbers for error messages.
pub struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last_line: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().enumerate(),
            last_line: 0,
        }
    }

    pub fn line_number(&self) -> usize {
        self.last_line
    }

    pub fn error(&self, message: impl Into<String>) -> FormatError {
        FormatError::new(self.last_line, message)
    }

    /// Next meaningful line, trimmed.
    pub fn next_line(&mut self) -> Option<&'a str> {
        for (idx, raw) in self.lines.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.last_line = idx + 1;
            return Some(line);
        }
        None
    }

    pub fn expect_line(&mut self, what: &str) -> Result<&'a str, FormatError> {
        match self.next_line() {
            Some(l) => Ok(l),
            None => Err(FormatError::new(
                self.last_line + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    /// Reads a `key value` line and parses the value.
    pub fn expect_field<T: FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        let line = self.expect_line(key)?;
        let mut parts = line.splitn(2, char::is_whitespace);
        let found = parts.next().unwrap_or("");
        if found != key {
            return Err(self.error(format!("expected `{key}`, found `{found}`")));
        }
        let raw = parts.next().unwrap_or("").trim();
        raw.parse()
            .map_err(|_| self.error(format!("invalid value `{raw}` for `{key}`")))
    }

    /// Parses every whitespace-separated token of the next line.
    pub fn expect_values<T: FromStr>(&mut self, what: &str) -> Result<Vec<T>, FormatError> {
        let line = self.expect_line(what)?;
        parse_tokens(line).map_err(|tok| self.error(format!("invalid number `{tok}` in {what}")))
    }

    /// Reads a block written by [`write_matrix`], checking the label.
    pub fn expect_matrix(&mut self, label: &str) -> Result<Array2<f64>, FormatError> {
        let header = self.expect_line(label)?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 4 || tokens[0] != "matrix" || tokens[1] != label {
            return Err(self.error(format!("expected `matrix {label} <rows> <cols>`")));
        }
        let rows: usize = tokens[2]
            .parse()
            .map_err(|_| self.error("invalid row count"))?;
        let cols: usize = tokens[3]
            .parse()
            .map_err(|_| self.error("invalid column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row: Vec<f64> = self.expect_values(label)?;
            if row.len() != cols {
                return Err(self.error(format!(
                    "matrix {label}: expected {cols} values, found {}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    }
}

pub fn parse_tokens<T: FromStr>(line: &str) -> Result<Vec<T>, String> {
    line.split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| t.to_string()))
        .collect()
}
