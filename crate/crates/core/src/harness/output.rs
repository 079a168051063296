use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Accumulates CSV text; every float goes through [`fmt_f64`].
#[derive(Debug, Default)]
pub struct Csv {
    text: String,
}

pub enum Cell<'a> {
    F(f64),
    U(u64),
    B(bool),
    S(&'a str),
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => self.text.push_str(&fmt_f64(*x)),
                Cell::U(n) => {
                    let _ = write!(self.text, "{n}");
                }
                Cell::B(b) => self.text.push_str(if *b { "true" } else { "false" }),
                Cell::S(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Writes files under one directory and remembers their checksums.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| Error::Io {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            checksums: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `name` (a bare file name) and records its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name.contains('/') || name.contains('\\') || name.starts_with('.') {
            return Err(Error::Usage(format!("output name {name:?} must be a plain file name")));
        }
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, csv: Csv) -> Result<()> {
        self.write(name, csv.into_string().as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.checksums
    }
}

/// PASS/FAIL lines written to `report.txt`.
#[derive(Debug, Default, Clone, Serialize)]
pub struct Report {
    pub lines: Vec<(String, bool, String)>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.lines.push((name.to_string(), passed, detail.into()));
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|l| l.1)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, ok, detail) in &self.lines {
            let _ = writeln!(s, "{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
