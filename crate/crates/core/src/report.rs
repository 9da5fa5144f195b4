//! Run manifests, CSV tables and atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub(crate) use crate::grid::num;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

/// Comma-separated table; reals with 17 significant digits.
pub fn csv(header: &[&str], rows: &[Vec<Cell>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Int(i) => i.to_string(),
                Cell::Num(v) => num(*v),
                Cell::Missing => String::new(),
            })
            .collect();
        s += &cells.join(",");
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub problem_path: Option<String>,
    pub problem_hash: Option<String>,
    /// Resolved options, in insertion order.
    pub options: Vec<(String, String)>,
    pub version: String,
    pub duration_secs: f64,
    pub verdicts: Vec<(String, String)>,
    /// `(file name, sha256)` of every artifact written next to the manifest.
    pub outputs: Vec<(String, String)>,
}

pub const MANIFEST_HEADER: &str = "# selpde-manifest v1";
pub const DURATION_KEY: &str = "duration_seconds";

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            problem_path: None,
            problem_hash: None,
            options: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: 0.0,
            verdicts: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn option(&mut self, key: &str, value: impl ToString) {
        self.options.push((key.to_string(), value.to_string()));
    }

    pub fn verdict(&mut self, key: &str, value: impl ToString) {
        self.verdicts.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\ncommand = {}\nversion = {}\n", self.command, self.version);
        if let Some(p) = &self.problem_path {
            let _ = writeln!(s, "problem = {p}");
        }
        if let Some(h) = &self.problem_hash {
            let _ = writeln!(s, "problem_sha256 = {h}");
        }
        for (k, v) in &self.options {
            let _ = writeln!(s, "option.{k} = {v}");
        }
        for (k, v) in &self.verdicts {
            let _ = writeln!(s, "verdict.{k} = {v}");
        }
        for (k, v) in &self.outputs {
            let _ = writeln!(s, "output.{k} = {v}");
        }
        let _ = writeln!(s, "{DURATION_KEY} = {:.3}", self.duration_secs);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::Invalid("missing manifest header".into()));
            }
        }
        let mut m = Self::new("");
        m.version.clear();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Invalid(format!("manifest line {}: expected `key = value`", i + 1)))?;
            let v = v.to_string();
            match k {
                "command" => m.command = v,
                "version" => m.version = v,
                "problem" => m.problem_path = Some(v),
                "problem_sha256" => m.problem_hash = Some(v),
                DURATION_KEY => {
                    m.duration_secs = v
                        .parse()
                        .map_err(|_| Error::Invalid(format!("manifest line {}: bad duration", i + 1)))?
                }
                _ => {
                    if let Some(o) = k.strip_prefix("option.") {
                        m.options.push((o.to_string(), v));
                    } else if let Some(o) = k.strip_prefix("verdict.") {
                        m.verdicts.push((o.to_string(), v));
                    } else if let Some(o) = k.strip_prefix("output.") {
                        m.outputs.push((o.to_string(), v));
                    } else {
                        return Err(Error::Invalid(format!("manifest line {}: unknown key `{k}`", i + 1)));
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Collects artifacts for one output directory and writes them atomically.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        self.written.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    /// Records the artifact hashes in `manifest` and writes `manifest.txt`.
    pub fn finish(self, manifest: &mut RunManifest) -> Result<()> {
        manifest.outputs = self.written;
        write_atomic(&self.dir.join("manifest.txt"), &manifest.render())
    }
}
