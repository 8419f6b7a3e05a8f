//! Tab-separated record files.
//!
//! Fields are separated by a single tab. Inside a field, backslash, tab,
//! newline and carriage return are written as `\\`, `\t`, `\n` and `\r`.
//! Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape`]; `None` for a dangling or unknown escape.
pub fn unescape(field: &str) -> Option<String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            't' => out.push('\t'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

pub fn join(fields: &[&str]) -> String {
    fields.iter().map(|f| escape(f)).collect::<Vec<_>>().join("\t")
}

/// One parsed line with its 1-based line number, for error messages.
#[derive(Debug)]
pub struct Row {
    pub line: usize,
    pub fields: Vec<String>,
}

pub struct Reader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl Reader {
    pub fn open(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            line: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Load {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Next data row with exactly `width` fields.
    pub fn next_row(&mut self, width: usize) -> Result<Option<Row>> {
        loop {
            let Some(line) = self.lines.next() else { return Ok(None) };
            self.line += 1;
            let line = line.map_err(|e| Error::io(&self.path, e))?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = Vec::with_capacity(width);
            for raw in line.split('\t') {
                let f = unescape(raw).ok_or_else(|| self.error(self.line, "bad escape sequence"))?;
                fields.push(f);
            }
            if fields.len() != width {
                return Err(self.error(self.line, format!("expected {width} fields, found {}", fields.len())));
            }
            return Ok(Some(Row { line: self.line, fields }));
        }
    }

    /// Remaining comment-free lines, split on tabs without a width check.
    pub fn next_raw(&mut self) -> Result<Option<Row>> {
        loop {
            let Some(line) = self.lines.next() else { return Ok(None) };
            self.line += 1;
            let line = line.map_err(|e| Error::io(&self.path, e))?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = Vec::new();
            for raw in line.split('\t') {
                fields.push(unescape(raw).ok_or_else(|| self.error(self.line, "bad escape sequence"))?);
            }
            return Ok(Some(Row { line: self.line, fields }));
        }
    }
}

pub struct Writer {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Writer {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn comment(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "# {text}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn row(&mut self, fields: &[&str]) -> Result<()> {
        writeln!(self.out, "{}", join(fields)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
