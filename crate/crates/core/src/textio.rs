//! Helpers shared by the line-oriented file formats.
//!
//! Every format starts with a header line `#regionfl <kind> v<version>`
//! optionally followed by space-separated `key=value` pairs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAGIC: &str = "#regionfl";

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parsed header: the key/value pairs after the magic, kind and version.
pub struct Header {
    pub fields: BTreeMap<String, String>,
    path: std::path::PathBuf,
}

impl Header {
    pub fn render(kind: &str, version: u32, fields: &[(&str, String)]) -> String {
        let mut s = format!("{MAGIC} {kind} v{version}");
        for (k, v) in fields {
            s.push(' ');
            s.push_str(k);
            s.push('=');
            s.push_str(v);
        }
        s
    }

    pub fn parse(path: &Path, lines: &[String], kind: &str, version: u32) -> Result<Header> {
        let first = lines
            .first()
            .ok_or_else(|| Error::parse(path, 1, format!("missing {kind} header")))?;
        let mut tokens = first.split_whitespace();
        if tokens.next() != Some(MAGIC) || tokens.next() != Some(kind) {
            return Err(Error::parse(
                path,
                1,
                format!("missing {kind} header, expected `{MAGIC} {kind} v{version}`"),
            ));
        }
        let want = format!("v{version}");
        match tokens.next() {
            Some(v) if v == want => {}
            other => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("unsupported {kind} version {:?}, expected {want}", other.unwrap_or("")),
                ))
            }
        }
        let mut fields = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("malformed header field `{tok}`")))?;
            fields.insert(k.to_owned(), v.to_owned());
        }
        Ok(Header {
            fields,
            path: path.to_owned(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .fields
            .get(key)
            .ok_or_else(|| Error::parse(&self.path, 1, format!("header is missing `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::parse(&self.path, 1, format!("invalid `{key}` value `{raw}`")))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw: String = self.get(key)?;
        parse_list(&self.path, 1, &raw, ',')
    }
}

pub fn parse_field<T: FromStr>(path: &Path, line: usize, raw: &str, what: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} `{raw}`")))
}

pub fn parse_list<T: FromStr>(path: &Path, line: usize, raw: &str, sep: char) -> Result<Vec<T>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(sep)
        .map(|tok| parse_field(path, line, tok, "list entry"))
        .collect()
}

pub fn join<T: ToString>(values: &[T], sep: &str) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

/// Data lines (1-based line number, content), skipping the header and blanks.
pub fn body(lines: &[String]) -> impl Iterator<Item = (usize, &str)> {
    lines
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.as_str()))
}
