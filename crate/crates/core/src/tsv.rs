//! Minimal tab-separated table reading and writing.
//!
//! Every table the toolkit writes has optional `#key=value` metadata lines,
//! then a header row, then data rows. Fields never contain tabs or newlines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            meta: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.push((key.into(), value.into()));
        self
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Maps each required column name to its index, failing on the first missing one.
    pub fn require_columns(&self, source: &str, names: &[&str]) -> Result<BTreeMap<String, usize>> {
        names
            .iter()
            .map(|&n| {
                self.column(n)
                    .map(|i| (n.to_string(), i))
                    .ok_or_else(|| Error::format(source, 1, format!("missing column `{n}`")))
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "#{k}={v}");
        }
        out.push_str(&self.header.join("\t"));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse(source: &str, text: &str) -> Result<Table> {
        let mut table = Table::default();
        let mut header_seen = false;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                if let Some(rest) = line.strip_prefix('#') {
                    let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
                    table
                        .meta
                        .push((k.trim().to_string(), v.trim().to_string()));
                    continue;
                }
                table.header = line.split('\t').map(str::to_string).collect();
                header_seen = true;
                continue;
            }
            let row: Vec<String> = line.split('\t').map(str::to_string).collect();
            if row.len() != table.header.len() {
                return Err(Error::format(
                    source,
                    line_no,
                    format!(
                        "expected {} fields, found {}",
                        table.header.len(),
                        row.len()
                    ),
                ));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Table::parse(&path.display().to_string(), &text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.render().as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Formats a float so that parsing it back yields the identical value.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_else(|| "NA".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_parse_preserves_table() {
        let mut t = Table::new(["a", "b"]).with_meta("schema", "x/1");
        t.push(["1", "two"]);
        t.push(["3", "four"]);
        let back = Table::parse("mem", &t.render()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.meta_value("schema"), Some("x/1"));
    }

    #[test]
    fn ragged_row_is_a_format_error() {
        let err = Table::parse("mem", "a\tb\n1\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 66.0, -2.5e-12] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
