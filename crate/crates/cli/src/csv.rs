//! Comma-separated tables: header row, LF endings, `.` decimal, no quoting.

use crate::error::CliError;

/// Shortest round-trip decimal in exponent form.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Parse a table; `source` names the input in errors.
    pub fn parse(source: &str, text: &str) -> Result<Self, CliError> {
        let err = |line: usize, msg: String| CliError::Csv { path: source.into(), line, msg };
        let mut lines = text.split('\n').enumerate();
        let header: Vec<String> = match lines.next() {
            Some((_, h)) if !h.trim().is_empty() => h.trim_end_matches('\r').split(',').map(|s| s.trim().to_string()).collect(),
            _ => return Err(err(1, "missing header row".into())),
        };
        let mut rows = Vec::new();
        for (i, l) in lines {
            let l = l.trim_end_matches('\r');
            if l.is_empty() {
                continue;
            }
            let row: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(err(i + 1, format!("expected {} fields, found {}", header.len(), row.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    /// Numeric column by name. Errors report the 1-based file line.
    pub fn column(&self, source: &str, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Csv { path: source.into(), line: 1, msg: format!("missing column `{name}`") })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].parse::<f64>().map_err(|_| CliError::Csv {
                    path: source.into(),
                    line: i + 2,
                    msg: format!("column `{name}`: cannot parse `{}`", r[j]),
                })
            })
            .collect()
    }
}
