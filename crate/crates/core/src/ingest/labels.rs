//! `app_id,label[,family]` label files.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub app_id: String,
    pub label: String,
    pub family: Option<String>,
}

/// Reads a label CSV. A first line starting with `app_id,` is treated as a
/// header. Blank lines and `#` lines are skipped.
pub fn read_labels<R: BufRead>(source: R) -> Result<Vec<LabelRow>> {
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::format(line_no, e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') || (rows.is_empty() && line.starts_with("app_id,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let (app_id, label, family) = match fields.as_slice() {
            [a, l] => (*a, *l, None),
            [a, l, f] => (*a, *l, Some(*f).filter(|f| !f.is_empty())),
            _ => return Err(Error::format(line_no, "expected `app_id,label[,family]`")),
        };
        if app_id.is_empty() || label.is_empty() {
            return Err(Error::format(line_no, "empty app id or label"));
        }
        if !seen.insert(app_id.to_string()) {
            return Err(Error::DuplicateAppId(app_id.to_string()));
        }
        rows.push(LabelRow {
            app_id: app_id.to_string(),
            label: label.to_string(),
            family: family.map(str::to_string),
        });
    }
    Ok(rows)
}

pub fn write_labels<'a, W: Write>(
    rows: impl IntoIterator<Item = (&'a str, &'a str)>,
    mut sink: W,
) -> std::io::Result<()> {
    writeln!(sink, "app_id,label")?;
    for (id, label) in rows {
        writeln!(sink, "{id},{label}")?;
    }
    sink.flush()
}
