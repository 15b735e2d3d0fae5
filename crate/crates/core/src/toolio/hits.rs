//! Tab-separated structural search hit tables (Foldseek `easy-search`
//! with a custom `--format-output`).
//!
//! The column list is declared by the caller since the tool writes no
//! header. A first line that spells out exactly the declared column names
//! is treated as a header and skipped.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{is_blank, numbered_lines, read_all, utf8_line, ToolError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HitColumns {
    pub columns: Vec<String>,
    pub query: String,
    pub target: String,
    /// Which TM-score column to use (`alntmscore`, `qtmscore`, `ttmscore`).
    pub tm: String,
}

impl Default for HitColumns {
    fn default() -> Self {
        HitColumns {
            columns: ["query", "target", "alntmscore", "evalue", "bits"]
                .map(String::from)
                .to_vec(),
            query: "query".into(),
            target: "target".into(),
            tm: "alntmscore".into(),
        }
    }
}

impl HitColumns {
    fn indices(&self) -> Result<(usize, usize, usize), ToolError> {
        let find = |name: &str| {
            self.columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| ToolError::MissingColumn(name.to_string()))
        };
        Ok((find(&self.query)?, find(&self.target)?, find(&self.tm)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralHit {
    pub query: String,
    pub target: String,
    pub tm_score: f64,
    /// 1-based rank within the query, by descending TM-score.
    pub rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HitTable {
    by_query: BTreeMap<String, Vec<StructuralHit>>,
    /// Lines skipped in lenient mode.
    pub rejected_lines: Vec<usize>,
}

impl HitTable {
    pub fn best(&self, query: &str) -> Option<&StructuralHit> {
        self.by_query.get(query).and_then(|v| v.first())
    }

    pub fn hits(&self, query: &str) -> &[StructuralHit] {
        self.by_query.get(query).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StructuralHit> {
        self.by_query.values().flatten()
    }
}

/// With `strict` the first bad row is an error; otherwise bad rows are
/// recorded in [`HitTable::rejected_lines`] and skipped.
pub fn parse_structural_hits<R: Read>(input: R, columns: &HitColumns, strict: bool) -> Result<HitTable, ToolError> {
    let (qi, ti, mi) = columns.indices()?;
    let data = read_all(input)?;
    let mut table = HitTable::default();
    let mut first = true;
    for (line, bytes) in numbered_lines(&data) {
        if is_blank(bytes) {
            continue;
        }
        let was_first = std::mem::replace(&mut first, false);
        let row = utf8_line(line, bytes).and_then(|text| {
            let fields: Vec<&str> = text.split('\t').collect();
            if was_first && fields.iter().zip(&columns.columns).all(|(f, c)| f == c) && fields.len() == columns.columns.len() {
                return Ok(None);
            }
            parse_row(line, &fields, columns.columns.len(), qi, ti, mi).map(Some)
        });
        match row {
            Ok(Some(hit)) => table.by_query.entry(hit.query.clone()).or_default().push(hit),
            Ok(None) => {}
            Err(e) if strict => return Err(e),
            Err(_) => table.rejected_lines.push(line),
        }
    }
    for hits in table.by_query.values_mut() {
        hits.sort_by(|a, b| b.tm_score.total_cmp(&a.tm_score).then_with(|| a.target.cmp(&b.target)));
        for (i, h) in hits.iter_mut().enumerate() {
            h.rank = i + 1;
        }
    }
    Ok(table)
}

fn parse_row(
    line: usize,
    fields: &[&str],
    width: usize,
    qi: usize,
    ti: usize,
    mi: usize,
) -> Result<StructuralHit, ToolError> {
    let bad = |message: String| ToolError::UnparsableRow { line, message };
    if fields.len() != width {
        return Err(bad(format!("expected {width} fields, found {}", fields.len())));
    }
    let (query, target) = (fields[qi].trim(), fields[ti].trim());
    if query.is_empty() || target.is_empty() {
        return Err(bad("empty query or target".into()));
    }
    let tm_score: f64 = fields[mi].trim().parse().map_err(|_| bad(format!("bad TM-score '{}'", fields[mi])))?;
    if !(0.0..=1.0).contains(&tm_score) {
        return Err(bad(format!("TM-score {tm_score} outside [0, 1]")));
    }
    Ok(StructuralHit {
        query: query.to_string(),
        target: target.to_string(),
        tm_score,
        rank: 0,
    })
}

/// Writes `query`, `target`, TM-score rows with a header naming the
/// columns. Parsing the output with [`write_columns`] gives back the same
/// table.
pub fn write_structural_hits<W: Write>(table: &HitTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "query\ttarget\ttmscore")?;
    for h in table.iter() {
        writeln!(out, "{}\t{}\t{}", h.query, h.target, h.tm_score)?;
    }
    Ok(())
}

/// Column declaration matching [`write_structural_hits`].
pub fn write_columns() -> HitColumns {
    HitColumns {
        columns: ["query", "target", "tmscore"].map(String::from).to_vec(),
        query: "query".into(),
        target: "target".into(),
        tm: "tmscore".into(),
    }
}
