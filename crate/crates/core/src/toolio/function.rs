//! Function evidence: TPS detector scores, EC number predictions and
//! domain annotations.
//!
//! Detector scores are `id,score` rows. EC predictions are
//! `id, EC:a.b.c.d/confidence, ...` rows (the CLEAN output layout).
//! Domain annotations are InterProScan TSV rows with configurable column
//! positions. Each file may start with a header line whose first field is
//! `id` (case-insensitive).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{is_blank, numbered_lines, read_all, utf8_line, ToolError};

fn csv_rows(data: &[u8]) -> impl Iterator<Item = Result<(usize, csv::StringRecord), ToolError>> + '_ {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(data);
    let mut record = csv::StringRecord::new();
    let mut first = true;
    std::iter::from_fn(move || loop {
        let line = reader.position().line() as usize;
        match reader.read_record(&mut record) {
            Ok(false) => return None,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line() as usize);
                if record.iter().all(str::is_empty) {
                    continue;
                }
                if std::mem::replace(&mut first, false) && record[0].eq_ignore_ascii_case("id") {
                    continue;
                }
                return Some(Ok((line, record.clone())));
            }
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line() as usize);
                // the reader cannot resume reliably after an error
                return Some(Err(ToolError::UnparsableRow {
                    line,
                    message: e.to_string(),
                }));
            }
        }
    })
}

fn check_duplicate(seen: &mut HashMap<String, usize>, id: &str, line: usize) -> Result<(), ToolError> {
    if let Some(&first_line) = seen.get(id) {
        return Err(ToolError::DuplicateId {
            id: id.to_string(),
            first_line,
            second_line: line,
        });
    }
    seen.insert(id.to_string(), line);
    Ok(())
}

pub fn parse_detector_scores<R: Read>(input: R) -> Result<BTreeMap<String, f64>, ToolError> {
    let data = read_all(input)?;
    let mut out = BTreeMap::new();
    let mut seen = HashMap::new();
    for row in csv_rows(&data) {
        let (line, rec) = row?;
        if rec.len() != 2 || rec[0].is_empty() {
            return Err(ToolError::UnparsableRow {
                line,
                message: "expected 'id,score'".into(),
            });
        }
        let value: f64 = rec[1].parse().map_err(|_| ToolError::UnparsableRow {
            line,
            message: format!("bad score '{}'", &rec[1]),
        })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(ToolError::ScoreOutOfRange { line, value });
        }
        check_duplicate(&mut seen, &rec[0], line)?;
        out.insert(rec[0].to_string(), value);
    }
    Ok(out)
}

/// A four-field EC number. The first three fields are positive integers;
/// the fourth may be unspecified (`-`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EcNumber {
    pub class: [u32; 3],
    pub serial: Option<u32>,
}

impl FromStr for EcNumber {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ToolError::MalformedEc(s.to_string());
        let parts: Vec<&str> = s.split('.').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let positive = |p: &str| -> Result<u32, ToolError> {
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            p.parse().ok().filter(|&v| v > 0).ok_or_else(bad)
        };
        let class = [positive(parts[0])?, positive(parts[1])?, positive(parts[2])?];
        let serial = match parts[3] {
            "-" => None,
            p => Some(positive(p)?),
        };
        Ok(EcNumber { class, serial })
    }
}

impl fmt::Display for EcNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.class;
        match self.serial {
            Some(d) => write!(f, "{a}.{b}.{c}.{d}"),
            None => write!(f, "{a}.{b}.{c}.-"),
        }
    }
}

/// An allowlist entry. `4.2.3.-` matches every `4.2.3.x`; a full number
/// matches only itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EcPattern(EcNumber);

impl EcPattern {
    pub fn matches(&self, ec: &EcNumber) -> bool {
        self.0.class == ec.class && (self.0.serial.is_none() || self.0.serial == ec.serial)
    }
}

impl FromStr for EcPattern {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(EcPattern)
    }
}

impl TryFrom<String> for EcPattern {
    type Error = ToolError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EcPattern> for String {
    fn from(p: EcPattern) -> String {
        p.0.to_string()
    }
}

impl fmt::Display for EcPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcPrediction {
    pub ec: EcNumber,
    pub confidence: Option<f64>,
}

fn parse_ec_token(token: &str) -> Result<EcPrediction, ToolError> {
    let bad = || ToolError::MalformedEc(token.to_string());
    let body = token.strip_prefix("EC:").ok_or_else(bad)?;
    let (number, confidence) = match body.split_once('/') {
        Some((n, c)) => {
            let c: f64 = c.parse().map_err(|_| bad())?;
            if !c.is_finite() {
                return Err(bad());
            }
            (n, Some(c))
        }
        None => (body, None),
    };
    let ec = number.parse().map_err(|_| bad())?;
    Ok(EcPrediction { ec, confidence })
}

pub fn parse_ec_predictions<R: Read>(input: R) -> Result<BTreeMap<String, Vec<EcPrediction>>, ToolError> {
    let data = read_all(input)?;
    let mut out = BTreeMap::new();
    let mut seen = HashMap::new();
    for row in csv_rows(&data) {
        let (line, rec) = row?;
        if rec[0].is_empty() {
            return Err(ToolError::UnparsableRow {
                line,
                message: "empty id".into(),
            });
        }
        let preds = rec
            .iter()
            .skip(1)
            .filter(|t| !t.is_empty())
            .map(parse_ec_token)
            .collect::<Result<Vec<_>, _>>()?;
        check_duplicate(&mut seen, &rec[0], line)?;
        out.insert(rec[0].to_string(), preds);
    }
    Ok(out)
}

/// 1-based column positions in a domain annotation TSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainColumns {
    pub id: usize,
    pub accession: usize,
    pub description: usize,
}

impl Default for DomainColumns {
    fn default() -> Self {
        DomainColumns {
            id: 1,
            accession: 12,
            description: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainAnnotation {
    pub accession: String,
    pub description: String,
}

/// Rows whose accession is `-` or empty carry no domain and are skipped.
/// A row too short to hold the id and accession columns is an error; a
/// missing description column reads as empty.
pub fn parse_domain_annotations<R: Read>(
    input: R,
    cols: DomainColumns,
) -> Result<BTreeMap<String, Vec<DomainAnnotation>>, ToolError> {
    if cols.id == 0 || cols.accession == 0 || cols.description == 0 {
        return Err(ToolError::MissingColumn("column positions are 1-based".into()));
    }
    let data = read_all(input)?;
    let mut out: BTreeMap<String, Vec<DomainAnnotation>> = BTreeMap::new();
    let mut first = true;
    for (line, bytes) in numbered_lines(&data) {
        if is_blank(bytes) || bytes.starts_with(b"#") {
            continue;
        }
        let text = utf8_line(line, bytes)?;
        let fields: Vec<&str> = text.split('\t').map(str::trim).collect();
        if std::mem::replace(&mut first, false) && fields[0].eq_ignore_ascii_case("id") {
            continue;
        }
        if fields.len() < cols.id.max(cols.accession) {
            return Err(ToolError::RowTooShort(line));
        }
        let id = fields[cols.id - 1];
        if id.is_empty() {
            return Err(ToolError::UnparsableRow {
                line,
                message: "empty id".into(),
            });
        }
        let entry = out.entry(id.to_string()).or_default();
        let accession = fields[cols.accession - 1];
        if accession.is_empty() || accession == "-" {
            continue;
        }
        if entry.iter().any(|d| d.accession == accession) {
            continue;
        }
        entry.push(DomainAnnotation {
            accession: accession.to_string(),
            description: fields.get(cols.description - 1).unwrap_or(&"").to_string(),
        });
    }
    Ok(out)
}
