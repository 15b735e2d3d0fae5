//! HMMER per-domain tables (`--domtblout`).
//!
//! Rows are whitespace-delimited with at least 22 fields; the free-text
//! description fills the rest. `hmmsearch` puts the sequence in the target
//! columns and the profile in the query columns, `hmmscan` the other way
//! round. Lines starting with `#` are comments.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{is_blank, numbered_lines, read_all, utf8_line, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomtblLayout {
    #[default]
    Hmmsearch,
    Hmmscan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileHit {
    pub sequence_id: String,
    pub profile_name: String,
    /// `-` when the profile has no accession.
    pub profile_accession: String,
    /// Per-domain bit score.
    pub score: f64,
    /// Independent E-value; zero is clamped to the smallest positive value.
    pub evalue: f64,
}

/// Profile identifiers counted as TPS families. Matching ignores a
/// trailing version (`PF01397.24` matches `PF01397`) and accepts either
/// the accession or the profile name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccessionAllowlist(BTreeSet<String>);

fn unversioned(token: &str) -> &str {
    match token.rsplit_once('.') {
        Some((stem, v)) if !stem.is_empty() && !v.is_empty() && v.bytes().all(|b| b.is_ascii_digit()) => stem,
        _ => token,
    }
}

impl AccessionAllowlist {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(tokens: I) -> Self {
        AccessionAllowlist(tokens.into_iter().map(|t| unversioned(t.as_ref()).to_string()).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        token != "-" && self.0.contains(unversioned(token))
    }

    pub fn is_tps(&self, hit: &ProfileHit) -> bool {
        self.contains(&hit.profile_accession) || self.contains(&hit.profile_name)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

const MIN_FIELDS: usize = 22;

pub fn parse_profile_hits<R: Read>(input: R, layout: DomtblLayout) -> Result<Vec<ProfileHit>, ToolError> {
    let data = read_all(input)?;
    let mut out = Vec::new();
    for (line, bytes) in numbered_lines(&data) {
        if is_blank(bytes) || bytes.starts_with(b"#") {
            continue;
        }
        let text = utf8_line(line, bytes)?;
        let f: Vec<&str> = text.split_ascii_whitespace().collect();
        let bad = |message: String| ToolError::UnparsableRow { line, message };
        if f.len() < MIN_FIELDS {
            return Err(bad(format!("expected at least {MIN_FIELDS} fields, found {}", f.len())));
        }
        let (seq, profile, profile_acc) = match layout {
            DomtblLayout::Hmmsearch => (f[0], f[3], f[4]),
            DomtblLayout::Hmmscan => (f[3], f[0], f[1]),
        };
        let evalue: f64 = f[12].parse().map_err(|_| bad(format!("bad i-Evalue '{}'", f[12])))?;
        let score: f64 = f[13].parse().map_err(|_| bad(format!("bad domain score '{}'", f[13])))?;
        if !(evalue >= 0.0) || !evalue.is_finite() || !score.is_finite() {
            return Err(bad("non-finite or negative value".into()));
        }
        out.push(ProfileHit {
            sequence_id: seq.to_string(),
            profile_name: profile.to_string(),
            profile_accession: profile_acc.to_string(),
            score,
            evalue: evalue.max(f64::MIN_POSITIVE),
        });
    }
    Ok(out)
}

/// Ids whose best non-TPS domain score is strictly higher than their best
/// TPS domain score, or that have non-TPS hits and no TPS hit. Ties keep.
pub fn stronger_non_tps_filter(hits: &[ProfileHit], allowlist: &AccessionAllowlist) -> BTreeSet<String> {
    let mut best: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for h in hits {
        let entry = best.entry(h.sequence_id.as_str()).or_default();
        let slot = if allowlist.is_tps(h) { &mut entry.0 } else { &mut entry.1 };
        *slot = Some(slot.map_or(h.score, |s: f64| s.max(h.score)));
    }
    best.into_iter()
        .filter(|(_, (tps, other))| match (tps, other) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(t), Some(o)) => o > t,
        })
        .map(|(id, _)| id.to_string())
        .collect()
}
