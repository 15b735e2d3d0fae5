//! Protein FASTA reading and writing, plus the length-window filter.
//!
//! Parsing is byte-oriented and total: any input yields either a
//! [`SequenceSet`] or a [`SeqError`]. Residues are uppercased on ingest.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::num::NonZeroUsize;

use thiserror::Error;

/// The 20 canonical amino acids.
pub const CANONICAL_RESIDUES: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Headers longer than this are rejected.
pub const MAX_HEADER_BYTES: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeqError {
    #[error("duplicate sequence id '{0}'")]
    DuplicateId(String),
    /// `position` is 1-based within the residue string.
    #[error("illegal residue '{residue}' in '{id}' at position {position}")]
    IllegalResidue {
        id: String,
        position: usize,
        residue: char,
    },
    #[error("sequence '{0}' has no residues")]
    EmptySequence(String),
    #[error("malformed header at line {0}")]
    MalformedHeader(usize),
    #[error("invalid sequence id '{0}'")]
    InvalidId(String),
    #[error("header at line {0} exceeds {MAX_HEADER_BYTES} bytes")]
    HeaderTooLong(usize),
    #[error("invalid length range [{min}, {max}]")]
    InvalidRange { min: usize, max: usize },
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for SeqError {
    fn from(e: io::Error) -> Self {
        SeqError::Io(e.to_string())
    }
}

/// Which residue letters are admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    /// Exactly the 20 canonical letters.
    #[default]
    Strict,
    /// Canonical letters plus `X`.
    Lenient,
}

impl Alphabet {
    #[inline]
    pub fn admits(self, residue: u8) -> bool {
        is_canonical(residue) || (self == Alphabet::Lenient && residue == b'X')
    }
}

#[inline]
pub fn is_canonical(residue: u8) -> bool {
    matches!(
        residue,
        b'A' | b'C'
            | b'D'
            | b'E'
            | b'F'
            | b'G'
            | b'H'
            | b'I'
            | b'K'
            | b'L'
            | b'M'
            | b'N'
            | b'P'
            | b'Q'
            | b'R'
            | b'S'
            | b'T'
            | b'V'
            | b'W'
            | b'Y'
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinSequence {
    id: String,
    description: String,
    residues: String,
}

impl ProteinSequence {
    /// Builds a validated sequence. Residues are uppercased first.
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        residues: impl AsRef<str>,
        alphabet: Alphabet,
    ) -> Result<Self, SeqError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(SeqError::InvalidId(id));
        }
        let residues = residues.as_ref().to_ascii_uppercase();
        validate_residues(&id, residues.as_bytes(), alphabet)?;
        Ok(ProteinSequence {
            id,
            description: description.into(),
            residues,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn residues(&self) -> &str {
        &self.residues
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.residues.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

fn validate_residues(id: &str, residues: &[u8], alphabet: Alphabet) -> Result<(), SeqError> {
    if residues.is_empty() {
        return Err(SeqError::EmptySequence(id.to_string()));
    }
    if let Some(pos) = residues.iter().position(|&r| !alphabet.admits(r)) {
        return Err(SeqError::IllegalResidue {
            id: id.to_string(),
            position: pos + 1,
            residue: char::from(residues[pos]),
        });
    }
    Ok(())
}

/// An ordered collection of sequences with pairwise-distinct ids.
#[derive(Debug, Clone, Default)]
pub struct SequenceSet {
    source: String,
    records: Vec<ProteinSequence>,
    index: HashMap<String, usize>,
}

impl PartialEq for SequenceSet {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl SequenceSet {
    pub fn new(source: impl Into<String>) -> Self {
        SequenceSet {
            source: source.into(),
            ..Default::default()
        }
    }

    pub fn from_sequences(
        source: impl Into<String>,
        sequences: impl IntoIterator<Item = ProteinSequence>,
    ) -> Result<Self, SeqError> {
        let mut set = SequenceSet::new(source);
        for seq in sequences {
            set.push(seq)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, seq: ProteinSequence) -> Result<(), SeqError> {
        if self.index.contains_key(seq.id()) {
            return Err(SeqError::DuplicateId(seq.id.clone()));
        }
        self.index.insert(seq.id.clone(), self.records.len());
        self.records.push(seq);
        Ok(())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ProteinSequence> {
        self.records.iter()
    }

    pub fn as_slice(&self) -> &[ProteinSequence] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&ProteinSequence> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Keeps the records for which `keep` is true, preserving order.
    pub fn retain_by<F: FnMut(&ProteinSequence) -> bool>(&self, mut keep: F) -> SequenceSet {
        let mut out = SequenceSet::new(self.source.clone());
        for seq in self.records.iter().filter(|s| keep(s)) {
            out.index.insert(seq.id.clone(), out.records.len());
            out.records.push(seq.clone());
        }
        out
    }
}

impl<'a> IntoIterator for &'a SequenceSet {
    type Item = &'a ProteinSequence;
    type IntoIter = std::slice::Iter<'a, ProteinSequence>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Parses FASTA text. Accepts LF or CRLF line endings and arbitrary wrapping;
/// blank lines are ignored.
pub fn parse_fasta<R: Read>(mut input: R, alphabet: Alphabet) -> Result<SequenceSet, SeqError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    parse_fasta_bytes(&buf, alphabet, "")
}

pub fn parse_fasta_bytes(
    bytes: &[u8],
    alphabet: Alphabet,
    source: &str,
) -> Result<SequenceSet, SeqError> {
    struct Pending {
        id: String,
        description: String,
        residues: Vec<u8>,
    }

    fn finish(set: &mut SequenceSet, p: Pending, alphabet: Alphabet) -> Result<(), SeqError> {
        validate_residues(&p.id, &p.residues, alphabet)?;
        // validated ASCII
        let residues = String::from_utf8(p.residues).expect("validated residues are ASCII");
        set.push(ProteinSequence {
            id: p.id,
            description: p.description,
            residues,
        })
    }

    let mut set = SequenceSet::new(source);
    let mut current: Option<Pending> = None;

    for (lineno, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let lineno = lineno + 1;
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        if let Some(header) = line.strip_prefix(b">") {
            if header.len() > MAX_HEADER_BYTES {
                return Err(SeqError::HeaderTooLong(lineno));
            }
            if let Some(p) = current.take() {
                finish(&mut set, p, alphabet)?;
            }
            let header =
                std::str::from_utf8(header).map_err(|_| SeqError::MalformedHeader(lineno))?;
            let header = header.trim();
            let (id, description) = match header.split_once(char::is_whitespace) {
                Some((id, rest)) => (id, rest.trim()),
                None => (header, ""),
            };
            if id.is_empty() {
                return Err(SeqError::MalformedHeader(lineno));
            }
            current = Some(Pending {
                id: id.to_string(),
                description: description.to_string(),
                residues: Vec::new(),
            });
        } else {
            let data = line.trim_ascii();
            if data.is_empty() {
                continue;
            }
            match current.as_mut() {
                Some(p) => p.residues.extend(data.iter().map(u8::to_ascii_uppercase)),
                // sequence data before any header
                None => return Err(SeqError::MalformedHeader(lineno)),
            }
        }
    }
    if let Some(p) = current.take() {
        finish(&mut set, p, alphabet)?;
    }
    Ok(set)
}

/// Writes canonical FASTA: `>id[ description]`, residues wrapped at `wrap`
/// columns, LF line endings.
pub fn write_fasta<W: Write>(set: &SequenceSet, wrap: NonZeroUsize, mut out: W) -> io::Result<()> {
    for seq in set {
        out.write_all(b">")?;
        out.write_all(seq.id.as_bytes())?;
        if !seq.description.is_empty() {
            out.write_all(b" ")?;
            out.write_all(seq.description.as_bytes())?;
        }
        out.write_all(b"\n")?;
        for chunk in seq.residues.as_bytes().chunks(wrap.get()) {
            out.write_all(chunk)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

pub fn fasta_to_string(set: &SequenceSet, wrap: NonZeroUsize) -> String {
    let mut buf = Vec::new();
    write_fasta(set, wrap, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("FASTA output is UTF-8")
}

/// Retains sequences with `min <= len <= max`, both ends inclusive.
pub fn length_filter(set: &SequenceSet, min: usize, max: usize) -> Result<SequenceSet, SeqError> {
    if min == 0 || min > max {
        return Err(SeqError::InvalidRange { min, max });
    }
    Ok(set.retain_by(|s| (min..=max).contains(&s.len())))
}
