//! Parsers for the artifacts produced by external tools.
//!
//! Every parser is total over arbitrary bytes: malformed input yields a
//! [`ToolError`], never a panic. Line numbers in errors are 1-based.

use std::io::{self, Read};

use thiserror::Error;

pub mod function;
pub mod generation;
pub mod hits;
pub mod profile;
pub mod structure;

pub use function::{
    parse_detector_scores, parse_domain_annotations, parse_ec_predictions, DomainAnnotation, DomainColumns,
    EcNumber, EcPattern, EcPrediction,
};
pub use generation::{parse_generation_records, perplexity, write_generation_records, ScoredSequence, Tokenization};
pub use hits::{parse_structural_hits, write_structural_hits, HitColumns, HitTable, StructuralHit};
pub use profile::{parse_profile_hits, stronger_non_tps_filter, AccessionAllowlist, DomtblLayout, ProfileHit};
pub use structure::{parse_structure_plddt, PlddtScale, StructureConfidence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("schema error at line {line}: {message}")]
    SchemaError { line: usize, message: String },
    /// `index` is the 0-based position in the logprob array.
    #[error("positive log-probability at line {line}, index {index}")]
    LogprobPositive { line: usize, index: usize },
    #[error("sequence length and token count disagree for '{0}'")]
    LengthMismatch(String),
    #[error("duplicate id '{id}' at lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("no alpha-carbon atoms found")]
    NoAtoms,
    #[error("malformed ATOM row at line {0}")]
    MalformedAtomRow(usize),
    #[error("confidence out of range at line {0}")]
    ConfidenceOutOfRange(usize),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("unparsable row at line {line}: {message}")]
    UnparsableRow { line: usize, message: String },
    #[error("score out of range at line {line}: {value}")]
    ScoreOutOfRange { line: usize, value: f64 },
    #[error("malformed EC token '{0}'")]
    MalformedEc(String),
    #[error("row too short at line {0}")]
    RowTooShort(usize),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for ToolError {
    fn from(e: io::Error) -> Self {
        ToolError::Io(e.to_string())
    }
}

pub(crate) fn read_all<R: Read>(mut input: R) -> Result<Vec<u8>, ToolError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Splits on LF, strips a trailing CR, numbers lines from 1.
pub(crate) fn numbered_lines(data: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    let trimmed = data.strip_suffix(b"\n").unwrap_or(data);
    let mut lines = trimmed.split(|&b| b == b'\n').enumerate();
    let empty = data.is_empty();
    std::iter::from_fn(move || {
        if empty {
            return None;
        }
        lines
            .next()
            .map(|(i, l)| (i + 1, l.strip_suffix(b"\r").unwrap_or(l)))
    })
}

/// Decodes a line as UTF-8, reporting the line number on failure.
pub(crate) fn utf8_line(line: usize, bytes: &[u8]) -> Result<&str, ToolError> {
    std::str::from_utf8(bytes).map_err(|_| ToolError::UnparsableRow {
        line,
        message: "invalid UTF-8".into(),
    })
}

pub(crate) fn is_blank(bytes: &[u8]) -> bool {
    bytes.iter().all(u8::is_ascii_whitespace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_numbering_handles_crlf_and_missing_newline() {
        let v: Vec<_> = numbered_lines(b"a\r\nb\n\nc").collect();
        assert_eq!(v, vec![(1, &b"a"[..]), (2, &b"b"[..]), (3, &b""[..]), (4, &b"c"[..])]);
        assert_eq!(numbered_lines(b"").count(), 0);
        assert_eq!(numbered_lines(b"x\n").count(), 1);
    }
}
