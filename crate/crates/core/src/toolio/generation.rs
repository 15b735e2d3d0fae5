//! Generation records: one JSON object per line carrying a generated
//! sequence and the per-token natural-log probabilities the model
//! assigned to it.
//!
//! ```text
//! {"id":"gen-r1-0","sequence":"MKT...","token_logprobs":[-1.2,-0.4],"tokenization":"subword"}
//! ```
//!
//! `tokenization` is optional and defaults to `subword`. With `residue`
//! the logprob count must equal the sequence length; with `subword` it
//! must lie in `1..=len + 1` (one extra slot for an end token). Unknown
//! fields are ignored so producers can attach their own metadata.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{is_blank, numbered_lines, read_all, ToolError};
use crate::seqio::{Alphabet, ProteinSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenization {
    Residue,
    #[default]
    Subword,
}

impl Tokenization {
    fn admits(self, residues: usize, tokens: usize) -> bool {
        match self {
            Tokenization::Residue => tokens == residues,
            Tokenization::Subword => tokens >= 1 && tokens <= residues + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub sequence: ProteinSequence,
    pub token_logprobs: Vec<f64>,
    pub tokenization: Tokenization,
    pub perplexity: f64,
}

impl ScoredSequence {
    pub fn new(
        sequence: ProteinSequence,
        token_logprobs: Vec<f64>,
        tokenization: Tokenization,
    ) -> Result<Self, ToolError> {
        if !tokenization.admits(sequence.len(), token_logprobs.len()) {
            return Err(ToolError::LengthMismatch(sequence.id().to_string()));
        }
        let perplexity = perplexity(&token_logprobs)?;
        Ok(ScoredSequence {
            sequence,
            token_logprobs,
            tokenization,
            perplexity,
        })
    }

    pub fn id(&self) -> &str {
        self.sequence.id()
    }
}

/// `exp(-mean)`. Terms are summed in ascending order, so any permutation
/// of the input gives the same bits.
pub fn perplexity(logprobs: &[f64]) -> Result<f64, ToolError> {
    if logprobs.is_empty() {
        return Err(ToolError::EmptyInput);
    }
    let mut sorted = logprobs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    for x in sorted {
        sum += x;
    }
    Ok((-(sum / logprobs.len() as f64)).exp())
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    sequence: String,
    token_logprobs: Vec<f64>,
    #[serde(default)]
    tokenization: Tokenization,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    sequence: &'a str,
    token_logprobs: &'a [f64],
    tokenization: Tokenization,
}

pub fn parse_generation_records<R: Read>(input: R) -> Result<Vec<ScoredSequence>, ToolError> {
    let data = read_all(input)?;
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, bytes) in numbered_lines(&data) {
        if is_blank(bytes) {
            continue;
        }
        let schema = |message: String| ToolError::SchemaError { line, message };
        let raw: RawRecord = serde_json::from_slice(bytes).map_err(|e| schema(e.to_string()))?;
        if let Some(index) = raw.token_logprobs.iter().position(|&x| x > 0.0) {
            return Err(ToolError::LogprobPositive { line, index });
        }
        if raw.token_logprobs.iter().any(|x| !x.is_finite()) {
            return Err(schema("non-finite log-probability".into()));
        }
        let sequence =
            ProteinSequence::new(raw.id, "", &raw.sequence, Alphabet::Strict).map_err(|e| schema(e.to_string()))?;
        if let Some(&first_line) = seen.get(sequence.id()) {
            return Err(ToolError::DuplicateId {
                id: sequence.id().to_string(),
                first_line,
                second_line: line,
            });
        }
        seen.insert(sequence.id().to_string(), line);
        out.push(ScoredSequence::new(sequence, raw.token_logprobs, raw.tokenization)?);
    }
    Ok(out)
}

/// Writes records in the interchange format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_generation_records<W: Write>(records: &[ScoredSequence], mut out: W) -> std::io::Result<()> {
    for r in records {
        let rec = OutRecord {
            id: r.id(),
            sequence: r.sequence.residues(),
            token_logprobs: &r.token_logprobs,
            tokenization: r.tokenization,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, seq: &str, lp: &str) -> String {
        format!(r#"{{"id":"{id}","sequence":"{seq}","token_logprobs":{lp}}}"#)
    }

    #[test]
    fn analytic_values() {
        let ln20 = (1.0f64 / 20.0).ln();
        let p = perplexity(&[ln20; 37]).unwrap();
        assert!((p - 20.0).abs() / 20.0 < 1e-12);
        assert_eq!(perplexity(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(perplexity(&[]), Err(ToolError::EmptyInput));
    }

    #[test]
    fn parses_and_validates() {
        let text = format!("{}\n\n{}\n", rec("a", "MKT", "[0,0,0]"), rec("b", "MK", "[-0.5]"));
        let v = parse_generation_records(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].perplexity, 1.0);
        assert!((v[1].perplexity - 0.5f64.exp()).abs() < 1e-15);

        let bad = rec("a", "MKT", "[0,0.1,0]");
        assert_eq!(
            parse_generation_records(bad.as_bytes()),
            Err(ToolError::LogprobPositive { line: 1, index: 1 })
        );
        let dup = format!("{}\n{}\n", rec("a", "MKT", "[0]"), rec("a", "MKT", "[0]"));
        assert!(matches!(
            parse_generation_records(dup.as_bytes()),
            Err(ToolError::DuplicateId { first_line: 1, second_line: 2, .. })
        ));
        let long = rec("a", "MK", "[0,0,0,0]");
        assert_eq!(
            parse_generation_records(long.as_bytes()),
            Err(ToolError::LengthMismatch("a".into()))
        );
        let residue = r#"{"id":"a","sequence":"MKT","token_logprobs":[0,0],"tokenization":"residue"}"#;
        assert!(matches!(
            parse_generation_records(residue.as_bytes()),
            Err(ToolError::LengthMismatch(_))
        ));
        for broken in ["{", r#"{"id":"a","sequence":"MKB","token_logprobs":[0]}"#, r#"{"id":"a"}"#] {
            assert!(matches!(
                parse_generation_records(broken.as_bytes()),
                Err(ToolError::SchemaError { line: 1, .. })
            ));
        }
        let empty = rec("a", "MKT", "[]");
        assert!(parse_generation_records(empty.as_bytes()).is_err());
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let text = r#"{"id":"a","sequence":"MKT","token_logprobs":[-1],"stripped_tokens":2}"#;
        assert_eq!(parse_generation_records(text.as_bytes()).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn matches_oracle_and_roundtrips(
            lps in prop::collection::vec(prop::collection::vec(-20.0f64..=0.0, 1..60), 1..20)
        ) {
            let records: Vec<ScoredSequence> = lps
                .iter()
                .enumerate()
                .map(|(i, lp)| {
                    let seq = ProteinSequence::new(format!("r{i}"), "", "A".repeat(lp.len()), Alphabet::Strict).unwrap();
                    ScoredSequence::new(seq, lp.clone(), Tokenization::Residue).unwrap()
                })
                .collect();
            let mut buf = Vec::new();
            write_generation_records(&records, &mut buf).unwrap();
            let back = parse_generation_records(&buf[..]).unwrap();
            prop_assert_eq!(&back, &records);
            for (r, lp) in back.iter().zip(&lps) {
                let oracle = (-lp.iter().sum::<f64>() / lp.len() as f64).exp();
                prop_assert!((r.perplexity - oracle).abs() <= 1e-12 * oracle);
            }
        }

        #[test]
        fn permutation_invariant_and_monotone(
            mut lp in prop::collection::vec(-10.0f64..=-0.01, 1..50),
            seed in any::<u64>(),
            bump in 0.001f64..0.01,
        ) {
            let p = perplexity(&lp).unwrap();
            let k = (seed as usize) % lp.len();
            let mut shuffled = lp.clone();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let q = perplexity(&shuffled).unwrap();
            prop_assert_eq!(p.to_bits(), q.to_bits());
            lp[k] += bump;
            prop_assert!(perplexity(&lp).unwrap() < p);
        }

        #[test]
        fn total_over_bytes(data in prop::collection::vec(any::<u8>(), 0..300)) {
            let _ = parse_generation_records(&data[..]);
        }
    }
}
