//! Degenerate catalytic-motif patterns and class-level motif requirements.
//!
//! Pattern syntax: uppercase residue letters are fixed positions, `X` is a
//! wildcard, and a bracketed group such as `[ND]` lists alternatives.
//! Patterns are anchored: the first and last positions may not be wildcards.
//!
//! Matching is a plain sliding-window scan and reports every (possibly
//! overlapping) offset.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqio::{is_canonical, ProteinSequence, SequenceSet};

pub const MIN_MOTIF_LEN: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MotifError {
    /// `position` is the 0-based character offset in the pattern text.
    #[error("motif syntax error at position {0}")]
    SyntaxError(usize),
    #[error("empty alternative group at position {0}")]
    EmptyAlternativeGroup(usize),
    #[error("illegal residue '{residue}' in motif at position {position}")]
    IllegalResidue { position: usize, residue: char },
    #[error("motif '{0}' is shorter than {MIN_MOTIF_LEN} positions")]
    TooShort(String),
    #[error("motif '{0}' starts or ends with a wildcard")]
    UnanchoredWildcard(String),
    #[error("no motif rules configured")]
    NoRulesConfigured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnzymeClass {
    #[serde(rename = "I", alias = "ClassI", alias = "class1")]
    ClassI,
    #[serde(rename = "II", alias = "ClassII", alias = "class2")]
    ClassII,
}

impl fmt::Display for EnzymeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnzymeClass::ClassI => f.write_str("I"),
            EnzymeClass::ClassII => f.write_str("II"),
        }
    }
}

/// One motif position. Alternative sets are kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MotifPosition {
    Fixed(u8),
    Any,
    OneOf(Vec<u8>),
}

impl MotifPosition {
    #[inline]
    fn accepts(&self, residue: u8) -> bool {
        match self {
            MotifPosition::Fixed(r) => *r == residue,
            MotifPosition::Any => true,
            MotifPosition::OneOf(set) => set.contains(&residue),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifRule {
    name: String,
    positions: Vec<MotifPosition>,
    class: EnzymeClass,
}

impl MotifRule {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn positions(&self) -> &[MotifPosition] {
        &self.positions
    }

    pub fn class(&self) -> EnzymeClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// True if the rule matches `window` exactly (window length must equal
    /// rule length).
    #[inline]
    pub fn matches_window(&self, window: &[u8]) -> bool {
        window.len() == self.positions.len()
            && self.positions.iter().zip(window).all(|(p, &r)| p.accepts(r))
    }
}

impl fmt::Display for MotifRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.positions {
            match p {
                MotifPosition::Fixed(r) => write!(f, "{}", char::from(*r))?,
                MotifPosition::Any => f.write_str("X")?,
                MotifPosition::OneOf(set) => {
                    f.write_str("[")?;
                    for r in set {
                        write!(f, "{}", char::from(*r))?;
                    }
                    f.write_str("]")?;
                }
            }
        }
        Ok(())
    }
}

/// Compiles a pattern; the rule is named after the pattern text.
pub fn compile_motif(pattern: &str, class: EnzymeClass) -> Result<MotifRule, MotifError> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut positions = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => {
                let open = i;
                let mut set = Vec::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(MotifError::SyntaxError(open)),
                        Some(']') => break,
                        Some('[') => return Err(MotifError::SyntaxError(i)),
                        Some(&c) => {
                            set.push(residue_at(c, i)?);
                            i += 1;
                        }
                    }
                }
                if set.is_empty() {
                    return Err(MotifError::EmptyAlternativeGroup(open));
                }
                set.sort_unstable();
                set.dedup();
                positions.push(if set.len() == 1 {
                    MotifPosition::Fixed(set[0])
                } else {
                    MotifPosition::OneOf(set)
                });
            }
            ']' => return Err(MotifError::SyntaxError(i)),
            'X' => positions.push(MotifPosition::Any),
            c => positions.push(MotifPosition::Fixed(residue_at(c, i)?)),
        }
        i += 1;
    }
    if positions.len() < MIN_MOTIF_LEN {
        return Err(MotifError::TooShort(pattern.to_string()));
    }
    if positions.first() == Some(&MotifPosition::Any) || positions.last() == Some(&MotifPosition::Any) {
        return Err(MotifError::UnanchoredWildcard(pattern.to_string()));
    }
    Ok(MotifRule {
        name: pattern.to_string(),
        positions,
        class,
    })
}

fn residue_at(c: char, position: usize) -> Result<u8, MotifError> {
    if c.is_ascii_lowercase() || c.is_whitespace() || !c.is_ascii() {
        return Err(MotifError::SyntaxError(position));
    }
    let b = c as u8;
    if is_canonical(b) {
        Ok(b)
    } else if b.is_ascii_uppercase() {
        Err(MotifError::IllegalResidue {
            position,
            residue: c,
        })
    } else {
        Err(MotifError::SyntaxError(position))
    }
}

/// The shipped rule set: DDXXD and NSE/DTE for class I, DXDD for class II.
pub fn default_rules() -> Vec<MotifRule> {
    vec![
        compile_motif("DDXXD", EnzymeClass::ClassI).expect("valid builtin motif"),
        compile_motif("[ND]DXX[ST]XXXE", EnzymeClass::ClassI)
            .expect("valid builtin motif")
            .with_name("NSE/DTE"),
        compile_motif("DXDD", EnzymeClass::ClassII).expect("valid builtin motif"),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchSite {
    pub rule: String,
    /// 0-based residue offset.
    pub start: usize,
    pub matched: String,
}

pub fn scan(seq: &ProteinSequence, rule: &MotifRule) -> Vec<MatchSite> {
    scan_bytes(seq.as_bytes(), rule)
        .into_iter()
        .map(|start| MatchSite {
            rule: rule.name.clone(),
            start,
            matched: seq.residues()[start..start + rule.len()].to_string(),
        })
        .collect()
}

/// Match offsets of `rule` in `residues`, ascending.
pub fn scan_bytes(residues: &[u8], rule: &MotifRule) -> Vec<usize> {
    if residues.len() < rule.len() {
        return Vec::new();
    }
    residues
        .windows(rule.len())
        .enumerate()
        .filter(|(_, w)| rule.matches_window(w))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleHits {
    pub rule: String,
    pub class: EnzymeClass,
    pub sites: Vec<MatchSite>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHits {
    pub per_rule: Vec<RuleHits>,
}

impl ClassHits {
    /// A class is present when it has at least one rule and every rule of
    /// that class matched at least once.
    pub fn has_class(&self, class: EnzymeClass) -> bool {
        let mut rules = self.per_rule.iter().filter(|h| h.class == class).peekable();
        rules.peek().is_some() && rules.all(|h| !h.sites.is_empty())
    }

    pub fn has_class1(&self) -> bool {
        self.has_class(EnzymeClass::ClassI)
    }

    pub fn has_class2(&self) -> bool {
        self.has_class(EnzymeClass::ClassII)
    }

    pub fn passes(&self) -> bool {
        self.has_class1() || self.has_class2()
    }
}

pub fn classify(seq: &ProteinSequence, rules: &[MotifRule]) -> ClassHits {
    ClassHits {
        per_rule: rules
            .iter()
            .map(|rule| RuleHits {
                rule: rule.name.clone(),
                class: rule.class,
                sites: scan(seq, rule),
            })
            .collect(),
    }
}

fn class_passes(residues: &[u8], rules: &[MotifRule], class: EnzymeClass) -> bool {
    let mut of_class = rules.iter().filter(|r| r.class == class).peekable();
    of_class.peek().is_some()
        && of_class.all(|r| {
            residues.len() >= r.len() && residues.windows(r.len()).any(|w| r.matches_window(w))
        })
}

/// Keeps sequences carrying the complete class I or the complete class II
/// signature.
pub fn motif_filter(set: &SequenceSet, rules: &[MotifRule]) -> Result<SequenceSet, MotifError> {
    if rules.is_empty() {
        return Err(MotifError::NoRulesConfigured);
    }
    Ok(set.retain_by(|s| {
        let r = s.as_bytes();
        class_passes(r, rules, EnzymeClass::ClassI) || class_passes(r, rules, EnzymeClass::ClassII)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::Alphabet;
    use proptest::prelude::*;
    use MotifPosition::*;

    fn seq(id: &str, residues: &str) -> ProteinSequence {
        ProteinSequence::new(id, "", residues, Alphabet::Strict).unwrap()
    }

    #[test]
    fn compiles_default_motifs() {
        let r = compile_motif("DDXXD", EnzymeClass::ClassI).unwrap();
        assert_eq!(r.positions(), &[Fixed(b'D'), Fixed(b'D'), Any, Any, Fixed(b'D')]);
        let r = compile_motif("DXDD", EnzymeClass::ClassII).unwrap();
        assert_eq!(r.positions(), &[Fixed(b'D'), Any, Fixed(b'D'), Fixed(b'D')]);
        let r = compile_motif("[ND]DXX[ST]XXXE", EnzymeClass::ClassI).unwrap();
        assert_eq!(r.len(), 9);
        assert_eq!(r.positions()[0], OneOf(vec![b'D', b'N']));
        assert_eq!(r.positions()[4], OneOf(vec![b'S', b'T']));
        assert_eq!(r.to_string(), "[DN]DXX[ST]XXXE");
    }

    #[test]
    fn compile_errors() {
        use EnzymeClass::ClassI as C;
        assert_eq!(compile_motif("D[ND", C), Err(MotifError::SyntaxError(1)));
        assert_eq!(compile_motif("DD]D", C), Err(MotifError::SyntaxError(2)));
        assert_eq!(compile_motif("D[]DD", C), Err(MotifError::EmptyAlternativeGroup(1)));
        assert_eq!(
            compile_motif("DBDD", C),
            Err(MotifError::IllegalResidue { position: 1, residue: 'B' })
        );
        assert_eq!(compile_motif("DdD", C), Err(MotifError::SyntaxError(1)));
        assert_eq!(compile_motif("D[N[D]]D", C), Err(MotifError::SyntaxError(3)));
        assert!(matches!(compile_motif("DD", C), Err(MotifError::TooShort(_))));
        assert!(matches!(compile_motif("XDD", C), Err(MotifError::UnanchoredWildcard(_))));
        assert!(matches!(compile_motif("DDX", C), Err(MotifError::UnanchoredWildcard(_))));
    }

    #[test]
    fn scan_examples() {
        let ddxxd = compile_motif("DDXXD", EnzymeClass::ClassI).unwrap();
        let hits = scan(&seq("a", "MDDAADK"), &ddxxd);
        assert_eq!(
            hits,
            vec![MatchSite { rule: "DDXXD".into(), start: 1, matched: "DDAAD".into() }]
        );
        let starts: Vec<_> = scan(&seq("b", "DDDDDD"), &ddxxd).iter().map(|m| m.start).collect();
        assert_eq!(starts, [0, 1]);
        assert!(scan(&seq("c", "DD"), &ddxxd).is_empty());
    }

    #[test]
    fn classify_examples() {
        let rules = default_rules();
        // DDXXD present, no NSE/DTE
        let only_ddxxd = classify(&seq("a", "MMMDDAADMMMMMMMM"), &rules);
        assert!(!only_ddxxd.has_class1());
        assert!(!only_ddxxd.has_class2());

        let dxdd = classify(&seq("b", "MMDWDDMM"), &rules);
        assert!(dxdd.has_class2());

        let full = classify(&seq("c", "MMDDAADMMMMNDAASAAAEMM"), &rules);
        assert!(full.has_class1());

        let class2_only: Vec<_> = rules.iter().filter(|r| r.class() == EnzymeClass::ClassII).cloned().collect();
        let hits = classify(&seq("d", "MMDDAADMMMMNDAASAAAEMM"), &class2_only);
        assert!(!hits.has_class1(), "vacuous class must be false");
    }

    #[test]
    fn filter_keeps_complete_signatures() {
        let set = SequenceSet::from_sequences(
            "t",
            [
                seq("class1", "MMDDAADMMMMNDAASAAAEMM"),
                seq("class2", "MMDWDDMM"),
                seq("partial", "MMMDDAADMMMMMMMM"),
                seq("none", "MKTLLVAAGG"),
            ],
        )
        .unwrap();
        let kept = motif_filter(&set, &default_rules()).unwrap();
        let ids: Vec<_> = kept.iter().map(|s| s.id()).collect();
        assert_eq!(ids, ["class1", "class2"]);
        assert_eq!(motif_filter(&set, &[]), Err(MotifError::NoRulesConfigured));
    }

    fn naive_offsets(residues: &[u8], rule: &MotifRule) -> Vec<usize> {
        let mut out = Vec::new();
        let n = rule.len();
        if residues.len() < n {
            return out;
        }
        for start in 0..=residues.len() - n {
            let mut ok = true;
            for k in 0..n {
                let r = residues[start + k];
                ok &= match &rule.positions()[k] {
                    Fixed(f) => *f == r,
                    Any => true,
                    OneOf(set) => set.iter().any(|&s| s == r),
                };
            }
            if ok {
                out.push(start);
            }
        }
        out
    }

    /// Every pattern of length <= 4 over a small alphabet against every
    /// sequence of length <= 6 over the same alphabet.
    #[test]
    fn scan_equals_brute_force_exhaustive_small() {
        let letters = [b'D', b'E', b'N'];
        let mut patterns = Vec::new();
        for len in 3..=4u32 {
            let tokens = ["D", "E", "N", "X", "[DE]"];
            for code in 0..tokens.len().pow(len) {
                let mut c = code;
                let mut p = String::new();
                for _ in 0..len {
                    p.push_str(tokens[c % tokens.len()]);
                    c /= tokens.len();
                }
                if let Ok(rule) = compile_motif(&p, EnzymeClass::ClassI) {
                    patterns.push(rule);
                }
            }
        }
        for len in 0..=6u32 {
            for code in 0..letters.len().pow(len) {
                let mut c = code;
                let s: Vec<u8> = (0..len)
                    .map(|_| {
                        let r = letters[c % letters.len()];
                        c /= letters.len();
                        r
                    })
                    .collect();
                for rule in &patterns {
                    assert_eq!(scan_bytes(&s, rule), naive_offsets(&s, rule));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn scan_equals_brute_force_random(
            residues in proptest::collection::vec(prop::sample::select(b"DDDEENSTAW".to_vec()), 0..50),
            pattern in prop::sample::select(vec!["DDXXD", "DXDD", "[ND]DXX[ST]XXXE", "D[ST]E", "NSE"]),
        ) {
            let rule = compile_motif(pattern, EnzymeClass::ClassI).unwrap();
            prop_assert_eq!(scan_bytes(&residues, &rule), naive_offsets(&residues, &rule));
        }

        #[test]
        fn classify_independent_of_rule_order(
            residues in proptest::collection::vec(prop::sample::select(b"DDDEENSTAW".to_vec()), 1..60),
            rotate in 0usize..3,
        ) {
            let s = seq("p", std::str::from_utf8(&residues).unwrap());
            let mut rules = default_rules();
            let a = classify(&s, &rules);
            rules.rotate_left(rotate);
            let b = classify(&s, &rules);
            prop_assert_eq!(a.has_class1(), b.has_class1());
            prop_assert_eq!(a.has_class2(), b.has_class2());
        }

        #[test]
        fn adding_rules_never_grows_output(
            seqs in proptest::collection::vec(
                proptest::collection::vec(prop::sample::select(b"DDDEENSTAWK".to_vec()), 5..40), 1..20),
        ) {
            let set = SequenceSet::from_sequences(
                "p",
                seqs.iter().enumerate().map(|(i, r)| seq(&format!("s{i}"), std::str::from_utf8(r).unwrap())),
            ).unwrap();
            let base = motif_filter(&set, &default_rules()).unwrap();
            let mut stricter = default_rules();
            stricter.push(compile_motif("DXE", EnzymeClass::ClassI).unwrap());
            stricter.push(compile_motif("DWD", EnzymeClass::ClassII).unwrap());
            let narrowed = motif_filter(&set, &stricter).unwrap();
            for s in &narrowed {
                prop_assert!(base.contains(s.id()));
            }
        }
    }
}
