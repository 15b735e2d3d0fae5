//! Global pairwise alignment, sequence identity and maximum-identity search.
//!
//! Alignments are scored with integer match/mismatch scores and a linear gap
//! score. Among alignments with the optimal score, the one with the most
//! identical columns is chosen, then the one with the fewest columns; this
//! makes identity a symmetric function of the pair. Remaining ties in the
//! traceback prefer diagonal, then up (gap in target), then left.
//!
//! The three objectives are packed into one `i64` per DP cell:
//! `score << 42 | matches << 21 | -columns`. Packed sums compare exactly like
//! the lexicographic tuple as long as matches < 2^20 and columns < 2^21.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqio::{ProteinSequence, SequenceSet};

const SCORE_SHIFT: u32 = 42;
const MATCH_SHIFT: u32 = 21;
const FIELD: i64 = 1 << MATCH_SHIFT;
const NEG_INF: i64 = i64::MIN / 4;
/// Longest combined pair length (|a| + |b|) the packed DP accepts.
pub const MAX_PAIR_LEN: usize = (1 << 20) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignError {
    #[error("cannot align an empty sequence")]
    EmptySequence,
    #[error("length difference {len_diff} exceeds band half-width {band}")]
    BandTooNarrow { len_diff: usize, band: usize },
    #[error("identity database is empty")]
    EmptyDatabase,
    #[error("invalid alignment parameters: {0}")]
    InvalidParams(String),
    #[error("pair too long for alignment ({0} residues combined)")]
    TooLong(usize),
}

/// What identity is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityDenominator {
    /// Alignment columns, gaps included.
    #[default]
    Columns,
    /// Length of the shorter sequence.
    MinLength,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    pub match_score: i32,
    pub mismatch_score: i32,
    pub gap_score: i32,
    pub prefilter: bool,
    pub kmer_k: usize,
    pub min_shared_kmers: usize,
    pub band: Option<usize>,
    pub denominator: IdentityDenominator,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            match_score: 1,
            mismatch_score: -1,
            gap_score: -1,
            prefilter: false,
            kmer_k: 5,
            min_shared_kmers: 1,
            band: None,
            denominator: IdentityDenominator::Columns,
        }
    }
}

impl AlignParams {
    /// Exact mode: no prefilter, no band.
    pub fn exact() -> Self {
        AlignParams::default()
    }

    pub fn with_prefilter(mut self, on: bool) -> Self {
        self.prefilter = on;
        self
    }

    pub fn with_band(mut self, band: Option<usize>) -> Self {
        self.band = band;
        self
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if self.match_score <= self.mismatch_score {
            return Err(AlignError::InvalidParams("match score must exceed mismatch score".into()));
        }
        if self.gap_score >= self.match_score {
            return Err(AlignError::InvalidParams("gap score must be below match score".into()));
        }
        if !(1..=12).contains(&self.kmer_k) {
            return Err(AlignError::InvalidParams("kmer_k must be in 1..=12".into()));
        }
        let limit = 1000;
        if [self.match_score, self.mismatch_score, self.gap_score].iter().any(|s| s.abs() > limit) {
            return Err(AlignError::InvalidParams(format!("scores must lie in [-{limit}, {limit}]")));
        }
        Ok(())
    }

    fn deltas(&self) -> Deltas {
        Deltas {
            matched: ((self.match_score as i64) << SCORE_SHIFT) + FIELD - 1,
            mismatched: ((self.mismatch_score as i64) << SCORE_SHIFT) - 1,
            gap: ((self.gap_score as i64) << SCORE_SHIFT) - 1,
        }
    }

    fn check_pair(&self, a: &[u8], b: &[u8]) -> Result<(), AlignError> {
        if a.is_empty() || b.is_empty() {
            return Err(AlignError::EmptySequence);
        }
        let combined = a.len() + b.len();
        let max_abs = [self.match_score, self.mismatch_score, self.gap_score]
            .iter()
            .map(|s| s.unsigned_abs() as usize)
            .max()
            .unwrap_or(1)
            .max(1);
        if combined > MAX_PAIR_LEN || combined.saturating_mul(max_abs) >= (1 << 20) {
            return Err(AlignError::TooLong(combined));
        }
        if let Some(band) = self.band {
            let len_diff = a.len().abs_diff(b.len());
            if len_diff > band {
                return Err(AlignError::BandTooNarrow { len_diff, band });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Deltas {
    matched: i64,
    mismatched: i64,
    gap: i64,
}

/// Score, identical columns and total columns of an optimal alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignStats {
    pub score: i64,
    pub matches: usize,
    pub columns: usize,
}

impl AlignStats {
    fn unpack(packed: i64) -> Self {
        let columns = (-packed).rem_euclid(FIELD);
        let upper = (packed + columns).div_euclid(FIELD);
        let matches = upper.rem_euclid(FIELD);
        let score = (upper - matches).div_euclid(FIELD);
        AlignStats {
            score,
            matches: matches as usize,
            columns: columns as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub aligned_query: String,
    pub aligned_target: String,
    pub columns: usize,
    pub matches: usize,
    pub score: i64,
}

impl Alignment {
    pub fn stats(&self) -> AlignStats {
        AlignStats {
            score: self.score,
            matches: self.matches,
            columns: self.columns,
        }
    }

    pub fn identity(&self) -> f64 {
        self.matches as f64 / self.columns as f64
    }
}

pub const GAP: u8 = b'-';

/// Optimal global alignment with full traceback. Quadratic memory; use
/// [`align_stats`] when only the counts are needed.
pub fn global_align(a: &ProteinSequence, b: &ProteinSequence, p: &AlignParams) -> Result<Alignment, AlignError> {
    global_align_bytes(a.as_bytes(), b.as_bytes(), p)
}

pub fn global_align_bytes(a: &[u8], b: &[u8], p: &AlignParams) -> Result<Alignment, AlignError> {
    p.check_pair(a, b)?;
    let d = p.deltas();
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let band = p.band.unwrap_or(usize::MAX);
    let in_band = |i: usize, j: usize| i.abs_diff(j) <= band;

    let mut h = vec![NEG_INF; (n + 1) * width];
    h[0] = 0;
    for j in 1..=m {
        if in_band(0, j) {
            h[j] = h[j - 1] + d.gap;
        }
    }
    for i in 1..=n {
        if in_band(i, 0) {
            h[i * width] = h[(i - 1) * width] + d.gap;
        }
        let (lo, hi) = (i.saturating_sub(band).max(1), i.saturating_add(band).min(m));
        for j in lo..=hi {
            let sub = if a[i - 1] == b[j - 1] { d.matched } else { d.mismatched };
            let diag = h[(i - 1) * width + j - 1] + sub;
            let up = h[(i - 1) * width + j] + d.gap;
            let left = h[i * width + j - 1] + d.gap;
            h[i * width + j] = diag.max(up).max(left);
        }
    }

    let mut qa = Vec::with_capacity(n + m);
    let mut ta = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = h[i * width + j];
        if i > 0 && j > 0 {
            let sub = if a[i - 1] == b[j - 1] { d.matched } else { d.mismatched };
            if h[(i - 1) * width + j - 1] + sub == here {
                qa.push(a[i - 1]);
                ta.push(b[j - 1]);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && h[(i - 1) * width + j] + d.gap == here {
            qa.push(a[i - 1]);
            ta.push(GAP);
            i -= 1;
        } else {
            qa.push(GAP);
            ta.push(b[j - 1]);
            j -= 1;
        }
    }
    qa.reverse();
    ta.reverse();
    let stats = AlignStats::unpack(h[n * width + m]);
    Ok(Alignment {
        aligned_query: String::from_utf8(qa).expect("ASCII residues"),
        aligned_target: String::from_utf8(ta).expect("ASCII residues"),
        columns: stats.columns,
        matches: stats.matches,
        score: stats.score,
    })
}

/// Optimal-alignment counts in linear memory. Agrees exactly with
/// [`global_align_bytes`].
pub fn align_stats(a: &[u8], b: &[u8], p: &AlignParams) -> Result<AlignStats, AlignError> {
    p.check_pair(a, b)?;
    match p.band {
        Some(band) if band < a.len().max(b.len()) => Ok(AlignStats::unpack(banded_row_dp(a, b, p.deltas(), band))),
        _ => Ok(narrow_dp(a, b, p).unwrap_or_else(|| {
            let d = p.deltas();
            AlignStats::unpack(antidiagonal_dp(a, b, d.matched, d.mismatched, d.gap))
        })),
    }
}

/// Packed DP cell value.
trait Cell: Copy + Ord + std::ops::Add<Output = Self> {
    const NEG: Self;
    const ZERO: Self;
}

impl Cell for i32 {
    const NEG: Self = i32::MIN / 4;
    const ZERO: Self = 0;
}

impl Cell for i64 {
    const NEG: Self = NEG_INF;
    const ZERO: Self = 0;
}

/// `i32` variant packing only `score << shift | matches`.
///
/// With mismatch != 2 * gap, the column count of a complete alignment is
/// fixed by its score, match count and the pair length, so ordering by
/// (score, matches) reaches the same optimum and columns are recovered at
/// the end. Returns `None` when the pair does not fit or the scores are
/// degenerate.
fn narrow_dp(a: &[u8], b: &[u8], p: &AlignParams) -> Option<AlignStats> {
    let (mat, mis, gap) = (p.match_score as i64, p.mismatch_score as i64, p.gap_score as i64);
    let divisor = mis - 2 * gap;
    if divisor == 0 {
        return None;
    }
    let (n, m) = (a.len(), b.len());
    let shift = usize::BITS - n.min(m).leading_zeros();
    let max_abs = mat.abs().max(mis.abs()).max(gap.abs()).max(1);
    if ((max_abs * (n + m) as i64 + 1) << shift) >= (1 << 29) {
        return None;
    }
    let packed = antidiagonal_dp(a, b, ((mat << shift) + 1) as i32, (mis << shift) as i32, (gap << shift) as i32) as i64;
    let matches = packed.rem_euclid(1 << shift);
    let score = (packed - matches) >> shift;
    let total = (n + m) as i64;
    let mismatches = (score - mat * matches - gap * (total - 2 * matches)) / divisor;
    let gaps = total - 2 * matches - 2 * mismatches;
    Some(AlignStats {
        score,
        matches: matches as usize,
        columns: (matches + mismatches + gaps) as usize,
    })
}

fn antidiagonal_dp<T: Cell>(a: &[u8], b: &[u8], matched: T, mismatched: T, gap: T) -> T {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked above.
            return unsafe { antidiagonal_dp_avx2(a, b, matched, mismatched, gap) };
        }
    }
    antidiagonal_kernel(a, b, matched, mismatched, gap)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn antidiagonal_dp_avx2<T: Cell>(a: &[u8], b: &[u8], matched: T, mismatched: T, gap: T) -> T {
    antidiagonal_kernel(a, b, matched, mismatched, gap)
}

/// Wavefront over anti-diagonals `d = i + j`. Cells on one anti-diagonal
/// depend only on the previous two, so the inner loop has no carried
/// dependency; with `b` reversed all of its loads are contiguous in `i`.
#[inline(always)]
fn antidiagonal_kernel<T: Cell>(a: &[u8], b: &[u8], matched: T, mismatched: T, gap: T) -> T {
    let (n, m) = (a.len(), b.len());
    let brev: Vec<u8> = b.iter().rev().copied().collect();
    let mut d2 = vec![T::NEG; n + 1];
    let mut d1 = vec![T::NEG; n + 1];
    let mut d0 = vec![T::NEG; n + 1];
    d1[0] = T::ZERO;
    let mut edge = T::ZERO;
    for d in 1..=n + m {
        edge = edge + gap;
        let lo = d.saturating_sub(m);
        let hi = d.min(n);
        if lo == 0 {
            d0[0] = edge;
        }
        if hi == d {
            d0[d] = edge;
        }
        let start = lo.max(1);
        let end = hi.min(d - 1);
        if start <= end {
            let av = &a[start - 1..end];
            let bv = &brev[m + start - d..m + end + 1 - d];
            let diag = &d2[start - 1..end];
            let up = &d1[start - 1..end];
            let left = &d1[start..end + 1];
            let out = &mut d0[start..end + 1];
            for (((((o, &x), &y), &g), &u), &l) in out.iter_mut().zip(av).zip(bv).zip(diag).zip(up).zip(left) {
                let sub = if x == y { matched } else { mismatched };
                *o = (g + sub).max(u.max(l) + gap);
            }
        }
        std::mem::swap(&mut d2, &mut d1);
        std::mem::swap(&mut d1, &mut d0);
    }
    d1[n]
}

fn banded_row_dp(a: &[u8], b: &[u8], d: Deltas, band: usize) -> i64 {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![NEG_INF; m + 2];
    let mut cur = vec![NEG_INF; m + 2];
    for (j, cell) in prev.iter_mut().enumerate().take(band.min(m) + 1) {
        *cell = j as i64 * d.gap;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(band).max(1);
        let hi = (i + band).min(m);
        cur[0] = if i <= band { i as i64 * d.gap } else { NEG_INF };
        cur[lo - 1] = if lo == 1 { cur[0] } else { NEG_INF };
        let ra = a[i - 1];
        for j in lo..=hi {
            let sub = if ra == b[j - 1] { d.matched } else { d.mismatched };
            let v = (prev[j - 1] + sub).max(prev[j] + d.gap).max(cur[j - 1] + d.gap);
            cur[j] = v;
        }
        cur[hi + 1] = NEG_INF;
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Identity of the optimal alignment under the configured denominator.
pub fn identity(a: &ProteinSequence, b: &ProteinSequence, p: &AlignParams) -> Result<f64, AlignError> {
    let s = align_stats(a.as_bytes(), b.as_bytes(), p)?;
    let den = denominator(p.denominator, &s, a.len(), b.len());
    Ok(s.matches as f64 / den as f64)
}

fn denominator(kind: IdentityDenominator, s: &AlignStats, la: usize, lb: usize) -> usize {
    match kind {
        IdentityDenominator::Columns => s.columns,
        IdentityDenominator::MinLength => la.min(lb),
    }
}

/// Upper bound on identity from lengths alone; admissible for pruning.
pub fn identity_upper_bound(la: usize, lb: usize, kind: IdentityDenominator) -> f64 {
    match kind {
        IdentityDenominator::Columns => la.min(lb) as f64 / la.max(lb) as f64,
        IdentityDenominator::MinLength => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResult {
    pub query_id: String,
    pub target_id: String,
    /// `matches / denominator`.
    pub identity: f64,
    pub matches: usize,
    pub columns: usize,
    pub denominator: usize,
}

impl IdentityResult {
    /// Exact comparison of identity fractions; ties rank the smaller target
    /// id higher.
    pub fn better_than(&self, other: &IdentityResult) -> bool {
        let lhs = self.matches as u128 * other.denominator as u128;
        let rhs = other.matches as u128 * self.denominator as u128;
        match lhs.cmp(&rhs) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.target_id < other.target_id,
        }
    }
}

/// Residue code used for k-mer packing (5 bits per residue).
#[inline]
fn residue_code(r: u8) -> u64 {
    const TABLE: [u8; 256] = {
        let mut t = [21u8; 256];
        let letters = b"ACDEFGHIKLMNPQRSTVWYX";
        let mut i = 0;
        while i < letters.len() {
            t[letters[i] as usize] = i as u8;
            i += 1;
        }
        t
    };
    TABLE[r as usize] as u64
}

/// Distinct k-mer codes of `seq`, sorted.
pub fn distinct_kmers(seq: &[u8], k: usize) -> Vec<u64> {
    if seq.len() < k || k == 0 {
        return Vec::new();
    }
    let mask = if k * 5 >= 64 { u64::MAX } else { (1u64 << (5 * k)) - 1 };
    let mut codes = Vec::with_capacity(seq.len() - k + 1);
    let mut code = 0u64;
    for (i, &r) in seq.iter().enumerate() {
        code = ((code << 5) | residue_code(r)) & mask;
        if i + 1 >= k {
            codes.push(code);
        }
    }
    codes.sort_unstable();
    codes.dedup();
    codes
}

/// Inverted index from k-mer to the database entries containing it.
#[derive(Debug, Clone)]
pub struct KmerIndex {
    k: usize,
    postings: HashMap<u64, Vec<u32>>,
    targets: usize,
}

impl KmerIndex {
    pub fn build(db: &[&[u8]], k: usize) -> Self {
        let mut postings: HashMap<u64, Vec<u32>> = HashMap::new();
        for (t, seq) in db.iter().enumerate() {
            for code in distinct_kmers(seq, k) {
                postings.entry(code).or_default().push(t as u32);
            }
        }
        KmerIndex {
            k,
            postings,
            targets: db.len(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of distinct k-mers each target shares with `query`.
    pub fn shared_counts(&self, query: &[u8]) -> Vec<u32> {
        let mut counts = vec![0u32; self.targets];
        for code in distinct_kmers(query, self.k) {
            if let Some(list) = self.postings.get(&code) {
                for &t in list {
                    counts[t as usize] += 1;
                }
            }
        }
        counts
    }
}

/// Result of one maximum-identity query.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxIdentity {
    /// `None` only when the prefilter skipped every target.
    pub best: Option<IdentityResult>,
    pub aligned: usize,
    pub skipped: usize,
}

/// Reusable maximum-identity searcher over a fixed database.
pub struct MaxIdentitySearch<'a> {
    db: &'a SequenceSet,
    params: AlignParams,
    index: Option<KmerIndex>,
}

impl<'a> MaxIdentitySearch<'a> {
    pub fn new(db: &'a SequenceSet, params: &AlignParams) -> Result<Self, AlignError> {
        params.validate()?;
        if db.is_empty() {
            return Err(AlignError::EmptyDatabase);
        }
        let index = params.prefilter.then(|| {
            let seqs: Vec<&[u8]> = db.iter().map(|s| s.as_bytes()).collect();
            KmerIndex::build(&seqs, params.kmer_k)
        });
        Ok(MaxIdentitySearch {
            db,
            params: params.clone(),
            index,
        })
    }

    pub fn params(&self) -> &AlignParams {
        &self.params
    }

    fn candidates(&self, query: &[u8]) -> Vec<usize> {
        match &self.index {
            Some(index) if self.params.min_shared_kmers > 0 => {
                let min = self.params.min_shared_kmers as u32;
                index
                    .shared_counts(query)
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, c)| c >= min)
                    .map(|(t, _)| t)
                    .collect()
            }
            _ => (0..self.db.len()).collect(),
        }
    }

    pub fn search(&self, query: &ProteinSequence) -> Result<MaxIdentity, AlignError> {
        let candidates = self.candidates(query.as_bytes());
        let targets = self.db.as_slice();
        let best = candidates
            .par_iter()
            .map(|&t| {
                let target = &targets[t];
                let s = align_stats(query.as_bytes(), target.as_bytes(), &self.params)?;
                let den = denominator(self.params.denominator, &s, query.len(), target.len());
                Ok(IdentityResult {
                    query_id: query.id().to_string(),
                    target_id: target.id().to_string(),
                    identity: s.matches as f64 / den as f64,
                    matches: s.matches,
                    columns: s.columns,
                    denominator: den,
                })
            })
            .try_reduce_with(|a, b| Ok(if b.better_than(&a) { b } else { a }))
            .transpose()?;
        Ok(MaxIdentity {
            best,
            aligned: candidates.len(),
            skipped: self.db.len() - candidates.len(),
        })
    }

    /// True if some database entry has identity strictly above `threshold`.
    pub fn any_above(&self, query: &ProteinSequence, threshold: f64) -> Result<bool, AlignError> {
        let targets = self.db.as_slice();
        let kind = self.params.denominator;
        let found = self
            .candidates(query.as_bytes())
            .par_iter()
            .filter(|&&t| identity_upper_bound(query.len(), targets[t].len(), kind) > threshold)
            .map(|&t| {
                let target = &targets[t];
                let s = align_stats(query.as_bytes(), target.as_bytes(), &self.params)?;
                let den = denominator(kind, &s, query.len(), target.len());
                Ok(s.matches as f64 / den as f64 > threshold)
            })
            .find_any(|r: &Result<bool, AlignError>| !matches!(r, Ok(false)));
        found.unwrap_or(Ok(false))
    }
}

/// Best database match for `query` (see [`MaxIdentitySearch`]).
pub fn max_identity(query: &ProteinSequence, db: &SequenceSet, p: &AlignParams) -> Result<MaxIdentity, AlignError> {
    MaxIdentitySearch::new(db, p)?.search(query)
}

/// Removes sequences whose identity to any blocklist entry is strictly
/// greater than `threshold`.
pub fn identity_screen(
    set: &SequenceSet,
    blocklist: &SequenceSet,
    threshold: f64,
    p: &AlignParams,
    strict: bool,
) -> Result<SequenceSet, AlignError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(AlignError::InvalidParams(format!("screen threshold {threshold} not in (0, 1]")));
    }
    if blocklist.is_empty() {
        if strict {
            return Err(AlignError::EmptyDatabase);
        }
        tracing::warn!("identity screen blocklist is empty; passing all {} sequences", set.len());
        return Ok(set.clone());
    }
    let search = MaxIdentitySearch::new(blocklist, p)?;
    let mut blocked = Vec::with_capacity(set.len());
    for seq in set {
        blocked.push(search.any_above(seq, threshold)?);
    }
    let mut flags = blocked.into_iter();
    Ok(set.retain_by(|_| !flags.next().unwrap_or(false)))
}
