//! Per-candidate scorecards, the filter chain and the funnel it produces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{FilterConfig, MaxIdRounding};
use super::PipelineError;
use crate::align::IdentityResult;
use crate::toolio::{DomainAnnotation, EcNumber, EcPrediction, HitTable, ScoredSequence, StructureConfidence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Perplexity,
    #[serde(rename = "maxid")]
    MaxId,
    Detector,
    Ec,
    Domain,
    Plddt,
    Tm,
}

impl Stage {
    /// Sequence, then function, then structure filters.
    pub const ALL: [Stage; 7] = [
        Stage::Perplexity,
        Stage::MaxId,
        Stage::Detector,
        Stage::Ec,
        Stage::Domain,
        Stage::Plddt,
        Stage::Tm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Perplexity => "perplexity",
            Stage::MaxId => "maxid",
            Stage::Detector => "detector",
            Stage::Ec => "ec",
            Stage::Domain => "domain",
            Stage::Plddt => "plddt",
            Stage::Tm => "tm",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail(String),
    MissingEvidence,
    Disabled,
}

impl Verdict {
    /// Disabled stages do not block; everything else must pass.
    pub fn admits(&self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Disabled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityRank {
    pub perplexity: f64,
    /// 1-based position when the pool is sorted by perplexity, then id.
    pub rank: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmEvidence {
    pub target: String,
    pub tm_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub id: String,
    pub perplexity: Option<PerplexityRank>,
    pub maxid: Option<IdentityResult>,
    pub detector_score: Option<f64>,
    pub mean_plddt: Option<f64>,
    /// `Some(None)`: hits were searched and this candidate had none.
    pub tm: Option<Option<TmEvidence>>,
    pub ec_predictions: Option<Vec<String>>,
    pub domains: Option<Vec<DomainAnnotation>>,
    #[serde(default)]
    pub verdicts: BTreeMap<Stage, Verdict>,
}

impl Scorecard {
    pub fn empty(id: impl Into<String>) -> Self {
        Scorecard {
            id: id.into(),
            perplexity: None,
            maxid: None,
            detector_score: None,
            mean_plddt: None,
            tm: None,
            ec_predictions: None,
            domains: None,
            verdicts: BTreeMap::new(),
        }
    }

    /// maxID as a percentage.
    pub fn maxid_percent(&self) -> Option<f64> {
        self.maxid
            .as_ref()
            .map(|m| (100 * m.matches) as f64 / m.denominator as f64)
    }

    pub fn best_tm(&self) -> Option<f64> {
        self.tm.as_ref().and_then(|t| t.as_ref()).map(|t| t.tm_score)
    }

    pub fn passes(&self) -> bool {
        Stage::ALL
            .iter()
            .all(|s| self.verdicts.get(s).is_some_and(Verdict::admits))
    }
}

/// Sorted by perplexity, then id; the first `ceil(fraction * n)` kept.
pub fn rank_by_perplexity<'a>(records: &'a [ScoredSequence], filters: &FilterConfig) -> Vec<&'a ScoredSequence> {
    let mut sorted: Vec<&ScoredSequence> = records.iter().collect();
    sorted.sort_by(|a, b| a.perplexity.total_cmp(&b.perplexity).then_with(|| a.id().cmp(b.id())));
    sorted.truncate(filters.top_count(records.len()));
    sorted
}

fn perplexity_ranks(records: &[ScoredSequence]) -> BTreeMap<&str, PerplexityRank> {
    let mut sorted: Vec<&ScoredSequence> = records.iter().collect();
    sorted.sort_by(|a, b| a.perplexity.total_cmp(&b.perplexity).then_with(|| a.id().cmp(b.id())));
    sorted
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                r.id(),
                PerplexityRank {
                    perplexity: r.perplexity,
                    rank: i + 1,
                    pool: records.len(),
                },
            )
        })
        .collect()
}

/// Parsed evidence, each stream optional. A stream that is present but
/// lacks an id means "searched, nothing found" for domains and hits, and
/// missing evidence for the rest.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub generations: Option<Vec<ScoredSequence>>,
    pub maxid: Option<BTreeMap<String, IdentityResult>>,
    pub detector: Option<BTreeMap<String, f64>>,
    pub ec: Option<BTreeMap<String, Vec<EcPrediction>>>,
    pub domains: Option<BTreeMap<String, Vec<DomainAnnotation>>>,
    pub structures: Option<BTreeMap<String, StructureConfidence>>,
    pub hits: Option<HitTable>,
}

impl Evidence {
    /// Candidate ids: the generation records when present, otherwise
    /// every id seen in any stream.
    pub fn candidate_ids(&self) -> BTreeSet<String> {
        if let Some(g) = &self.generations {
            return g.iter().map(|r| r.id().to_string()).collect();
        }
        let mut ids = BTreeSet::new();
        for m in [self.maxid.as_ref().map(|m| m.keys().collect::<Vec<_>>())]
            .into_iter()
            .flatten()
        {
            ids.extend(m.into_iter().cloned());
        }
        ids.extend(self.detector.iter().flat_map(|m| m.keys().cloned()));
        ids.extend(self.ec.iter().flat_map(|m| m.keys().cloned()));
        ids.extend(self.domains.iter().flat_map(|m| m.keys().cloned()));
        ids.extend(self.structures.iter().flat_map(|m| m.keys().cloned()));
        ids.extend(self.hits.iter().flat_map(|h| h.queries().map(String::from)));
        ids
    }

    fn referenced_ids(&self) -> BTreeSet<&str> {
        let mut ids = BTreeSet::new();
        ids.extend(self.maxid.iter().flat_map(|m| m.keys().map(String::as_str)));
        ids.extend(self.detector.iter().flat_map(|m| m.keys().map(String::as_str)));
        ids.extend(self.ec.iter().flat_map(|m| m.keys().map(String::as_str)));
        ids.extend(self.domains.iter().flat_map(|m| m.keys().map(String::as_str)));
        ids.extend(self.structures.iter().flat_map(|m| m.keys().map(String::as_str)));
        ids.extend(self.hits.iter().flat_map(|h| h.queries()));
        ids
    }
}

/// Left-joins evidence onto `ids`. Evidence for ids outside the set is an
/// error with `strict`, otherwise a warning. Output is ordered by id.
pub fn build_scorecards(
    ids: &BTreeSet<String>,
    evidence: &Evidence,
    strict: bool,
) -> Result<(Vec<Scorecard>, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    for unknown in evidence.referenced_ids().into_iter().filter(|id| !ids.contains(*id)) {
        if strict {
            return Err(PipelineError::UnknownEvidenceId(unknown.to_string()));
        }
        let w = format!("evidence references unknown id '{unknown}'");
        tracing::warn!("{w}");
        warnings.push(w);
    }
    let ranks = evidence.generations.as_deref().map(perplexity_ranks).unwrap_or_default();
    let cards = ids
        .iter()
        .map(|id| {
            let key = id.as_str();
            Scorecard {
                id: id.clone(),
                perplexity: ranks.get(key).cloned(),
                maxid: evidence.maxid.as_ref().and_then(|m| m.get(key)).cloned(),
                detector_score: evidence.detector.as_ref().and_then(|m| m.get(key)).copied(),
                mean_plddt: evidence.structures.as_ref().and_then(|m| m.get(key)).map(|s| s.mean_plddt),
                tm: evidence.hits.as_ref().map(|h| {
                    h.best(key).map(|b| TmEvidence {
                        target: b.target.clone(),
                        tm_score: b.tm_score,
                    })
                }),
                ec_predictions: evidence
                    .ec
                    .as_ref()
                    .and_then(|m| m.get(key))
                    .map(|v| v.iter().map(|p| p.ec.to_string()).collect()),
                domains: evidence
                    .domains
                    .as_ref()
                    .map(|m| m.get(key).cloned().unwrap_or_default()),
                verdicts: BTreeMap::new(),
            }
        })
        .collect();
    Ok((cards, warnings))
}

/// Integer percent, halves rounded up, computed without floating point.
fn rounded_percent(matches: usize, denominator: usize) -> u128 {
    let (m, d) = (matches as u128, denominator as u128);
    (200 * m + d) / (2 * d)
}

pub fn verdict(card: &Scorecard, stage: Stage, f: &FilterConfig) -> Verdict {
    if !f.enabled(stage) {
        return Verdict::Disabled;
    }
    let check = |ok: bool, reason: String| if ok { Verdict::Pass } else { Verdict::Fail(reason) };
    match stage {
        Stage::Perplexity => match &card.perplexity {
            None => Verdict::MissingEvidence,
            Some(p) => {
                let keep = f.top_count(p.pool);
                check(p.rank <= keep, format!("perplexity rank {} beyond top {keep}", p.rank))
            }
        },
        Stage::MaxId => match &card.maxid {
            None => Verdict::MissingEvidence,
            Some(m) if m.denominator == 0 => Verdict::MissingEvidence,
            Some(m) => {
                let ok = match f.maxid_rounding {
                    MaxIdRounding::Integer => rounded_percent(m.matches, m.denominator) as f64 <= f.maxid_max_percent,
                    MaxIdRounding::None => (100 * m.matches) as f64 <= f.maxid_max_percent * m.denominator as f64,
                };
                let pct = (100 * m.matches) as f64 / m.denominator as f64;
                check(ok, format!("maxID {pct:.2}% above {}%", f.maxid_max_percent))
            }
        },
        Stage::Detector => match card.detector_score {
            None => Verdict::MissingEvidence,
            Some(s) => check(s >= f.detector_min, format!("detector score {s} below {}", f.detector_min)),
        },
        Stage::Ec => match &card.ec_predictions {
            None => Verdict::MissingEvidence,
            Some(ecs) => {
                let ok = ecs.iter().any(|e| {
                    e.parse::<EcNumber>()
                        .is_ok_and(|ec| f.ec_allowlist.iter().any(|p| p.matches(&ec)))
                });
                check(ok, format!("no EC prediction in allowlist ({})", ecs.join("; ")))
            }
        },
        Stage::Domain => match &card.domains {
            None => Verdict::MissingEvidence,
            Some(d) => check(
                d.iter().any(|a| f.domain_allowlist.contains(&a.accession)),
                "no allowlisted domain".into(),
            ),
        },
        Stage::Plddt => match card.mean_plddt {
            None => Verdict::MissingEvidence,
            Some(v) => check(v >= f.plddt_min, format!("pLDDT {v} below {}", f.plddt_min)),
        },
        Stage::Tm => match &card.tm {
            None => Verdict::MissingEvidence,
            Some(None) => Verdict::Fail("no structural hit".into()),
            Some(Some(t)) => check(
                f.tm_min <= t.tm_score && t.tm_score <= f.tm_max,
                format!("TM-score {} outside [{}, {}]", t.tm_score, f.tm_min, f.tm_max),
            ),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelStage {
    pub stage: Stage,
    pub input: usize,
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelReport {
    /// Enabled stages in the order applied.
    pub stages: Vec<FunnelStage>,
    pub total: usize,
    pub final_ids: Vec<String>,
}

/// Fills every card's verdicts, then runs the enabled stages in order.
/// Returns the passing cards (by id) and the funnel.
pub fn apply_filters(
    cards: &mut [Scorecard],
    f: &FilterConfig,
) -> Result<(Vec<Scorecard>, FunnelReport), PipelineError> {
    f.validate()?;
    for card in cards.iter_mut() {
        card.verdicts = Stage::ALL.iter().map(|&s| (s, verdict(card, s, f))).collect();
    }
    let mut alive: Vec<usize> = (0..cards.len()).collect();
    let mut stages = Vec::new();
    for stage in f.stage_order() {
        if !f.enabled(stage) {
            continue;
        }
        let input = alive.len();
        alive.retain(|&i| cards[i].verdicts[&stage] == Verdict::Pass);
        stages.push(FunnelStage {
            stage,
            input,
            output: alive.len(),
        });
    }
    let mut passing: Vec<Scorecard> = alive.into_iter().map(|i| cards[i].clone()).collect();
    passing.sort_by(|a, b| a.id.cmp(&b.id));
    let funnel = FunnelReport {
        stages,
        total: cards.len(),
        final_ids: passing.iter().map(|c| c.id.clone()).collect(),
    };
    Ok((passing, funnel))
}

/// Sorted distinct values with the fraction of inputs at or below each.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::EmptyInput("CDF of no values".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(PipelineError::EmptyInput("CDF input contains NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 < n && sorted[i + 1] == v {
            continue;
        }
        out.push((v, (i + 1) as f64 / n as f64));
    }
    Ok(out)
}

/// Fraction of `values` that are `>= threshold`.
pub fn fraction_at_least(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v >= threshold).count() as f64 / values.len() as f64
}
