//! Report files.
//!
//! | file              | format |
//! |-------------------|--------|
//! | `candidates.csv`  | `id,detector_score,plddt,max_tm,maxid_percent,ec_predictions,domains`; numbers to 2 decimals, lists joined with `"; "`, domains as `ACC (description)` |
//! | `funnel.tsv`      | `stage\tinput\toutput`, one row per enabled stage in application order |
//! | `plddt_cdf.tsv`   | `plddt\tfraction`, distinct values ascending |
//! | `summary.tsv`     | `key\tvalue` |
//! | `scorecards.jsonl`| every scorecard with its verdicts, ordered by id |
//! | `manifest.toml`   | timestamp, config digest, input digests, declared tools |
//!
//! Only the `timestamp` line of the manifest varies between identical runs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scorecard::{cdf, fraction_at_least, FunnelReport, Scorecard};
use super::PipelineError;

pub const CANDIDATES: &str = "candidates.csv";
pub const FUNNEL: &str = "funnel.tsv";
pub const PLDDT_CDF: &str = "plddt_cdf.tsv";
pub const SUMMARY: &str = "summary.tsv";
pub const SCORECARDS: &str = "scorecards.jsonl";
pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub candidates: PathBuf,
    pub funnel: PathBuf,
    pub plddt_cdf: PathBuf,
    pub summary: PathBuf,
    pub scorecards: PathBuf,
    pub manifest: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        ReportPaths {
            candidates: dir.join(CANDIDATES),
            funnel: dir.join(FUNNEL),
            plddt_cdf: dir.join(PLDDT_CDF),
            summary: dir.join(SUMMARY),
            scorecards: dir.join(SCORECARDS),
            manifest: dir.join(MANIFEST),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub timestamp: String,
    pub command: String,
    pub config_sha256: String,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Evidence kind to SHA-256 of the stored file.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub tools: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn now(command: &str, config_sha256: String) -> Self {
        RunManifest {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: command.to_string(),
            config_sha256,
            warnings: Vec::new(),
            inputs: BTreeMap::new(),
            tools: BTreeMap::new(),
        }
    }
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

pub fn candidate_table(cards: &[Scorecard]) -> Result<String, PipelineError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::Io(e.to_string());
    w.write_record(["id", "detector_score", "plddt", "max_tm", "maxid_percent", "ec_predictions", "domains"])
        .map_err(csv_err)?;
    for c in cards {
        let ecs = c.ec_predictions.as_deref().unwrap_or_default().join("; ");
        let domains = c
            .domains
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|d| {
                if d.description.is_empty() {
                    d.accession.clone()
                } else {
                    format!("{} ({})", d.accession, d.description)
                }
            })
            .collect::<Vec<_>>()
            .join("; ");
        w.write_record([
            c.id.clone(),
            fmt2(c.detector_score),
            fmt2(c.mean_plddt),
            fmt2(c.best_tm()),
            fmt2(c.maxid_percent()),
            ecs,
            domains,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn funnel_table(funnel: &FunnelReport) -> String {
    let mut s = String::from("stage\tinput\toutput\n");
    for st in &funnel.stages {
        s += &format!("{}\t{}\t{}\n", st.stage, st.input, st.output);
    }
    s
}

pub fn cdf_table(values: &[f64]) -> Result<String, PipelineError> {
    let mut s = String::from("plddt\tfraction\n");
    if values.is_empty() {
        return Ok(s);
    }
    for (v, f) in cdf(values)? {
        s += &format!("{v}\t{f}\n");
    }
    Ok(s)
}

pub fn plddt_values(cards: &[Scorecard]) -> Vec<f64> {
    cards.iter().filter_map(|c| c.mean_plddt).collect()
}

pub fn summary_table(cards: &[Scorecard], funnel: &FunnelReport, plddt_min: f64) -> String {
    let values = plddt_values(cards);
    let mut s = String::from("key\tvalue\n");
    s += &format!("candidates\t{}\n", funnel.total);
    s += &format!("passing\t{}\n", funnel.final_ids.len());
    s += &format!("plddt_values\t{}\n", values.len());
    s += &format!("plddt_threshold\t{plddt_min}\n");
    s += &format!("fraction_plddt_at_least_threshold\t{}\n", fraction_at_least(&values, plddt_min));
    s
}

pub fn scorecards_jsonl(cards: &[Scorecard]) -> String {
    let mut s = String::new();
    for c in cards {
        s += &serde_json::to_string(c).expect("scorecard serializes");
        s.push('\n');
    }
    s
}

pub fn parse_scorecards<R: Read>(input: R) -> Result<Vec<Scorecard>, PipelineError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::ConfigInvalid(format!("scorecards line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// Writes all report files into `dir`. `cards` is every scorecard,
/// `passing` the subset that passed.
pub fn write_reports(
    dir: &Path,
    cards: &[Scorecard],
    passing: &[Scorecard],
    funnel: &FunnelReport,
    plddt_min: f64,
    manifest: &RunManifest,
) -> Result<ReportPaths, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    let p = ReportPaths::in_dir(dir);
    write_file(&p.candidates, &candidate_table(passing)?)?;
    write_file(&p.funnel, &funnel_table(funnel))?;
    write_file(&p.plddt_cdf, &cdf_table(&plddt_values(cards))?)?;
    write_file(&p.summary, &summary_table(cards, funnel, plddt_min))?;
    write_file(&p.scorecards, &scorecards_jsonl(cards))?;
    write_file(&p.manifest, &toml::to_string(manifest).expect("manifest serializes"))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::FilterConfig;
    use crate::pipeline::scorecard::{apply_filters, PerplexityRank, TmEvidence};
    use crate::toolio::DomainAnnotation;

    fn card(id: &str, plddt: Option<f64>) -> Scorecard {
        let mut c = Scorecard::empty(id);
        c.perplexity = Some(PerplexityRank {
            perplexity: 3.0,
            rank: 1,
            pool: 1,
        });
        c.detector_score = Some(0.745);
        c.mean_plddt = plddt;
        c.tm = Some(Some(TmEvidence {
            target: "t".into(),
            tm_score: 0.7,
        }));
        c.ec_predictions = Some(vec!["4.2.3.75".into(), "2.5.1.21".into()]);
        c.domains = Some(vec![
            DomainAnnotation {
                accession: "IPR001906".into(),
                description: "Terpene synthase, N-terminal".into(),
            },
            DomainAnnotation {
                accession: "IPR005630".into(),
                description: String::new(),
            },
        ]);
        c
    }

    #[test]
    fn candidate_rows_quote_and_round() {
        let t = candidate_table(&[card("a", Some(70.0))]).unwrap();
        assert_eq!(
            t,
            "id,detector_score,plddt,max_tm,maxid_percent,ec_predictions,domains\n\
             a,0.74,70.00,0.70,,4.2.3.75; 2.5.1.21,\"IPR001906 (Terpene synthase, N-terminal); IPR005630\"\n"
        );
    }

    #[test]
    fn reports_round_trip_scorecards() {
        let dir = tempfile::tempdir().unwrap();
        let mut cards = vec![card("a", Some(80.0)), card("b", None), card("c", Some(60.0))];
        let f = FilterConfig {
            disabled: [crate::pipeline::Stage::MaxId].into(),
            ..FilterConfig::default()
        };
        let (pass, funnel) = apply_filters(&mut cards, &f).unwrap();
        let m = RunManifest::now("filter", "abc".into());
        let p = write_reports(dir.path(), &cards, &pass, &funnel, 70.0, &m).unwrap();
        assert_eq!(fs::read_to_string(&p.plddt_cdf).unwrap(), "plddt\tfraction\n60\t0.5\n80\t1\n");
        let summary = fs::read_to_string(&p.summary).unwrap();
        assert!(summary.contains("fraction_plddt_at_least_threshold\t0.5\n"), "{summary}");
        let back = parse_scorecards(fs::File::open(&p.scorecards).unwrap()).unwrap();
        assert_eq!(back, cards);
        let manifest: RunManifest = toml::from_str(&fs::read_to_string(&p.manifest).unwrap()).unwrap();
        assert_eq!(manifest, m);
        assert_eq!(fs::read_to_string(&p.candidates).unwrap().lines().count(), 2);
    }
}
