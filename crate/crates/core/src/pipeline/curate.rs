//! Training-set curation: length, motif, profile-hit and blocklist screens.

use serde::{Deserialize, Serialize};

use super::config::Config;
use super::PipelineError;
use crate::align::identity_screen;
use crate::motif::motif_filter;
use crate::seqio::{length_filter, SequenceSet};
use crate::toolio::{stronger_non_tps_filter, ProfileHit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationStage {
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub removed: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CurationReport {
    pub stages: Vec<CurationStage>,
    pub kept: SequenceSet,
    pub warnings: Vec<String>,
}

impl CurationReport {
    pub fn funnel_table(&self) -> String {
        let mut s = String::from("stage\tinput\toutput\n");
        for st in &self.stages {
            s += &format!("{}\t{}\t{}\n", st.name, st.input, st.output);
        }
        s
    }
}

fn record(stages: &mut Vec<CurationStage>, name: &str, before: &SequenceSet, after: &SequenceSet) {
    stages.push(CurationStage {
        name: name.into(),
        input: before.len(),
        output: after.len(),
        removed: before
            .iter()
            .filter(|s| !after.contains(s.id()))
            .map(|s| s.id().to_string())
            .collect(),
    });
}

/// Runs the screens in order. The profile-hit and blocklist screens are
/// skipped, with a warning, when their input is absent.
pub fn curate(
    set: &SequenceSet,
    config: &Config,
    profile_hits: Option<&[ProfileHit]>,
    blocklist: Option<&SequenceSet>,
    strict: bool,
) -> Result<CurationReport, PipelineError> {
    let c = &config.curation;
    let mut stages = Vec::new();
    let mut warnings = Vec::new();

    let after_length = length_filter(set, c.min_length, c.max_length)?;
    record(&mut stages, "length", set, &after_length);

    let after_motif = motif_filter(&after_length, &c.rules()?)?;
    record(&mut stages, "motif", &after_length, &after_motif);

    let after_profile = match profile_hits {
        Some(hits) => {
            let excluded = stronger_non_tps_filter(hits, &c.allowlist());
            let kept = after_motif.retain_by(|s| !excluded.contains(s.id()));
            record(&mut stages, "profile", &after_motif, &kept);
            kept
        }
        None => {
            warnings.push("no profile hits configured; profile screen skipped".into());
            after_motif
        }
    };

    let kept = match blocklist {
        Some(block) => {
            let kept = identity_screen(&after_profile, block, c.blocklist_identity, &config.align, strict)?;
            record(&mut stages, "blocklist", &after_profile, &kept);
            kept
        }
        None => {
            warnings.push("no blocklist configured; blocklist screen skipped".into());
            after_profile
        }
    };
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(CurationReport { stages, kept, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::{Alphabet, ProteinSequence};

    fn seq(id: &str, residues: &str) -> ProteinSequence {
        ProteinSequence::new(id, "", residues, Alphabet::Strict).unwrap()
    }

    fn padded(core: &str, len: usize, fill: char) -> String {
        let mut s = core.to_string();
        while s.len() < len {
            s.push(fill);
        }
        s
    }

    #[test]
    fn screens_run_in_order() {
        let mut config = Config::default();
        config.curation.min_length = 20;
        config.curation.max_length = 40;
        let set = SequenceSet::from_sequences(
            "t",
            [
                seq("short", "DDAAD"),
                seq("nomotif", &padded("", 30, 'A')),
                seq("keep", &padded("DDLLDKKNDLLSAAAE", 30, 'G')),
                seq("blocked", &padded("DDLLDKKNDLLSAAAE", 30, 'W')),
                seq("nontps", &padded("DDLLDKKNDLLSAAAE", 30, 'V')),
            ],
        )
        .unwrap();
        let hit = |id: &str, acc: &str, score: f64| ProfileHit {
            sequence_id: id.into(),
            profile_name: "p".into(),
            profile_accession: acc.into(),
            score,
            evalue: 1e-5,
        };
        let hits = vec![hit("nontps", "PF00001", 50.0), hit("nontps", "PF01397", 10.0), hit("keep", "PF01397", 10.0)];
        let block = SequenceSet::from_sequences("b", [seq("b1", &padded("DDLLDKKNDLLSAAAE", 30, 'W'))]).unwrap();
        let r = curate(&set, &config, Some(&hits), Some(&block), false).unwrap();
        let counts: Vec<(&str, usize, usize)> = r.stages.iter().map(|s| (s.name.as_str(), s.input, s.output)).collect();
        assert_eq!(
            counts,
            [("length", 5, 4), ("motif", 4, 3), ("profile", 3, 2), ("blocklist", 2, 1)]
        );
        assert_eq!(r.stages[0].removed, ["short"]);
        assert_eq!(r.kept.iter().map(|s| s.id()).collect::<Vec<_>>(), ["keep"]);
        assert!(r.funnel_table().starts_with("stage\tinput\toutput\nlength\t5\t4\n"));

        let r = curate(&set, &config, None, None, false).unwrap();
        assert_eq!(r.stages.len(), 2);
        assert_eq!(r.warnings.len(), 2);
    }
}
