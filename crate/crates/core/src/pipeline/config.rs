//! Run configuration (TOML). Every key has a default; unknown keys are
//! rejected. Relative paths resolve against the config file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scorecard::Stage;
use super::PipelineError;
use crate::align::AlignParams;
use crate::motif::{compile_motif, default_rules, EnzymeClass, MotifRule};
use crate::partition::TrainSelection;
use crate::seqio::Alphabet;
use crate::toolio::{AccessionAllowlist, DomainColumns, DomtblLayout, EcPattern, HitColumns, PlddtScale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxIdRounding {
    /// Round the percent to the nearest integer (halves up) before comparing.
    #[default]
    Integer,
    /// Compare the exact fraction.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub perplexity_top_fraction: f64,
    pub maxid_max_percent: f64,
    pub maxid_rounding: MaxIdRounding,
    pub detector_min: f64,
    pub plddt_min: f64,
    pub tm_min: f64,
    pub tm_max: f64,
    pub ec_allowlist: Vec<EcPattern>,
    pub domain_allowlist: Vec<String>,
    /// Stage order. Stages not listed run afterwards in default order.
    pub order: Vec<Stage>,
    pub disabled: BTreeSet<Stage>,
}

pub const DEFAULT_EC_ALLOWLIST: [&str; 6] = ["4.2.3.75", "2.5.1.21", "5.4.99.33", "5.4.99.39", "5.4.99.8", "4.2.3.-"];

/// InterPro entries for TPS domains and the superfamilies that contain
/// them.
pub const DEFAULT_DOMAIN_ALLOWLIST: [&str; 9] = [
    "IPR001906", // Terpene synthase, N-terminal domain
    "IPR005630", // Terpene synthase, metal-binding domain
    "IPR036965", // Terpene synthase, N-terminal domain superfamily
    "IPR008949", // Isoprenoid synthase domain superfamily
    "IPR008930", // Terpenoid cyclases/protein prenyltransferase alpha-alpha toroid
    "IPR033904", // Trans-isoprenyl diphosphate synthases, head-to-head
    "IPR032697", // Squalene cyclase, N-terminal
    "IPR032696", // Squalene cyclase, C-terminal
    "IPR034741", // Terpene cyclase-like 1, C-terminal domain
];

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            perplexity_top_fraction: 0.10,
            maxid_max_percent: 60.0,
            maxid_rounding: MaxIdRounding::Integer,
            detector_min: 0.7,
            plddt_min: 70.0,
            tm_min: 0.6,
            tm_max: 0.9,
            ec_allowlist: DEFAULT_EC_ALLOWLIST.iter().map(|s| s.parse().expect("valid EC")).collect(),
            domain_allowlist: DEFAULT_DOMAIN_ALLOWLIST.map(String::from).to_vec(),
            order: Stage::ALL.to_vec(),
            disabled: BTreeSet::new(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        if !(self.perplexity_top_fraction > 0.0 && self.perplexity_top_fraction <= 1.0) {
            return bad(format!("perplexity_top_fraction {} not in (0, 1]", self.perplexity_top_fraction));
        }
        if !(0.0..=100.0).contains(&self.maxid_max_percent) {
            return bad(format!("maxid_max_percent {} not in [0, 100]", self.maxid_max_percent));
        }
        if !(0.0..=1.0).contains(&self.detector_min) {
            return bad(format!("detector_min {} not in [0, 1]", self.detector_min));
        }
        if !(0.0..=100.0).contains(&self.plddt_min) {
            return bad(format!("plddt_min {} not in [0, 100]", self.plddt_min));
        }
        if !(0.0 <= self.tm_min && self.tm_min <= self.tm_max && self.tm_max <= 1.0) {
            return bad(format!("TM range [{}, {}] invalid", self.tm_min, self.tm_max));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.order.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("stage '{dup}' listed twice in order"));
        }
        Ok(())
    }

    /// Configured order with unlisted stages appended.
    pub fn stage_order(&self) -> Vec<Stage> {
        let mut order = self.order.clone();
        order.extend(Stage::ALL.iter().filter(|s| !self.order.contains(s)));
        order
    }

    pub fn enabled(&self, stage: Stage) -> bool {
        !self.disabled.contains(&stage)
    }

    /// Number of records kept from a pool of `n`: `ceil(fraction * n)`,
    /// with a small tolerance so that 0.1 * 28000 stays 2800.
    pub fn top_count(&self, n: usize) -> usize {
        let raw = self.perplexity_top_fraction * n as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifSpec {
    pub name: String,
    pub pattern: String,
    pub class: EnzymeClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub min_length: usize,
    pub max_length: usize,
    pub alphabet: Alphabet,
    pub motifs: Vec<MotifSpec>,
    /// Profile accessions or names counted as TPS in the domain table.
    pub tps_profiles: Vec<String>,
    pub domtbl_layout: DomtblLayout,
    /// Sequences above this identity to a blocklist entry are removed.
    pub blocklist_identity: f64,
}

/// Pfam families of TPS domains.
pub const DEFAULT_TPS_PROFILES: [&str; 6] = [
    "PF01397", // Terpene_synth
    "PF03936", // Terpene_synth_C
    "PF19086", // Terpene_syn_C_2
    "PF00494", // SQS_PSY
    "PF13243", // SQHop_cyclase_C
    "PF13249", // SQHop_cyclase_N
];

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            min_length: 300,
            max_length: 1100,
            alphabet: Alphabet::Strict,
            motifs: default_rules()
                .iter()
                .map(|r| MotifSpec {
                    name: r.name().to_string(),
                    pattern: r.to_string(),
                    class: r.class(),
                })
                .collect(),
            tps_profiles: DEFAULT_TPS_PROFILES.map(String::from).to_vec(),
            domtbl_layout: DomtblLayout::Hmmsearch,
            blocklist_identity: 0.8,
        }
    }
}

impl CurationConfig {
    pub fn rules(&self) -> Result<Vec<MotifRule>, PipelineError> {
        self.motifs
            .iter()
            .map(|m| {
                compile_motif(&m.pattern, m.class)
                    .map(|r| r.with_name(m.name.clone()))
                    .map_err(|e| PipelineError::ConfigInvalid(format!("motif '{}': {e}", m.name)))
            })
            .collect()
    }

    pub fn allowlist(&self) -> AccessionAllowlist {
        AccessionAllowlist::new(&self.tps_profiles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrainSpec {
    /// `"auto"`.
    Mode(String),
    List(BTreeSet<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub threshold: f64,
    pub partitions: usize,
    pub train: TrainSpec,
    pub target_fraction: f64,
    /// Sample this fraction of cross-partition pairs instead of checking
    /// all of them.
    pub verify_sample_rate: Option<f64>,
    pub verify_seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            threshold: 0.3,
            partitions: 6,
            train: TrainSpec::List((1..=5).collect()),
            target_fraction: 0.8,
            verify_sample_rate: None,
            verify_seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn selection(&self) -> Result<TrainSelection, PipelineError> {
        match &self.train {
            TrainSpec::Mode(m) if m == "auto" => Ok(TrainSelection::Auto),
            TrainSpec::Mode(m) => Err(PipelineError::ConfigInvalid(format!("unknown train mode '{m}'"))),
            TrainSpec::List(l) => Ok(TrainSelection::Explicit(l.clone())),
        }
    }
}

/// Input files for `curate` and `ingest`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub sequences: Option<PathBuf>,
    pub profile_hits: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    pub generations: Option<PathBuf>,
    pub training: Option<PathBuf>,
    pub maxid: Option<PathBuf>,
    pub detector: Option<PathBuf>,
    pub ec: Option<PathBuf>,
    pub domains: Option<PathBuf>,
    /// Directory of `<id>.pdb` files.
    pub structures: Option<PathBuf>,
    pub hits: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub store: PathBuf,
    pub out: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            store: "evidence".into(),
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    pub scale: PlddtScale,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub filters: FilterConfig,
    pub curation: CurationConfig,
    pub split: SplitConfig,
    pub align: AlignParams,
    pub inputs: InputPaths,
    pub paths: OutputPaths,
    pub hits: HitColumns,
    pub domains: DomainColumns,
    pub structure: StructureConfig,
    /// Declared tool versions, copied into the run manifest.
    pub tools: BTreeMap<String, String>,
    /// Shell command templates per evidence kind, run by `ingest --run-hooks`.
    pub hooks: BTreeMap<String, String>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let c: Config = toml::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Loads and validates, resolving relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        let mut c = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.filters.validate()?;
        self.align
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(format!("align: {e}")))?;
        let cur = &self.curation;
        if cur.min_length == 0 || cur.min_length > cur.max_length {
            return Err(PipelineError::ConfigInvalid(format!(
                "length window [{}, {}] invalid",
                cur.min_length, cur.max_length
            )));
        }
        if !(cur.blocklist_identity > 0.0 && cur.blocklist_identity <= 1.0) {
            return Err(PipelineError::ConfigInvalid("blocklist_identity not in (0, 1]".into()));
        }
        cur.rules()?;
        let s = &self.split;
        if !(s.threshold > 0.0 && s.threshold < 1.0) || s.partitions < 2 {
            return Err(PipelineError::ConfigInvalid("split threshold or partition count invalid".into()));
        }
        if !(s.target_fraction > 0.0 && s.target_fraction < 1.0) {
            return Err(PipelineError::ConfigInvalid("split target_fraction not in (0, 1)".into()));
        }
        s.selection()?;
        for kind in self.hooks.keys() {
            if !super::evidence::HOOK_KINDS.contains(&kind.as_str()) {
                return Err(PipelineError::ConfigInvalid(format!("unknown hook kind '{kind}'")));
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.sequences,
            &mut i.profile_hits,
            &mut i.blocklist,
            &mut i.generations,
            &mut i.training,
            &mut i.maxid,
            &mut i.detector,
            &mut i.ec,
            &mut i.domains,
            &mut i.structures,
            &mut i.hits,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.paths.store);
        fix(&mut self.paths.out);
    }

    /// SHA-256 over the canonical TOML form of the settings that affect
    /// results. Input and output locations are excluded so that moving a
    /// run directory does not change the digest.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.inputs = InputPaths::default();
        canonical.paths = OutputPaths::default();
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_thresholds() {
        let c = Config::from_toml("").unwrap();
        let f = &c.filters;
        assert_eq!(f.perplexity_top_fraction, 0.10);
        assert_eq!(f.maxid_max_percent, 60.0);
        assert_eq!(f.detector_min, 0.7);
        assert_eq!(f.plddt_min, 70.0);
        assert_eq!((f.tm_min, f.tm_max), (0.6, 0.9));
        assert_eq!(f.ec_allowlist.len(), 6);
        assert_eq!(f.stage_order(), Stage::ALL);
        assert_eq!(f.top_count(28_000), 2_800);
        assert_eq!(f.top_count(5), 1);
        assert_eq!((c.curation.min_length, c.curation.max_length), (300, 1100));
        assert_eq!(c.curation.rules().unwrap().len(), 3);
        assert_eq!(c.split.partitions, 6);
        assert_eq!(c.split.selection().unwrap(), TrainSelection::Explicit((1..=5).collect()));
    }

    #[test]
    fn top_count_uses_ceiling() {
        let f = FilterConfig {
            perplexity_top_fraction: 0.5,
            ..FilterConfig::default()
        };
        assert_eq!(f.top_count(5), 3);
        assert_eq!(f.top_count(0), 0);
        let all = FilterConfig {
            perplexity_top_fraction: 1.0,
            ..FilterConfig::default()
        };
        assert_eq!(all.top_count(77), 77);
    }

    #[test]
    fn parses_sections_and_rejects_bad_values() {
        let c = Config::from_toml(
            r#"
[filters]
detector_min = 0.76
order = ["perplexity", "detector", "maxid"]
disabled = ["ec", "domain", "plddt", "tm"]
ec_allowlist = ["4.2.3.-"]

[split]
train = "auto"

[align]
prefilter = true
"#,
        )
        .unwrap();
        assert_eq!(c.filters.detector_min, 0.76);
        assert_eq!(c.filters.stage_order()[..3], [Stage::Perplexity, Stage::Detector, Stage::MaxId]);
        assert_eq!(c.split.selection().unwrap(), TrainSelection::Auto);
        assert!(c.align.prefilter);

        for bad in [
            "[filters]\ndetector_min = 1.5",
            "[filters]\ntm_min = 0.95",
            "[filters]\nperplexity_top_fraction = 0",
            "[filters]\norder = [\"tm\", \"tm\"]",
            "[filters]\nec_allowlist = [\"4.2\"]",
            "[filters]\nbogus = 1",
            "[curation]\nmin_length = 0",
            "[split]\ntrain = \"sometimes\"",
            "[hooks]\nweather = \"true\"",
            "[[curation.motifs]]\nname = \"bad\"\npattern = \"XDD\"\nclass = \"I\"",
        ] {
            assert!(matches!(Config::from_toml(bad), Err(PipelineError::ConfigInvalid(_))), "{bad}");
        }
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.digest(), b.digest());
        b.inputs.detector = Some("elsewhere.csv".into());
        assert_eq!(a.digest(), b.digest());
        b.filters.plddt_min = 71.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
