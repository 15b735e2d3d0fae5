//! On-disk evidence store.
//!
//! `ingest` validates each configured input with its parser and copies it
//! under a canonical name; `index.json` records origin and SHA-256 per
//! kind. Later stages read only from the store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, Read, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use super::scorecard::{rank_by_perplexity, Evidence, Stage};
use super::PipelineError;
use crate::align::{AlignParams, IdentityResult, MaxIdentitySearch};
use crate::seqio::{parse_fasta, write_fasta, SequenceSet};
use crate::toolio::{
    parse_detector_scores, parse_domain_annotations, parse_ec_predictions, parse_generation_records,
    parse_structural_hits, parse_structure_plddt, ToolError,
};

/// Evidence kinds an external command may produce.
pub const HOOK_KINDS: [&str; 7] = ["detector", "ec", "domains", "structures", "hits", "maxid", "generations"];

/// Every kind the store knows, in ingest order.
pub const KINDS: [&str; 8] = [
    "generations",
    "training",
    "maxid",
    "detector",
    "ec",
    "domains",
    "structures",
    "hits",
];

pub const INDEX_FILE: &str = "index.json";
pub const CANDIDATE_FASTA: &str = "candidates.fasta";

fn canonical_name(kind: &str) -> &'static str {
    match kind {
        "generations" => "generations.jsonl",
        "training" => "training.fasta",
        "maxid" => "maxid.tsv",
        "detector" => "detector.csv",
        "ec" => "ec.csv",
        "domains" => "domains.tsv",
        "structures" => "structures",
        "hits" => "hits.tsv",
        _ => unreachable!("unknown evidence kind {kind}"),
    }
}

fn configured_input(config: &Config, kind: &str) -> Option<PathBuf> {
    let i = &config.inputs;
    match kind {
        "generations" => i.generations.clone(),
        "training" => i.training.clone(),
        "maxid" => i.maxid.clone(),
        "detector" => i.detector.clone(),
        "ec" => i.ec.clone(),
        "domains" => i.domains.clone(),
        "structures" => i.structures.clone(),
        "hits" => i.hits.clone(),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    /// Path relative to the store root.
    pub file: String,
    /// Original location, or `hook: <command>`.
    pub source: String,
    pub sha256: String,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub entries: BTreeMap<String, StoreEntry>,
}

#[derive(Debug, Clone)]
pub struct EvidenceStore {
    root: PathBuf,
    index: StoreIndex,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    let mut f = open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Structure files in a directory, sorted by name, keyed by file stem.
fn structure_files(dir: &Path) -> Result<Vec<(String, PathBuf)>, PipelineError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !path.is_file() || !matches!(ext.to_ascii_lowercase().as_str(), "pdb" | "ent") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_string(), path));
        }
    }
    out.sort();
    Ok(out)
}

/// SHA-256 over `name\0digest\n` lines of the directory's structure files.
fn sha256_dir(dir: &Path) -> Result<String, PipelineError> {
    let mut h = Sha256::new();
    for (_, path) in structure_files(dir)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        h.update(format!("{name}\0{}\n", sha256_file(&path)?).as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// maxID table: `query target identity matches denominator columns`,
/// tab-separated, optional header, `#` comments.
pub fn parse_maxid_table<R: Read>(input: R) -> Result<BTreeMap<String, IdentityResult>, ToolError> {
    let mut data = Vec::new();
    let mut input = input;
    input.read_to_end(&mut data)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(&data[..]);
    let mut out = BTreeMap::new();
    let mut lines: BTreeMap<String, usize> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ToolError::UnparsableRow {
            line: e.position().map_or(i + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if i == 0 && rec.get(0) == Some("query") {
            continue;
        }
        let bad = |message: String| ToolError::UnparsableRow { line, message };
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", rec.len())));
        }
        let num = |k: usize| -> Result<usize, ToolError> {
            rec[k].trim().parse().map_err(|_| bad(format!("bad count '{}'", &rec[k])))
        };
        let (matches, denominator, columns) = (num(3)?, num(4)?, num(5)?);
        if denominator == 0 || matches > denominator || matches > columns {
            return Err(bad("inconsistent counts".into()));
        }
        let query = rec[0].trim().to_string();
        if query.is_empty() {
            return Err(bad("empty query id".into()));
        }
        if let Some(&first_line) = lines.get(&query) {
            return Err(ToolError::DuplicateId {
                id: query,
                first_line,
                second_line: line,
            });
        }
        lines.insert(query.clone(), line);
        out.insert(
            query.clone(),
            IdentityResult {
                query_id: query,
                target_id: rec[1].trim().to_string(),
                identity: matches as f64 / denominator as f64,
                matches,
                columns,
                denominator,
            },
        );
    }
    Ok(out)
}

pub fn write_maxid_table<'a, W: Write>(
    rows: impl IntoIterator<Item = &'a IdentityResult>,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "query\ttarget\tidentity\tmatches\tdenominator\tcolumns")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{}\t{}\t{}",
            r.query_id, r.target_id, r.identity, r.matches, r.denominator, r.columns
        )?;
    }
    Ok(())
}

/// Best training-set match for every query.
pub fn compute_maxid(
    queries: &SequenceSet,
    training: &SequenceSet,
    params: &AlignParams,
) -> Result<BTreeMap<String, IdentityResult>, PipelineError> {
    let search = MaxIdentitySearch::new(training, params)?;
    let mut out = BTreeMap::new();
    for q in queries {
        if let Some(best) = search.search(q)?.best {
            out.insert(q.id().to_string(), best);
        }
    }
    Ok(out)
}

/// Parses `path` as `kind` into `ev`, returning the record count.
fn parse_kind(ev: &mut Evidence, kind: &str, path: &Path, config: &Config, strict: bool) -> Result<usize, PipelineError> {
    let ctx = PipelineError::in_file(path);
    Ok(match kind {
        "generations" => {
            let g = parse_generation_records(open(path)?).map_err(ctx)?;
            let n = g.len();
            ev.generations = Some(g);
            n
        }
        "training" => parse_fasta(open(path)?, config.curation.alphabet)?.len(),
        "maxid" => {
            let m = parse_maxid_table(open(path)?).map_err(ctx)?;
            let n = m.len();
            ev.maxid = Some(m);
            n
        }
        "detector" => {
            let m = parse_detector_scores(open(path)?).map_err(ctx)?;
            let n = m.len();
            ev.detector = Some(m);
            n
        }
        "ec" => {
            let m = parse_ec_predictions(open(path)?).map_err(ctx)?;
            let n = m.len();
            ev.ec = Some(m);
            n
        }
        "domains" => {
            let m = parse_domain_annotations(open(path)?, config.domains).map_err(ctx)?;
            let n = m.len();
            ev.domains = Some(m);
            n
        }
        "structures" => {
            let mut m = BTreeMap::new();
            for (id, file) in structure_files(path)? {
                let s = parse_structure_plddt(open(&file)?, id.clone(), config.structure.scale)
                    .map_err(PipelineError::in_file(&file))?;
                m.insert(id, s);
            }
            let n = m.len();
            ev.structures = Some(m);
            n
        }
        "hits" => {
            let t = parse_structural_hits(open(path)?, &config.hits, strict).map_err(ctx)?;
            let n = t.len();
            ev.hits = Some(t);
            n
        }
        _ => unreachable!(),
    })
}

fn copy_into(kind: &str, src: &Path, dest: &Path) -> Result<(), PipelineError> {
    if kind == "structures" {
        if dest.exists() && dest != src {
            fs::remove_dir_all(dest).map_err(io_err(dest))?;
        }
        fs::create_dir_all(dest).map_err(io_err(dest))?;
        for (_, file) in structure_files(src)? {
            let target = dest.join(file.file_name().unwrap_or_default());
            if target != file {
                fs::copy(&file, &target).map_err(io_err(&file))?;
            }
        }
    } else if src != dest {
        fs::copy(src, dest).map_err(io_err(src))?;
    }
    Ok(())
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

fn run_hook(template: &str, fasta: &Path, output: &Path) -> Result<String, PipelineError> {
    let cmd = template
        .replace("{fasta}", &shell_quote(fasta))
        .replace("{output}", &shell_quote(output));
    tracing::info!("running hook: {cmd}");
    let status = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .status()
        .map_err(|e| PipelineError::Hook(format!("{cmd}: {e}")))?;
    if !status.success() {
        return Err(PipelineError::Hook(format!("{cmd}: exited with {status}")));
    }
    Ok(cmd)
}

impl EvidenceStore {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &StoreIndex {
        &self.index
    }

    pub fn path(&self, kind: &str) -> Option<PathBuf> {
        self.index.entries.get(kind).map(|e| self.root.join(&e.file))
    }

    /// Opens an existing store; a directory without an index is empty.
    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        let index_path = root.join(INDEX_FILE);
        let index = if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
            serde_json::from_str(&text)
                .map_err(|e| PipelineError::Io(format!("{}: corrupt index: {e}", index_path.display())))?
        } else {
            StoreIndex::default()
        };
        Ok(EvidenceStore {
            root: root.to_path_buf(),
            index,
        })
    }

    fn save(&self) -> Result<(), PipelineError> {
        let path = self.root.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&self.index).expect("index serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))
    }

    fn admit(&mut self, kind: &str, src: &Path, source: String, config: &Config, strict: bool) -> Result<(), PipelineError> {
        let dest = self.root.join(canonical_name(kind));
        let records = parse_kind(&mut Evidence::default(), kind, src, config, strict)?;
        copy_into(kind, src, &dest)?;
        let sha256 = if kind == "structures" {
            sha256_dir(&dest)?
        } else {
            sha256_file(&dest)?
        };
        tracing::info!("stored {kind}: {records} records from {source}");
        self.index.entries.insert(
            kind.to_string(),
            StoreEntry {
                file: canonical_name(kind).to_string(),
                source,
                sha256,
                records,
            },
        );
        Ok(())
    }

    /// Validates and copies every configured input. With `run_hooks`, kinds
    /// that have a hook but no input are produced by running the hook on
    /// the candidate FASTA. Nothing is written to the index if any input
    /// fails validation.
    pub fn ingest(config: &Config, run_hooks: bool, strict: bool) -> Result<Self, PipelineError> {
        for kind in KINDS {
            if let Some(src) = configured_input(config, kind) {
                parse_kind(&mut Evidence::default(), kind, &src, config, strict)?;
            }
        }
        let root = &config.paths.store;
        fs::create_dir_all(root).map_err(io_err(root))?;
        let mut store = EvidenceStore::open(root)?;
        let fasta = root.join(CANDIDATE_FASTA);
        for kind in KINDS {
            if let Some(src) = configured_input(config, kind) {
                store.admit(kind, &src, src.display().to_string(), config, strict)?;
            } else if let (true, Some(template)) = (run_hooks, config.hooks.get(kind)) {
                if kind != "generations" && !fasta.exists() {
                    return Err(PipelineError::MissingInput(format!(
                        "hook for '{kind}' needs candidate sequences; configure generations first"
                    )));
                }
                let staged = root.join(format!("hook-{}", canonical_name(kind)));
                if kind == "structures" {
                    fs::create_dir_all(&staged).map_err(io_err(&staged))?;
                }
                let cmd = run_hook(template, &fasta, &staged)?;
                store.admit(kind, &staged, format!("hook: {cmd}"), config, strict)?;
                if staged.is_dir() {
                    fs::remove_dir_all(&staged).map_err(io_err(&staged))?;
                } else {
                    fs::remove_file(&staged).map_err(io_err(&staged))?;
                }
            }
            if kind == "generations" {
                if let Some(path) = store.path("generations") {
                    let records = parse_generation_records(open(&path)?).map_err(PipelineError::in_file(&path))?;
                    let set = SequenceSet::from_sequences(
                        "candidates",
                        records.into_iter().map(|r| r.sequence),
                    )?;
                    let mut f = File::create(&fasta).map_err(io_err(&fasta))?;
                    write_fasta(&set, NonZeroUsize::new(60).expect("nonzero"), &mut f).map_err(io_err(&fasta))?;
                }
            }
        }
        store.save()?;
        Ok(store)
    }

    /// Reads everything in the store. When no maxID table was ingested
    /// but training sequences were, maxID is computed here; with the
    /// perplexity stage enabled only its survivors are aligned, since
    /// every other candidate already fails.
    pub fn load(&self, config: &Config, strict: bool) -> Result<Evidence, PipelineError> {
        let mut ev = Evidence::default();
        for kind in KINDS {
            if kind == "training" {
                continue;
            }
            if let Some(path) = self.path(kind) {
                parse_kind(&mut ev, kind, &path, config, strict)?;
            }
        }
        if ev.maxid.is_none() && config.filters.enabled(Stage::MaxId) {
            if let (Some(training), Some(records)) = (self.path("training"), ev.generations.as_ref()) {
                let training = parse_fasta(open(&training)?, config.curation.alphabet)?;
                let pool: Vec<_> = if config.filters.enabled(Stage::Perplexity) {
                    rank_by_perplexity(records, &config.filters)
                } else {
                    records.iter().collect()
                };
                let queries = SequenceSet::from_sequences("candidates", pool.into_iter().map(|r| r.sequence.clone()))?;
                ev.maxid = Some(compute_maxid(&queries, &training, &config.align)?);
            }
        }
        Ok(ev)
    }

    /// Kind to SHA-256 of the stored copy.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.index
            .entries
            .iter()
            .map(|(k, e)| (k.clone(), e.sha256.clone()))
            .collect()
    }

    pub fn kinds(&self) -> BTreeSet<&str> {
        self.index.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolio::structure::atom_row;

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    fn setup(dir: &Path) -> Config {
        let src = dir.join("src");
        fs::create_dir_all(src.join("pdb")).unwrap();
        write(
            &src.join("gen.jsonl"),
            "{\"id\":\"g1\",\"sequence\":\"MKTA\",\"token_logprobs\":[-1,-1,-1,-1],\"tokenization\":\"residue\"}\n\
             {\"id\":\"g2\",\"sequence\":\"MKTW\",\"token_logprobs\":[-2,-2,-2,-2],\"tokenization\":\"residue\"}\n",
        );
        write(&src.join("train.fasta"), ">t1\nMKTA\n>t2\nWWWW\n");
        write(&src.join("det.csv"), "id,score\ng1,0.9\ng2,0.5\n");
        let pdb: String = (1..=3).map(|i| atom_row(i, "CA", i, 80.0) + "\n").collect();
        write(&src.join("pdb").join("g1.pdb"), &pdb);
        let mut c = Config::default();
        c.inputs.generations = Some(src.join("gen.jsonl"));
        c.inputs.training = Some(src.join("train.fasta"));
        c.inputs.detector = Some(src.join("det.csv"));
        c.inputs.structures = Some(src.join("pdb"));
        c.paths.store = dir.join("store");
        c.filters.perplexity_top_fraction = 1.0;
        c
    }

    #[test]
    fn ingest_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let c = setup(dir.path());
        let store = EvidenceStore::ingest(&c, false, false).unwrap();
        assert_eq!(store.kinds(), BTreeSet::from(["generations", "training", "detector", "structures"]));
        assert_eq!(store.index().entries["detector"].records, 2);
        assert_eq!(
            store.index().entries["detector"].sha256,
            hex::encode(Sha256::digest(b"id,score\ng1,0.9\ng2,0.5\n"))
        );

        let reopened = EvidenceStore::open(&c.paths.store).unwrap();
        assert_eq!(reopened.index(), store.index());
        let ev = reopened.load(&c, false).unwrap();
        assert_eq!(ev.generations.as_ref().unwrap().len(), 2);
        assert_eq!(ev.structures.as_ref().unwrap()["g1"].mean_plddt, 80.0);
        let maxid = ev.maxid.unwrap();
        assert_eq!(maxid["g1"].target_id, "t1");
        assert_eq!((maxid["g1"].matches, maxid["g1"].denominator), (4, 4));
        assert!(c.paths.store.join(CANDIDATE_FASTA).exists());
    }

    #[test]
    fn invalid_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        let bad = dir.path().join("bad.csv");
        write(&bad, "g1,1.5\n");
        c.inputs.detector = Some(bad);
        let err = EvidenceStore::ingest(&c, false, false).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::Tool {
                source: ToolError::ScoreOutOfRange { line: 1, .. },
                ..
            }
        ));
        assert!(!c.paths.store.join(INDEX_FILE).exists());
        c.inputs.detector = Some(dir.path().join("missing.csv"));
        assert_eq!(EvidenceStore::ingest(&c, false, false).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hooks_fill_missing_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = setup(dir.path());
        c.inputs.detector = None;
        c.hooks.insert(
            "detector".into(),
            "grep '^>' {fasta} | sed 's/^>//; s/$/,0.75/' > {output}".into(),
        );
        let store = EvidenceStore::ingest(&c, true, false).unwrap();
        assert!(store.index().entries["detector"].source.starts_with("hook: "));
        let ev = store.load(&c, false).unwrap();
        assert_eq!(ev.detector.unwrap()["g2"], 0.75);

        c.hooks.insert("ec".into(), "exit 3".into());
        assert!(matches!(EvidenceStore::ingest(&c, true, false), Err(PipelineError::Hook(_))));
    }

    #[test]
    fn maxid_table_round_trip() {
        let rows = [IdentityResult {
            query_id: "q".into(),
            target_id: "t".into(),
            identity: 0.5,
            matches: 2,
            columns: 5,
            denominator: 4,
        }];
        let mut buf = Vec::new();
        write_maxid_table(&rows, &mut buf).unwrap();
        let back = parse_maxid_table(&buf[..]).unwrap();
        assert_eq!(back["q"], rows[0]);
        assert!(parse_maxid_table(&b"q\tt\t0.5\t5\t4\t5\n"[..]).is_err());
        assert!(matches!(
            parse_maxid_table(&b"q\tt\t0\t1\t4\t5\nq\tt\t0\t1\t4\t5\n"[..]),
            Err(ToolError::DuplicateId { .. })
        ));
    }
}
