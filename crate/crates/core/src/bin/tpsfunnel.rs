//! Command-line entry point.
//!
//! Exit status: 0 success, 1 validation failure, 2 I/O failure, 64 usage.

use std::fs::{self, File};
use std::io::BufReader;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tpsfunnel::partition::{split_dataset, verify_split, write_split_manifest, Role, VerifyMode};
use tpsfunnel::pipeline::evidence::{compute_maxid, write_maxid_table, EvidenceStore};
use tpsfunnel::pipeline::report::{parse_scorecards, write_reports, RunManifest, SCORECARDS};
use tpsfunnel::pipeline::{apply_filters, build_scorecards, curate, Config, PipelineError, Scorecard};
use tpsfunnel::seqio::{parse_fasta, write_fasta, SequenceSet};
use tpsfunnel::toolio::parse_profile_hits;

#[derive(Parser)]
#[command(name = "tpsfunnel", version, about = "Terpene synthase curation, splitting and candidate triage")]
struct Cli {
    /// Path to the TOML configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    threads: Option<NonZeroUsize>,
    /// Treat warnings about inconsistent inputs as errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Length, motif, profile-hit and blocklist screens over `inputs.sequences`.
    Curate,
    /// Homology-aware train/validation split, then a leakage check.
    Split {
        /// FASTA to split; defaults to `<out>/curated.fasta`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Maximum identity of each query against a database.
    Maxid {
        #[arg(long)]
        query: PathBuf,
        /// Defaults to `inputs.training`.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Defaults to `<out>/maxid.tsv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Validate inputs and copy them into the evidence store.
    Ingest {
        /// Run configured hooks for kinds without an input file.
        #[arg(long)]
        run_hooks: bool,
    },
    /// Score every candidate in the store and write reports.
    Filter,
    /// Re-apply filters to saved scorecards and rewrite reports.
    Report,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

fn read_fasta(path: &Path, config: &Config) -> Result<SequenceSet, PipelineError> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(parse_fasta(BufReader::new(f), config.curation.alphabet)?)
}

fn save_fasta(path: &Path, set: &SequenceSet) -> Result<(), PipelineError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    write_fasta(set, NonZeroUsize::new(60).expect("nonzero"), &mut f).map_err(io_err(path))
}

fn out_dir(config: &Config) -> Result<&Path, PipelineError> {
    let dir = config.paths.out.as_path();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, PipelineError> {
    p.as_deref()
        .ok_or_else(|| PipelineError::MissingInput(format!("inputs.{key} is not configured")))
}

fn run_curate(config: &Config, strict: bool) -> Result<(), PipelineError> {
    let set = read_fasta(required(&config.inputs.sequences, "sequences")?, config)?;
    let hits = match &config.inputs.profile_hits {
        Some(p) => {
            let f = File::open(p).map_err(io_err(p))?;
            Some(parse_profile_hits(BufReader::new(f), config.curation.domtbl_layout).map_err(PipelineError::in_file(p))?)
        }
        None => None,
    };
    let blocklist = config.inputs.blocklist.as_deref().map(|p| read_fasta(p, config)).transpose()?;
    let report = curate(&set, config, hits.as_deref(), blocklist.as_ref(), strict)?;
    let dir = out_dir(config)?;
    save_fasta(&dir.join("curated.fasta"), &report.kept)?;
    let funnel = dir.join("curation_funnel.tsv");
    fs::write(&funnel, report.funnel_table()).map_err(io_err(&funnel))?;
    let mut removed = String::from("id\tstage\n");
    for st in &report.stages {
        for id in &st.removed {
            removed += &format!("{id}\t{}\n", st.name);
        }
    }
    let removed_path = dir.join("curation_removed.tsv");
    fs::write(&removed_path, removed).map_err(io_err(&removed_path))?;
    print!("{}", report.funnel_table());
    Ok(())
}

fn run_split(config: &Config, input: Option<PathBuf>) -> Result<(), PipelineError> {
    let dir = out_dir(config)?;
    let input = input.unwrap_or_else(|| dir.join("curated.fasta"));
    let set = read_fasta(&input, config)?;
    let s = &config.split;
    let split = split_dataset(&set, s.threshold, s.partitions, &s.selection()?, s.target_fraction, &config.align)?;
    for w in &split.warnings {
        tracing::warn!("{w}");
    }
    let manifest = dir.join("split.tsv");
    let mut f = File::create(&manifest).map_err(io_err(&manifest))?;
    write_split_manifest(&split, Some(&config.digest()), &mut f).map_err(io_err(&manifest))?;
    for (role, name) in [(Role::Train, "train.fasta"), (Role::Validation, "validation.fasta")] {
        let ids: std::collections::BTreeSet<&str> = split.ids_with_role(role).collect();
        save_fasta(&dir.join(name), &set.retain_by(|q| ids.contains(q.id())))?;
    }
    let mode = match s.verify_sample_rate {
        Some(rate) => VerifyMode::Sampled {
            rate,
            seed: s.verify_seed,
        },
        None => VerifyMode::Exhaustive,
    };
    let leakage = verify_split(&split, &set, s.threshold, &config.align, mode)?;
    let report = dir.join("leakage.json");
    fs::write(&report, serde_json::to_string_pretty(&leakage).expect("report serializes") + "\n")
        .map_err(io_err(&report))?;
    println!(
        "train\t{}\nvalidation\t{}\ntrain_fraction\t{:.4}\nviolations\t{}",
        split.train_count(),
        split.validation_count(),
        split.train_fraction(),
        leakage.violations.len()
    );
    if !leakage.is_clean() {
        return Err(PipelineError::ConfigInvalid(format!(
            "split leaks: {} cross-partition pairs at identity >= {}",
            leakage.violations.len(),
            s.threshold
        )));
    }
    Ok(())
}

fn run_maxid(config: &Config, query: &Path, db: Option<PathBuf>, output: Option<PathBuf>) -> Result<(), PipelineError> {
    let queries = read_fasta(query, config)?;
    let db = match db {
        Some(p) => p,
        None => required(&config.inputs.training, "training")?.to_path_buf(),
    };
    let training = read_fasta(&db, config)?;
    let table = compute_maxid(&queries, &training, &config.align)?;
    let output = match output {
        Some(p) => p,
        None => out_dir(config)?.join("maxid.tsv"),
    };
    let f = File::create(&output).map_err(io_err(&output))?;
    write_maxid_table(table.values(), f).map_err(io_err(&output))?;
    println!("{} queries written to {}", table.len(), output.display());
    Ok(())
}

fn run_ingest(config: &Config, run_hooks: bool, strict: bool) -> Result<(), PipelineError> {
    let store = EvidenceStore::ingest(config, run_hooks, strict)?;
    for (kind, e) in &store.index().entries {
        println!("{kind}\t{}\t{}", e.records, e.sha256);
    }
    Ok(())
}

fn finish(
    config: &Config,
    command: &str,
    cards: &mut [Scorecard],
    mut manifest: RunManifest,
) -> Result<(), PipelineError> {
    let (passing, funnel) = apply_filters(cards, &config.filters)?;
    manifest.tools = config.tools.clone();
    write_reports(&config.paths.out, cards, &passing, &funnel, config.filters.plddt_min, &manifest)?;
    for st in &funnel.stages {
        println!("{}\t{}\t{}", st.stage, st.input, st.output);
    }
    println!("{} candidates", passing.len());
    tracing::info!("{command}: reports written to {}", config.paths.out.display());
    Ok(())
}

fn run_filter(config: &Config, strict: bool) -> Result<(), PipelineError> {
    let store = EvidenceStore::open(&config.paths.store)?;
    if store.index().entries.is_empty() {
        return Err(PipelineError::MissingInput(format!(
            "evidence store {} is empty; run ingest first",
            config.paths.store.display()
        )));
    }
    let evidence = store.load(config, strict)?;
    let ids = evidence.candidate_ids();
    if ids.is_empty() {
        return Err(PipelineError::EmptyInput("no candidate ids in the evidence store".into()));
    }
    let (mut cards, warnings) = build_scorecards(&ids, &evidence, strict)?;
    let mut manifest = RunManifest::now("filter", config.digest());
    manifest.inputs = store.digests();
    manifest.warnings = warnings;
    finish(config, "filter", &mut cards, manifest)
}

fn run_report(config: &Config) -> Result<(), PipelineError> {
    let path = config.paths.out.join(SCORECARDS);
    let mut cards = parse_scorecards(File::open(&path).map_err(io_err(&path))?)?;
    let mut manifest = RunManifest::now("report", config.digest());
    manifest
        .inputs
        .insert("scorecards".into(), tpsfunnel::pipeline::evidence::sha256_file(&path)?);
    finish(config, "report", &mut cards, manifest)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let config_path = cli.config.expect("checked by caller");
    let config = Config::load(&config_path)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.get())
            .build_global()
            .map_err(|e| PipelineError::ConfigInvalid(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Curate => run_curate(&config, cli.strict),
        Command::Split { input } => run_split(&config, input),
        Command::Maxid { query, db, output } => run_maxid(&config, &query, db, output),
        Command::Ingest { run_hooks } => run_ingest(&config, run_hooks, cli.strict),
        Command::Filter => run_filter(&config, cli.strict),
        Command::Report => run_report(&config),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.config.is_none() {
        use clap::CommandFactory;
        eprintln!("error: --config <path> is required\n\n{}", Cli::command().render_usage());
        return ExitCode::from(64);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
