mod common;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{mutate, random_seq, triage_copy, tpsfunnel, AMINO};
use tpsfunnel::partition::parse_split_manifest;
use tpsfunnel::pipeline::report::{parse_scorecards, RunManifest};

fn run_ok(args: &[&str]) -> String {
    let out = tpsfunnel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    tpsfunnel(args).status.code().unwrap()
}

#[test]
fn usage_and_exit_codes() {
    let out = tpsfunnel(&["filter"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&[]), 64);
    assert_eq!(code(&["--config", "x.toml", "frobnicate"]), 64);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--config", "/nonexistent/run.toml", "filter"]), 2);

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[filters]\ndetector_min = 2.0\n").unwrap();
    assert_eq!(code(&["--config", bad.to_str().unwrap(), "filter"]), 1);

    let empty = tmp.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&["--config", empty.to_str().unwrap(), "filter"]), 1);
}

#[test]
fn fixture_scorecards_carry_the_target_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = triage_copy(tmp.path());
    let c = cfg.to_str().unwrap();
    run_ok(&["--config", c, "ingest"]);
    let stdout = run_ok(&["--config", c, "filter"]);
    assert!(stdout.ends_with("7 candidates\n"), "{stdout}");
    let dir = cfg.parent().unwrap();
    let cards = parse_scorecards(fs::File::open(dir.join("out/scorecards.jsonl")).unwrap()).unwrap();
    assert_eq!(cards.len(), 77);
    let table = [
        ("TpsGPT1", 0.75, 78.0, 0.73, 149, 300),
        ("TpsGPT2", 0.72, 74.0, 0.79, 215, 360),
        ("TpsGPT3", 0.73, 74.0, 0.84, 180, 300),
        ("TpsGPT4", 0.73, 70.0, 0.65, 298, 496),
        ("TpsGPT5", 0.78, 80.0, 0.72, 239, 400),
        ("TpsGPT6", 0.73, 71.0, 0.69, 172, 300),
        ("TpsGPT7", 0.74, 71.0, 0.72, 167, 320),
    ];
    for (id, det, plddt, tm, m, d) in table {
        let card = cards.iter().find(|c| c.id == id).unwrap();
        assert_eq!(card.detector_score, Some(det), "{id}");
        assert_eq!(card.mean_plddt, Some(plddt), "{id}");
        assert_eq!(card.best_tm(), Some(tm), "{id}");
        let maxid = card.maxid.as_ref().unwrap();
        assert_eq!((maxid.matches, maxid.denominator), (m, d), "{id}");
        assert_eq!(maxid.target_id, format!("train_{id}"));
        assert!(card.passes());
    }
    let missing = cards.iter().filter(|c| c.mean_plddt.is_none()).count();
    assert_eq!(missing, 4);
    assert!(cards.iter().filter(|c| c.mean_plddt.is_none()).all(|c| !c.passes()));

    let funnel = fs::read_to_string(dir.join("out/funnel.tsv")).unwrap();
    assert!(funnel.starts_with("stage\tinput\toutput\nperplexity\t77\t77\nmaxid\t77\t"), "{funnel}");
    assert!(funnel.ends_with("tm\t15\t7\n"), "{funnel}");
    let manifest: RunManifest = toml::from_str(&fs::read_to_string(dir.join("out/manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest.inputs.len(), 7);
    assert_eq!(manifest.tools["detector"], "fixture");

    // `report` re-derives the same table from the saved scorecards.
    let golden = fs::read(dir.join("expected_candidates.csv")).unwrap();
    fs::remove_file(dir.join("out/candidates.csv")).unwrap();
    run_ok(&["--config", c, "report"]);
    assert_eq!(fs::read(dir.join("out/candidates.csv")).unwrap(), golden);
}

#[test]
fn tightening_the_detector_keeps_only_the_strongest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = triage_copy(tmp.path());
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "[filters]\n",
        "[filters]\ndetector_min = 0.76\norder = [\"perplexity\", \"detector\"]\n",
    );
    fs::write(&cfg, text).unwrap();
    let c = cfg.to_str().unwrap();
    run_ok(&["--config", c, "ingest"]);
    let stdout = run_ok(&["--config", c, "filter"]);
    assert!(stdout.contains("detector\t77\t1\n"), "{stdout}");
    let table = fs::read_to_string(cfg.parent().unwrap().join("out/candidates.csv")).unwrap();
    let ids: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["TpsGPT5"]);
}

#[test]
fn ingest_rejects_bad_evidence_and_strict_rejects_strangers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = triage_copy(tmp.path());
    let dir = cfg.parent().unwrap();
    let c = cfg.to_str().unwrap();
    let good = fs::read_to_string(dir.join("detector.csv")).unwrap();

    fs::write(dir.join("detector.csv"), good.replace("TpsGPT3,0.73", "TpsGPT3,1.73")).unwrap();
    let out = tpsfunnel(&["--config", c, "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&["--config", c, "filter"]), 1, "nothing was ingested");

    fs::write(dir.join("detector.csv"), format!("{good}stranger,0.9\n")).unwrap();
    run_ok(&["--config", c, "ingest"]);
    assert_eq!(code(&["--config", c, "--strict", "filter"]), 1);
    run_ok(&["--config", c, "filter"]);
    let manifest: RunManifest =
        toml::from_str(&fs::read_to_string(dir.join("out/manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest.warnings.len(), 1);
    assert!(manifest.warnings[0].contains("stranger"));
}

fn write_fasta(path: &Path, seqs: &[(String, Vec<u8>)]) {
    let text: String = seqs
        .iter()
        .map(|(id, s)| format!(">{id}\n{}\n", String::from_utf8_lossy(s)))
        .collect();
    fs::write(path, text).unwrap();
}

#[test]
fn curate_reports_length_removals_first() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let motif = b"DDLLDKKNDLLSAAAE";
    let mut seqs = Vec::new();
    for (i, len) in [120, 150, 40, 400].into_iter().enumerate() {
        let mut s = motif.to_vec();
        s.extend(random_seq(&mut rng, b"AGKLMPQRV", len - motif.len()));
        seqs.push((format!("s{i}"), s));
    }
    write_fasta(&tmp.path().join("in.fasta"), &seqs);
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "[curation]\nmin_length = 100\nmax_length = 300\n\n[inputs]\nsequences = \"in.fasta\"\n",
    )
    .unwrap();
    let stdout = run_ok(&["--config", cfg.to_str().unwrap(), "curate"]);
    assert_eq!(stdout, "stage\tinput\toutput\nlength\t4\t2\nmotif\t2\t2\n");
    let removed = fs::read_to_string(tmp.path().join("out/curation_removed.tsv")).unwrap();
    assert_eq!(removed, "id\tstage\ns2\tlength\ns3\tlength\n");
    let curated = fs::read_to_string(tmp.path().join("out/curated.fasta")).unwrap();
    assert_eq!(curated.matches('>').count(), 2);
}

#[test]
fn split_and_maxid_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seqs = Vec::new();
    for f in 0..12 {
        let ancestor = random_seq(&mut rng, AMINO, 90);
        for k in 0..rng.gen_range(1..5) {
            seqs.push((format!("f{f}_{k}"), mutate(&mut rng, &ancestor, 0.1)));
        }
    }
    write_fasta(&tmp.path().join("curated.fasta"), &seqs);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[split]\ntrain = \"auto\"\n\n[inputs]\ntraining = \"curated.fasta\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    let input = tmp.path().join("curated.fasta");
    let stdout = run_ok(&["--config", c, "--threads", "2", "split", "--input", input.to_str().unwrap()]);
    assert!(stdout.contains("violations\t0"), "{stdout}");
    let out = tmp.path().join("out");
    let split = parse_split_manifest(fs::File::open(out.join("split.tsv")).unwrap()).unwrap();
    assert_eq!(split.rows.len(), seqs.len());
    let train = fs::read_to_string(out.join("train.fasta")).unwrap().matches('>').count();
    let validation = fs::read_to_string(out.join("validation.fasta")).unwrap().matches('>').count();
    assert_eq!((train, validation), (split.train_count(), split.validation_count()));

    let q = tmp.path().join("q.fasta");
    write_fasta(&q, &[("q1".into(), seqs[0].1.clone())]);
    run_ok(&["--config", c, "maxid", "--query", q.to_str().unwrap()]);
    let table = fs::read_to_string(out.join("maxid.tsv")).unwrap();
    assert_eq!(
        table,
        format!("query\ttarget\tidentity\tmatches\tdenominator\tcolumns\nq1\t{}\t1.000000\t90\t90\t90\n", seqs[0].0)
    );
}

#[test]
fn hooks_produce_missing_evidence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = triage_copy(tmp.path());
    let dir = cfg.parent().unwrap();
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("detector = \"detector.csv\"\n", "")
        .replace("[tools]", "[hooks]\ndetector = \"cp detector.csv {output}\"\n\n[tools]");
    fs::write(&cfg, text).unwrap();
    let c = cfg.to_str().unwrap();
    // hooks run in the caller's directory
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_tpsfunnel"))
        .args(["--config", c, "ingest", "--run-hooks"])
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = run_ok(&["--config", c, "filter"]);
    assert!(stdout.ends_with("7 candidates\n"));
    let index = fs::read_to_string(dir.join("evidence/index.json")).unwrap();
    assert!(index.contains("hook: cp detector.csv"));
}
