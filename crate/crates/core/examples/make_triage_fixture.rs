//! Writes the 77-candidate evidence bundle under `tests/fixtures/triage77`.
//!
//! Seven candidates carry fixed target values; seventy
//! distractors pass the detector but fail maxID or a structure check.
//! Each candidate has one planted training neighbour sharing an `m`
//! residue prefix and nothing else, so its maxID is exactly `m / L`.
//!
//!     cargo run --example make_triage_fixture

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PREFIX: &[u8] = b"ACDEFGHI";
const CANDIDATE_TAIL: &[u8] = b"KLMNPQ";
const NEIGHBOUR_TAIL: &[u8] = b"RSTVWY";

struct Candidate {
    id: String,
    detector: f64,
    plddt: Option<f64>,
    tm: Option<f64>,
    matches: usize,
    len: usize,
    ec: &'static str,
    domains: &'static [(&'static str, &'static str)],
}

const TPS_N: (&str, &str) = ("IPR001906", "Terpene synthase, N-terminal domain");
const TPS_METAL: (&str, &str) = ("IPR005630", "Terpene synthase, metal-binding domain");
const HEAD_TO_HEAD: (&str, &str) = ("IPR033904", "Trans-isoprenyl diphosphate synthases, head-to-head domain");
const SHC_N: (&str, &str) = ("IPR032697", "Squalene-hopene cyclase, N-terminal domain");

fn targets() -> Vec<Candidate> {
    let rows: [(f64, f64, f64, usize, usize, &str, &[(&str, &str)]); 7] = [
        (0.75, 78.0, 0.73, 149, 300, "4.2.3.75", &[TPS_N, TPS_METAL]),
        (0.72, 74.0, 0.79, 215, 360, "2.5.1.21", &[HEAD_TO_HEAD]),
        (0.73, 74.0, 0.84, 180, 300, "5.4.99.33", &[SHC_N]),
        (0.73, 70.0, 0.65, 298, 496, "2.5.1.21", &[HEAD_TO_HEAD]),
        (0.78, 80.0, 0.72, 239, 400, "5.4.99.39", &[SHC_N]),
        (0.73, 71.0, 0.69, 172, 300, "2.5.1.21", &[HEAD_TO_HEAD]),
        (0.74, 71.0, 0.72, 167, 320, "5.4.99.8", &[SHC_N]),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(detector, plddt, tm, matches, len, ec, domains))| Candidate {
            id: format!("TpsGPT{}", i + 1),
            detector,
            plddt: Some(plddt),
            tm: Some(tm),
            matches,
            len,
            ec,
            domains,
        })
        .collect()
}

fn distractors(rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    let mut out = Vec::new();
    for i in 0..70 {
        let len = 2 * rng.gen_range(150..=250);
        let ok_matches = len * rng.gen_range(30..=58) / 100;
        let mut c = Candidate {
            id: format!("cand{:03}", i + 1),
            detector: (rng.gen_range(70..=75) as f64) / 100.0,
            plddt: Some(rng.gen_range(72..=92) as f64),
            tm: Some(rng.gen_range(61..=89) as f64 / 100.0),
            matches: ok_matches,
            len,
            ec: ["4.2.3.75", "2.5.1.21", "4.2.3.9"][i % 3],
            domains: [&[TPS_N][..], &[HEAD_TO_HEAD], &[SHC_N]][i % 3],
        };
        match i {
            // rounds to 61%
            0 => (c.matches, c.len) = (121, 200),
            1 => (c.matches, c.len) = (303, 500),
            2..=49 => c.matches = len * rng.gen_range(62..=90) / 100,
            50..=55 => c.plddt = Some(69.99),
            56..=57 => c.plddt = Some(rng.gen_range(40..=65) as f64),
            58..=60 => c.tm = Some(0.59),
            61..=63 => c.tm = Some(0.91),
            64..=65 => c.tm = None,
            _ => c.plddt = None,
        }
        if i == 69 {
            c.detector = 0.70;
        }
        out.push(c);
    }
    out
}

fn pick(rng: &mut ChaCha8Rng, letters: &[u8], n: usize) -> String {
    (0..n).map(|_| letters[rng.gen_range(0..letters.len())] as char).collect()
}

/// Twenty alpha-carbon rows whose temperature factors average to `mean`.
fn structure(mean: f64) -> String {
    let mut s = String::new();
    for i in 0..20 {
        let b = if mean.fract() == 0.0 {
            mean + if i % 2 == 0 { 0.5 } else { -0.5 }
        } else {
            mean
        };
        writeln!(
            s,
            "ATOM  {:>5}  CA  ALA A{:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00{:>6.2}           C",
            i + 1,
            i + 1,
            i as f64 * 3.8,
            0.0,
            0.0,
            b
        )
        .unwrap();
    }
    s + "END\n"
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/triage77");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(dir.join("structures")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut all = targets();
    all.extend(distractors(&mut rng));

    let mut generations = String::new();
    let mut training = String::new();
    let mut detector = String::from("id,score\n");
    let mut ec = String::from("id,predictions\n");
    let mut domains = String::new();
    let mut hits = String::from("query\ttarget\talntmscore\tevalue\tbits\n");
    for c in &all {
        let prefix = pick(&mut rng, PREFIX, c.matches);
        let seq = prefix.clone() + &pick(&mut rng, CANDIDATE_TAIL, c.len - c.matches);
        let neighbour = prefix + &pick(&mut rng, NEIGHBOUR_TAIL, c.len - c.matches);
        let logprobs: Vec<String> = (0..c.len)
            .map(|_| format!("{:.4}", -rng.gen_range(0.05..3.0f64)))
            .collect();
        writeln!(
            generations,
            "{{\"id\":\"{}\",\"sequence\":\"{seq}\",\"token_logprobs\":[{}],\"tokenization\":\"residue\"}}",
            c.id,
            logprobs.join(",")
        )
        .unwrap();
        writeln!(training, ">train_{}\n{neighbour}", c.id).unwrap();
        writeln!(detector, "{},{:.2}", c.id, c.detector).unwrap();
        writeln!(ec, "{},EC:{}/0.9", c.id, c.ec).unwrap();
        for (acc, desc) in c.domains {
            let start = rng.gen_range(10..60);
            writeln!(
                domains,
                "{}\tmd5\t{}\tPfam\tPF00000\tdomain\t{start}\t{}\t1.0E-20\tT\t01-06-2024\t{acc}\t{desc}",
                c.id,
                c.len,
                start + 200
            )
            .unwrap();
        }
        if let Some(tm) = c.tm {
            for (k, t) in [tm - 0.12, tm, tm - 0.05].iter().enumerate() {
                writeln!(hits, "{}\ttrain_hit{}_{}\t{:.2}\t1.0E-10\t200", c.id, k, c.id, t.max(0.01)).unwrap();
            }
        }
        if let Some(p) = c.plddt {
            fs::write(dir.join("structures").join(format!("{}.pdb", c.id)), structure(p)).unwrap();
        }
    }
    fs::write(dir.join("generations.jsonl"), generations).unwrap();
    fs::write(dir.join("training.fasta"), training).unwrap();
    fs::write(dir.join("detector.csv"), detector).unwrap();
    fs::write(dir.join("ec.csv"), ec).unwrap();
    fs::write(dir.join("domains.tsv"), domains).unwrap();
    fs::write(dir.join("hits.tsv"), hits).unwrap();
    fs::write(
        dir.join("config.toml"),
        "[filters]\nperplexity_top_fraction = 1.0\n\n\
         [inputs]\ngenerations = \"generations.jsonl\"\ntraining = \"training.fasta\"\n\
         detector = \"detector.csv\"\nec = \"ec.csv\"\ndomains = \"domains.tsv\"\n\
         structures = \"structures\"\nhits = \"hits.tsv\"\n\n\
         [paths]\nstore = \"evidence\"\nout = \"out\"\n\n\
         [tools]\ndetector = \"fixture\"\nstructure = \"fixture\"\n",
    )
    .unwrap();
    println!("wrote {} candidates to {}", all.len(), dir.display());
}
