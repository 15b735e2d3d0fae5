#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const AMINO: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/triage77")
}

pub fn copy_dir(src: &Path, dest: &Path) {
    fs::create_dir_all(dest).unwrap();
    for entry in fs::read_dir(src).unwrap() {
        let path = entry.unwrap().path();
        let target = dest.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_dir(&path, &target);
        } else {
            fs::copy(&path, &target).unwrap();
        }
    }
}

/// Fresh copy of the 77-candidate bundle; returns the config path.
pub fn triage_copy(tmp: &Path) -> PathBuf {
    let dir = tmp.join("triage77");
    copy_dir(&fixture_dir(), &dir);
    dir.join("config.toml")
}

pub fn tpsfunnel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpsfunnel"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn random_seq(rng: &mut ChaCha8Rng, alphabet: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// Copy of `seq` with each residue substituted with probability `rate`.
pub fn mutate(rng: &mut ChaCha8Rng, seq: &[u8], rate: f64) -> Vec<u8> {
    seq.iter()
        .map(|&r| if rng.gen_bool(rate) { AMINO[rng.gen_range(0..AMINO.len())] } else { r })
        .collect()
}

/// Best global alignment by plain recursion over suffix pairs, memoised.
/// Optimises score, then matches, then fewest columns.
pub struct Oracle {
    pub match_score: i64,
    pub mismatch: i64,
    pub gap: i64,
}

impl Oracle {
    pub fn align(&self, a: &[u8], b: &[u8]) -> (i64, usize, usize) {
        let mut memo = HashMap::new();
        let (s, m, negc) = self.best(a, b, 0, 0, &mut memo);
        (s, m as usize, (-negc) as usize)
    }

    fn best(&self, a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut HashMap<(usize, usize), (i64, i64, i64)>) -> (i64, i64, i64) {
        if i == a.len() && j == b.len() {
            return (0, 0, 0);
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let mut options = Vec::with_capacity(3);
        if i < a.len() && j < b.len() {
            let (s, m, c) = self.best(a, b, i + 1, j + 1, memo);
            let same = a[i] == b[j];
            options.push((s + if same { self.match_score } else { self.mismatch }, m + same as i64, c - 1));
        }
        if i < a.len() {
            let (s, m, c) = self.best(a, b, i + 1, j, memo);
            options.push((s + self.gap, m, c - 1));
        }
        if j < b.len() {
            let (s, m, c) = self.best(a, b, i, j + 1, memo);
            options.push((s + self.gap, m, c - 1));
        }
        let v = options.into_iter().max().unwrap();
        memo.insert((i, j), v);
        v
    }
}
