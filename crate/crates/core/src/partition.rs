//! Homology-aware train/validation splitting.
//!
//! Sequences are joined by an edge when their identity reaches the
//! threshold; connected components (single linkage) become clusters, and
//! clusters are spread over `P` partitions by greedy size balancing. No
//! edge can cross partitions, so no cross-partition pair reaches the
//! threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{self, Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align_stats, identity_upper_bound, AlignError, AlignParams, AlignStats, IdentityDenominator, KmerIndex};
use crate::seqio::SequenceSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("identity threshold {0} not in (0, 1)")]
    InvalidThreshold(f64),
    #[error("need at least 2 partitions, got {0}")]
    TooFewPartitions(usize),
    #[error("no clusters to assign")]
    NoClusters,
    #[error("invalid partition selection: {0}")]
    InvalidPartitionSelection(String),
    #[error("assignment does not match sequence set: {0}")]
    AssignmentMismatch(String),
    #[error("malformed split manifest at line {line}: {message}")]
    ManifestFormat { line: usize, message: String },
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<io::Error> for PartitionError {
    fn from(e: io::Error) -> Self {
        PartitionError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityEdge {
    /// Node indices with `a < b`.
    pub a: usize,
    pub b: usize,
    pub identity: f64,
    pub matches: usize,
    pub denominator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityGraph {
    pub nodes: Vec<String>,
    /// Sorted by `(a, b)`.
    pub edges: Vec<IdentityEdge>,
    pub threshold: f64,
}

fn pair_identity(s: &AlignStats, la: usize, lb: usize, kind: IdentityDenominator) -> (f64, usize) {
    let den = match kind {
        IdentityDenominator::Columns => s.columns,
        IdentityDenominator::MinLength => la.min(lb),
    };
    (s.matches as f64 / den as f64, den)
}

fn check_threshold(threshold: f64) -> Result<(), PartitionError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(PartitionError::InvalidThreshold(threshold))
    }
}

/// Edges are pairs with identity >= `threshold`. With the prefilter on,
/// only pairs sharing enough k-mers are aligned; every reported edge is
/// still confirmed by exact alignment.
pub fn build_identity_graph(
    set: &SequenceSet,
    threshold: f64,
    p: &AlignParams,
) -> Result<IdentityGraph, PartitionError> {
    check_threshold(threshold)?;
    p.validate()?;
    let seqs = set.as_slice();
    let n = seqs.len();
    let index = (p.prefilter && p.min_shared_kmers > 0).then(|| {
        let bytes: Vec<&[u8]> = seqs.iter().map(|s| s.as_bytes()).collect();
        KmerIndex::build(&bytes, p.kmer_k)
    });
    let per_node: Vec<Vec<IdentityEdge>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let shared = index.as_ref().map(|idx| idx.shared_counts(seqs[i].as_bytes()));
            let mut edges = Vec::new();
            for j in i + 1..n {
                if let Some(counts) = &shared {
                    if (counts[j] as usize) < p.min_shared_kmers {
                        continue;
                    }
                }
                let (la, lb) = (seqs[i].len(), seqs[j].len());
                if identity_upper_bound(la, lb, p.denominator) < threshold {
                    continue;
                }
                let s = align_stats(seqs[i].as_bytes(), seqs[j].as_bytes(), p)?;
                let (identity, denominator) = pair_identity(&s, la, lb, p.denominator);
                if identity >= threshold {
                    edges.push(IdentityEdge {
                        a: i,
                        b: j,
                        identity,
                        matches: s.matches,
                        denominator,
                    });
                }
            }
            Ok(edges)
        })
        .collect::<Result<_, AlignError>>()?;
    Ok(IdentityGraph {
        nodes: seqs.iter().map(|s| s.id().to_string()).collect(),
        edges: per_node.into_iter().flatten().collect(),
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Smallest member id.
    pub id: String,
    /// Members in input order.
    pub members: Vec<String>,
}

/// Connected components, ordered by cluster id.
pub fn cluster(g: &IdentityGraph) -> Vec<Cluster> {
    let n = g.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for e in &g.edges {
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
    }
    let mut component = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let c = groups.len();
        let mut members = vec![start];
        component[start] = c;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = c;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|m| {
            let members: Vec<String> = m.iter().map(|&i| g.nodes[i].clone()).collect();
            let id = members.iter().min().cloned().unwrap_or_default();
            Cluster { id, members }
        })
        .collect();
    clusters.sort_by(|a, b| a.id.cmp(&b.id));
    clusters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    pub partitions: usize,
    /// Cluster id to partition index (1-based).
    pub cluster_partition: BTreeMap<String, usize>,
    /// Member count per partition, index 0 holding partition 1.
    pub loads: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub warnings: Vec<String>,
}

/// Share of all sequences above which a single cluster triggers a balance
/// warning.
pub const GIANT_CLUSTER_FRACTION: f64 = 0.8;

/// Largest clusters first (ties by cluster id), each to the currently
/// lightest partition (ties by lowest index).
pub fn assign_partitions(clusters: &[Cluster], partitions: usize) -> Result<PartitionAssignment, PartitionError> {
    if partitions < 2 {
        return Err(PartitionError::TooFewPartitions(partitions));
    }
    if clusters.is_empty() {
        return Err(PartitionError::NoClusters);
    }
    let mut order: Vec<&Cluster> = clusters.iter().collect();
    order.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then_with(|| a.id.cmp(&b.id)));
    let mut loads = vec![0usize; partitions];
    let mut cluster_partition = BTreeMap::new();
    for c in &order {
        let (lightest, _) = loads
            .iter()
            .enumerate()
            .min_by_key(|&(i, &load)| (load, i))
            .expect("partitions >= 2");
        loads[lightest] += c.members.len();
        cluster_partition.insert(c.id.clone(), lightest + 1);
    }
    let mut warnings = Vec::new();
    if clusters.len() < partitions {
        warnings.push(format!(
            "fewer clusters ({}) than partitions ({partitions}); some partitions are empty",
            clusters.len()
        ));
    }
    let total: usize = loads.iter().sum();
    let largest = order[0].members.len();
    if largest as f64 > GIANT_CLUSTER_FRACTION * total as f64 {
        warnings.push(format!(
            "cluster {} holds {largest} of {total} sequences; partitions cannot be balanced",
            order[0].id
        ));
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    Ok(PartitionAssignment {
        partitions,
        cluster_partition,
        loads,
        clusters: clusters.to_vec(),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRow {
    pub id: String,
    pub cluster: String,
    pub partition: usize,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub partitions: usize,
    pub train_partitions: BTreeSet<usize>,
    pub threshold: f64,
    pub rows: Vec<SplitRow>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn train_count(&self) -> usize {
        self.rows.iter().filter(|r| r.role == Role::Train).count()
    }

    pub fn validation_count(&self) -> usize {
        self.rows.len() - self.train_count()
    }

    pub fn train_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.train_count() as f64 / self.rows.len() as f64
        }
    }

    pub fn ids_with_role(&self, role: Role) -> impl Iterator<Item = &str> {
        self.rows.iter().filter(move |r| r.role == role).map(|r| r.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainSelection {
    /// These 1-based partition indices train; the rest validate.
    Explicit(BTreeSet<usize>),
    /// Hold out the single partition that brings the train fraction
    /// closest to the target (ties: lowest held-out index).
    Auto,
}

/// Train fractions further than this from the target draw a warning.
pub const RATIO_TOLERANCE: f64 = 0.1;

pub fn make_split(
    assignment: &PartitionAssignment,
    selection: &TrainSelection,
    target_fraction: f64,
    threshold: f64,
) -> Result<SplitAssignment, PartitionError> {
    let p = assignment.partitions;
    let total: usize = assignment.loads.iter().sum();
    let train: BTreeSet<usize> = match selection {
        TrainSelection::Explicit(set) => {
            if set.is_empty() || set.len() >= p || set.iter().any(|&i| i == 0 || i > p) {
                return Err(PartitionError::InvalidPartitionSelection(format!(
                    "train partitions {set:?} must be a proper non-empty subset of 1..={p}"
                )));
            }
            set.clone()
        }
        TrainSelection::Auto => {
            let held_out = (1..=p)
                .min_by(|&a, &b| {
                    let dev = |h: usize| ((total - assignment.loads[h - 1]) as f64 / total.max(1) as f64 - target_fraction).abs();
                    dev(a).total_cmp(&dev(b)).then(a.cmp(&b))
                })
                .expect("p >= 2");
            (1..=p).filter(|&i| i != held_out).collect()
        }
    };
    let mut rows = Vec::with_capacity(total);
    for c in &assignment.clusters {
        let partition = assignment.cluster_partition[&c.id];
        let role = if train.contains(&partition) { Role::Train } else { Role::Validation };
        for m in &c.members {
            rows.push(SplitRow {
                id: m.clone(),
                cluster: c.id.clone(),
                partition,
                role,
            });
        }
    }
    let mut warnings = assignment.warnings.clone();
    let mut split = SplitAssignment {
        partitions: p,
        train_partitions: train,
        threshold,
        rows,
        warnings: Vec::new(),
    };
    let ratio = split.train_fraction();
    if (ratio - target_fraction).abs() > RATIO_TOLERANCE {
        let w = format!("train fraction {ratio:.4} deviates from target {target_fraction} by more than {RATIO_TOLERANCE}");
        tracing::warn!("{w}");
        warnings.push(w);
    }
    split.warnings = warnings;
    tracing::info!(
        train = split.train_count(),
        validation = split.validation_count(),
        ratio,
        "split assigned"
    );
    Ok(split)
}

/// Reorders rows to follow `set` and checks that every sequence appears
/// exactly once.
pub fn order_like(split: &mut SplitAssignment, set: &SequenceSet) -> Result<(), PartitionError> {
    let mut by_id: HashMap<String, SplitRow> = HashMap::with_capacity(split.rows.len());
    for r in split.rows.drain(..) {
        if by_id.contains_key(&r.id) {
            return Err(PartitionError::AssignmentMismatch(format!("'{}' assigned twice", r.id)));
        }
        by_id.insert(r.id.clone(), r);
    }
    for s in set {
        let row = by_id
            .remove(s.id())
            .ok_or_else(|| PartitionError::AssignmentMismatch(format!("'{}' has no assignment", s.id())))?;
        split.rows.push(row);
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(PartitionError::AssignmentMismatch(format!("'{extra}' is not in the sequence set")));
    }
    Ok(())
}

/// Clusters at `threshold`, balances over `partitions` and assigns roles;
/// rows follow the input order.
pub fn split_dataset(
    set: &SequenceSet,
    threshold: f64,
    partitions: usize,
    selection: &TrainSelection,
    target_fraction: f64,
    p: &AlignParams,
) -> Result<SplitAssignment, PartitionError> {
    let graph = build_identity_graph(set, threshold, p)?;
    let clusters = cluster(&graph);
    let assignment = assign_partitions(&clusters, partitions)?;
    let mut split = make_split(&assignment, selection, target_fraction, threshold)?;
    order_like(&mut split, set)?;
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyMode {
    Exhaustive,
    /// Checks a uniform random sample of cross-partition pairs.
    Sampled { rate: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub a: String,
    pub b: String,
    pub partition_a: usize,
    pub partition_b: usize,
    pub identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub threshold: f64,
    pub mode: VerifyMode,
    pub cross_pairs: u64,
    pub pairs_checked: u64,
    pub violations: Vec<Violation>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Aligns cross-partition pairs (no prefilter) and reports those with
/// identity >= `threshold`.
pub fn verify_split(
    split: &SplitAssignment,
    set: &SequenceSet,
    threshold: f64,
    p: &AlignParams,
    mode: VerifyMode,
) -> Result<LeakageReport, PartitionError> {
    check_threshold(threshold)?;
    p.validate()?;
    let partition_of: HashMap<&str, usize> = split.rows.iter().map(|r| (r.id.as_str(), r.partition)).collect();
    if partition_of.len() != split.rows.len() || split.rows.len() != set.len() {
        return Err(PartitionError::AssignmentMismatch("row count differs from sequence count".into()));
    }
    let seqs = set.as_slice();
    let parts: Vec<usize> = seqs
        .iter()
        .map(|s| {
            partition_of
                .get(s.id())
                .copied()
                .ok_or_else(|| PartitionError::AssignmentMismatch(format!("'{}' has no assignment", s.id())))
        })
        .collect::<Result<_, _>>()?;
    let n = seqs.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if parts[i] != parts[j] {
                pairs.push((i, j));
            }
        }
    }
    let cross_pairs = pairs.len() as u64;
    if let VerifyMode::Sampled { rate, seed } = mode {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(PartitionError::InvalidPartitionSelection(format!("sampling rate {rate} not in (0, 1]")));
        }
        let keep = ((pairs.len() as f64 * rate).ceil() as usize).min(pairs.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = sample(&mut rng, pairs.len(), keep).into_vec();
        chosen.sort_unstable();
        pairs = chosen.into_iter().map(|k| pairs[k]).collect();
    }
    // exact alignment even when the configured params enable the prefilter
    let exact = p.clone().with_prefilter(false);
    let found: Vec<Option<Violation>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (la, lb) = (seqs[i].len(), seqs[j].len());
            if identity_upper_bound(la, lb, exact.denominator) < threshold {
                return Ok(None);
            }
            let s = align_stats(seqs[i].as_bytes(), seqs[j].as_bytes(), &exact)?;
            let (identity, _) = pair_identity(&s, la, lb, exact.denominator);
            Ok((identity >= threshold).then(|| Violation {
                a: seqs[i].id().to_string(),
                b: seqs[j].id().to_string(),
                partition_a: parts[i],
                partition_b: parts[j],
                identity,
            }))
        })
        .collect::<Result<_, AlignError>>()?;
    Ok(LeakageReport {
        threshold,
        mode,
        cross_pairs,
        pairs_checked: pairs.len() as u64,
        violations: found.into_iter().flatten().collect(),
    })
}

const MANIFEST_COLUMNS: &str = "id\tcluster\tpartition\trole";

/// Writes the split manifest: a `#` summary block of `key<TAB>value`
/// lines, then a header and one row per sequence.
///
/// ```text
/// # tpsfunnel split manifest
/// # sequences	200
/// # partitions	6
/// # train_partitions	1,2,3,4,5
/// # train	165
/// # validation	35
/// # train_fraction	0.8250
/// # threshold	0.3000
/// # config_sha256	<hex or ->
/// id	cluster	partition	role
/// seq1	seq1	3	train
/// ```
pub fn write_split_manifest<W: Write>(split: &SplitAssignment, config_digest: Option<&str>, mut out: W) -> io::Result<()> {
    let train: Vec<String> = split.train_partitions.iter().map(usize::to_string).collect();
    let mut s = String::new();
    let _ = writeln!(s, "# tpsfunnel split manifest");
    let _ = writeln!(s, "# sequences\t{}", split.rows.len());
    let _ = writeln!(s, "# partitions\t{}", split.partitions);
    let _ = writeln!(s, "# train_partitions\t{}", train.join(","));
    let _ = writeln!(s, "# train\t{}", split.train_count());
    let _ = writeln!(s, "# validation\t{}", split.validation_count());
    let _ = writeln!(s, "# train_fraction\t{:.4}", split.train_fraction());
    let _ = writeln!(s, "# threshold\t{:.4}", split.threshold);
    let _ = writeln!(s, "# config_sha256\t{}", config_digest.unwrap_or("-"));
    let _ = writeln!(s, "{MANIFEST_COLUMNS}");
    for r in &split.rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", r.id, r.cluster, r.partition, r.role.as_str());
    }
    out.write_all(s.as_bytes())
}

/// Reads a manifest written by [`write_split_manifest`]. Summary counts
/// are checked against the rows.
pub fn parse_split_manifest<R: Read>(mut input: R) -> Result<SplitAssignment, PartitionError> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| PartitionError::ManifestFormat {
            line: 0,
            message: e.to_string(),
        })?;
    let mut summary: HashMap<String, (usize, String)> = HashMap::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let bad = |message: String| PartitionError::ManifestFormat { line, message };
        let l = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(rest) = l.strip_prefix('#') {
            if let Some((k, v)) = rest.trim_start().split_once('\t') {
                summary.insert(k.to_string(), (line, v.to_string()));
            }
            continue;
        }
        if l.is_empty() {
            continue;
        }
        if !header_seen {
            if l != MANIFEST_COLUMNS {
                return Err(bad(format!("expected header '{MANIFEST_COLUMNS}'")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 4 || f[0].is_empty() || f[1].is_empty() {
            return Err(bad("expected 4 tab-separated fields".into()));
        }
        let partition: usize = f[2]
            .parse()
            .ok()
            .filter(|&p| p >= 1)
            .ok_or_else(|| bad(format!("bad partition '{}'", f[2])))?;
        let role = match f[3] {
            "train" => Role::Train,
            "validation" => Role::Validation,
            other => return Err(bad(format!("bad role '{other}'"))),
        };
        rows.push(SplitRow {
            id: f[0].to_string(),
            cluster: f[1].to_string(),
            partition,
            role,
        });
    }
    if !header_seen {
        return Err(PartitionError::ManifestFormat {
            line: 0,
            message: "missing header".into(),
        });
    }
    let get = |key: &str| -> Result<(usize, String), PartitionError> {
        summary.get(key).cloned().ok_or_else(|| PartitionError::ManifestFormat {
            line: 0,
            message: format!("missing summary key '{key}'"),
        })
    };
    let (pl, pv) = get("partitions")?;
    let partitions: usize = pv.parse().map_err(|_| PartitionError::ManifestFormat {
        line: pl,
        message: "bad partition count".into(),
    })?;
    let (tl, tv) = get("train_partitions")?;
    let train_partitions = tv
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(|_| PartitionError::ManifestFormat {
            line: tl,
            message: "bad train partition list".into(),
        })?;
    let (hl, hv) = get("threshold")?;
    let threshold: f64 = hv.parse().map_err(|_| PartitionError::ManifestFormat {
        line: hl,
        message: "bad threshold".into(),
    })?;
    let mut ids = BTreeSet::new();
    let mut cluster_partition: HashMap<&str, usize> = HashMap::new();
    for r in &rows {
        let consistent = r.partition <= partitions
            && (r.role == Role::Train) == train_partitions.contains(&r.partition)
            && *cluster_partition.entry(&r.cluster).or_insert(r.partition) == r.partition;
        if !consistent || !ids.insert(r.id.as_str()) {
            return Err(PartitionError::ManifestFormat {
                line: 0,
                message: format!("row for '{}' contradicts the manifest", r.id),
            });
        }
    }
    let split = SplitAssignment {
        partitions,
        train_partitions,
        threshold,
        rows,
        warnings: Vec::new(),
    };
    for (key, expect) in [("sequences", split.rows.len()), ("train", split.train_count())] {
        let (line, v) = get(key)?;
        if v.parse::<usize>().ok() != Some(expect) {
            return Err(PartitionError::ManifestFormat {
                line,
                message: format!("summary '{key}' does not match rows"),
            });
        }
    }
    Ok(split)
}
