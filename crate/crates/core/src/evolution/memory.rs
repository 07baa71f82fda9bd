//! Failure traces, sample distance, k-medoids compression and the bounded
//! LRU experience memory.

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvolutionError;
use crate::coggnn::{ForwardTrace, GnnError};
use crate::explain::extract_evidence_path;
use crate::graph::NodeKind;
use crate::linalg::{l2_distance, SparseVec};
use crate::records::{self, RecordError};

pub const MEMORY_HEADER: &str = "EVOMAIL-MEMORY v1";
const MEMORY_PREFIX: &str = "EVOMAIL-MEMORY ";

/// Fixed-size digest of a scored sample's reasoning.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceSummary {
    pub path_kinds: Vec<NodeKind>,
    pub confidences: Vec<f64>,
    /// Final-layer attention row, in neighbor id order.
    pub attention: Vec<f64>,
}

pub fn extract_failure_trace(
    v: usize,
    trace: &ForwardTrace,
    max_depth: usize,
    min_confidence: f64,
) -> Result<TraceSummary, GnnError> {
    let path = extract_evidence_path(v, trace, max_depth, min_confidence)?;
    let node = trace.node(v);
    Ok(TraceSummary {
        path_kinds: path.steps.iter().map(|s| s.kind).collect(),
        confidences: path.steps.iter().map(|s| s.confidence).collect(),
        attention: node.alpha.last().cloned().unwrap_or_default(),
    })
}

/// ||x1 - x2|| + alpha·||a1 - a2|| over zero-padded attention summaries; the
/// trace term is 0 when either side has no trace.
pub fn sample_distance(
    x1: &[f64],
    t1: Option<&TraceSummary>,
    x2: &[f64],
    t2: Option<&TraceSummary>,
    alpha: f64,
) -> f64 {
    let trace = match (t1, t2) {
        (Some(a), Some(b)) => l2_distance(&a.attention, &b.attention),
        _ => 0.0,
    };
    let d = l2_distance(x1, x2);
    if alpha == 0.0 {
        d
    } else {
        d + alpha * trace
    }
}

/// Sum over points of the distance to the nearest medoid.
pub fn kmedoids_objective(n: usize, medoids: &[usize], dist: &impl Fn(usize, usize) -> f64) -> f64 {
    (0..n)
        .map(|i| medoids.iter().map(|&m| dist(i, m)).fold(f64::INFINITY, f64::min))
        .sum()
}

const SWAP_BUDGET: usize = 100;
/// Instances with at most this many k-subsets are solved by enumeration.
const EXACT_SUBSETS: u64 = 2000;

fn subsets(n: usize, k: usize) -> u64 {
    let mut c: u64 = 1;
    for i in 0..k as u64 {
        c = c * (n as u64 - i) / (i + 1);
        if c > EXACT_SUBSETS {
            return c;
        }
    }
    c
}

/// Lexicographically first k-subset with the smallest objective.
fn exact_medoids(n: usize, k: usize, dist: &impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut cur: Vec<usize> = (0..k).collect();
    let mut best = (kmedoids_objective(n, &cur, dist), cur.clone());
    loop {
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return best.1;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
        let c = kmedoids_objective(n, &cur, dist);
        if c < best.0 - 1e-12 {
            best = (c, cur.clone());
        }
    }
}

/// PAM: seeded farthest-first initialization, then best-improvement swaps
/// until none improves or the budget runs out. Small instances are solved
/// exactly instead, since swaps can stall in a local optimum. Returns medoid
/// indices in ascending order.
pub fn kmedoids_compress(n: usize, k: usize, dist: impl Fn(usize, usize) -> f64, rng_seed: u64) -> Vec<usize> {
    if k == 0 || n == 0 {
        return Vec::new();
    }
    if k >= n {
        return (0..n).collect();
    }
    if subsets(n, k) <= EXACT_SUBSETS {
        return exact_medoids(n, k, &dist);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut medoids = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist(i, medoids[0])).collect();
    while medoids.len() < k {
        let mut best = None;
        for i in 0..n {
            if medoids.contains(&i) {
                continue;
            }
            if best.is_none_or(|b: usize| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let m = best.expect("k < n leaves a candidate");
        medoids.push(m);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist(i, m));
        }
    }
    let mut cost = kmedoids_objective(n, &medoids, &dist);
    for _ in 0..SWAP_BUDGET {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for o in 0..n {
                if medoids.contains(&o) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = o;
                let c = kmedoids_objective(n, &trial, &dist);
                if c < cost - 1e-12 && best.is_none_or(|(bc, _, _)| c < bc) {
                    best = Some((c, slot, o));
                }
            }
        }
        match best {
            Some((c, slot, o)) => {
                medoids[slot] = o;
                cost = c;
            }
            None => break,
        }
    }
    medoids.sort_unstable();
    medoids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: u64,
    pub features: Vec<f64>,
    pub cached_score: f64,
    pub trace: TraceSummary,
    /// Document id of the seed; the entry borrows that node's adjacency.
    pub anchor_key: Option<String>,
    pub desc: String,
    pub inserted_at: u64,
    pub last_used: u64,
}

/// An entry before it gets an id and timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEntry {
    pub features: Vec<f64>,
    pub cached_score: f64,
    pub trace: TraceSummary,
    pub anchor_key: Option<String>,
    pub desc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceMemory {
    capacity: usize,
    next_id: u64,
    entries: Vec<MemoryEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum MemoryRecord {
    Meta { capacity: usize, next_id: u64 },
    Entry(MemoryEntry),
}

impl ExperienceMemory {
    pub fn new(capacity: usize) -> Self {
        ExperienceMemory {
            capacity,
            next_id: 0,
            entries: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Free slots, M_max - |M|.
    pub fn free(&self) -> usize {
        self.capacity.saturating_sub(self.entries.len())
    }

    /// Inserts with `inserted_at = last_used = iteration`, then evicts down to
    /// capacity. Returns the ids given to the new entries.
    pub fn insert(&mut self, new: Vec<NewEntry>, iteration: u64) -> Vec<u64> {
        let mut ids = Vec::with_capacity(new.len());
        for e in new {
            let id = self.next_id;
            self.next_id += 1;
            ids.push(id);
            self.entries.push(MemoryEntry {
                id,
                features: e.features,
                cached_score: e.cached_score,
                trace: e.trace,
                anchor_key: e.anchor_key,
                desc: e.desc,
                inserted_at: iteration,
                last_used: iteration,
            });
        }
        self.evict();
        ids
    }

    /// Marks the entry as read at `iteration`.
    pub fn touch(&mut self, id: u64, iteration: u64) -> Option<&MemoryEntry> {
        let e = self.entries.iter_mut().find(|e| e.id == id)?;
        e.last_used = e.last_used.max(iteration);
        Some(e)
    }

    pub fn touch_all(&mut self, iteration: u64) {
        for e in &mut self.entries {
            e.last_used = e.last_used.max(iteration);
        }
    }

    /// Least recently used first, then oldest insertion, then lowest id.
    fn evict(&mut self) {
        while self.entries.len() > self.capacity {
            let victim = (0..self.entries.len())
                .min_by_key(|&i| {
                    let e = &self.entries[i];
                    (e.last_used, e.inserted_at, e.id)
                })
                .expect("nonempty");
            self.entries.remove(victim);
        }
    }

    pub fn to_record_string(&self) -> String {
        let meta = MemoryRecord::Meta {
            capacity: self.capacity,
            next_id: self.next_id,
        };
        records::to_record_string(
            MEMORY_HEADER,
            std::iter::once(meta).chain(self.entries.iter().cloned().map(MemoryRecord::Entry)),
        )
    }

    pub fn parse(reader: impl BufRead) -> Result<Self, EvolutionError> {
        let recs: Vec<MemoryRecord> = records::parse_records(reader, MEMORY_HEADER).map_err(map_record_error)?;
        let mut it = recs.into_iter();
        let Some(MemoryRecord::Meta { capacity, next_id }) = it.next() else {
            return Err(EvolutionError::CorruptFile("missing meta record".into()));
        };
        let mut entries = Vec::new();
        for r in it {
            match r {
                MemoryRecord::Entry(e) => {
                    if e.id >= next_id || e.last_used < e.inserted_at {
                        return Err(EvolutionError::CorruptFile(format!("inconsistent entry {}", e.id)));
                    }
                    entries.push(e)
                }
                MemoryRecord::Meta { .. } => return Err(EvolutionError::CorruptFile("duplicate meta record".into())),
            }
        }
        if entries.len() > capacity {
            return Err(EvolutionError::CorruptFile("more entries than capacity".into()));
        }
        Ok(ExperienceMemory {
            capacity,
            next_id,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EvolutionError> {
        records::write_atomic(path, self.to_record_string().as_bytes()).map_err(|e| EvolutionError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EvolutionError> {
        let f = std::fs::File::open(path).map_err(|e| EvolutionError::Io(e.to_string()))?;
        Self::parse(std::io::BufReader::new(f))
    }

    /// Features as a sparse vector, for scoring the entry as a variant.
    pub fn sparse_features(entry: &MemoryEntry) -> SparseVec {
        SparseVec::from_dense(&entry.features)
    }
}

fn map_record_error(e: RecordError) -> EvolutionError {
    match e {
        RecordError::Header { found, .. } if found.starts_with(MEMORY_PREFIX) => {
            EvolutionError::VersionMismatch { found }
        }
        RecordError::Header { found, .. } => EvolutionError::CorruptFile(format!("bad header {found:?}")),
        RecordError::Line { line, reason } => EvolutionError::CorruptFile(format!("line {line}: {reason}")),
        RecordError::Io(e) => EvolutionError::Io(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(tag: f64) -> NewEntry {
        NewEntry {
            features: vec![tag],
            cached_score: 0.3,
            trace: TraceSummary::default(),
            anchor_key: None,
            desc: format!("e{tag}"),
        }
    }

    fn tags(m: &ExperienceMemory) -> Vec<f64> {
        m.entries().iter().map(|e| e.features[0]).collect()
    }

    #[test]
    fn lru_drops_oldest() {
        let mut m = ExperienceMemory::new(2);
        m.insert(vec![entry(1.0)], 1);
        m.insert(vec![entry(2.0)], 2);
        m.insert(vec![entry(3.0)], 3);
        assert_eq!(tags(&m), vec![2.0, 3.0]);
    }

    #[test]
    fn read_refreshes_recency() {
        let mut m = ExperienceMemory::new(2);
        let a = m.insert(vec![entry(1.0)], 1)[0];
        m.insert(vec![entry(2.0)], 2);
        m.touch(a, 3);
        m.insert(vec![entry(3.0)], 4);
        assert_eq!(tags(&m), vec![1.0, 3.0]);
    }

    #[test]
    fn zero_capacity_stays_empty() {
        let mut m = ExperienceMemory::new(0);
        m.insert(vec![entry(1.0), entry(2.0)], 1);
        assert!(m.is_empty());
    }

    #[test]
    fn medoid_on_a_line() {
        let pts = [0.0f64, 1.0, 10.0];
        let d = |i: usize, j: usize| (pts[i] - pts[j]).abs();
        for seed in 0..5 {
            assert_eq!(kmedoids_compress(3, 1, d, seed), vec![1]);
        }
        assert_eq!(kmedoids_compress(3, 3, d, 0), vec![0, 1, 2]);
        assert!(kmedoids_compress(3, 0, d, 0).is_empty());
    }

    #[test]
    fn pam_on_large_sets_improves_on_its_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..100.0)).collect();
        let d = |i: usize, j: usize| (pts[i] - pts[j]).abs();
        let m = kmedoids_compress(60, 5, d, 1);
        assert_eq!(m.len(), 5);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
        assert!(kmedoids_objective(60, &m, &d) <= kmedoids_objective(60, &[0, 1, 2, 3, 4], &d));
    }

    #[test]
    fn distance_identity_and_alpha_zero() {
        let t = TraceSummary {
            path_kinds: vec![NodeKind::Email],
            confidences: vec![0.5],
            attention: vec![0.5, 0.5],
        };
        let u = TraceSummary {
            attention: vec![1.0],
            ..t.clone()
        };
        assert_eq!(sample_distance(&[1.0, 2.0], Some(&t), &[1.0, 2.0], Some(&t), 1.0), 0.0);
        assert_eq!(sample_distance(&[0.0, 0.0], Some(&t), &[3.0, 4.0], Some(&u), 0.0), 5.0);
        let ab = sample_distance(&[0.0, 1.0], Some(&t), &[3.0, 4.0], Some(&u), 0.7);
        let ba = sample_distance(&[3.0, 4.0], Some(&u), &[0.0, 1.0], Some(&t), 0.7);
        assert_eq!(ab, ba);
        assert_eq!(sample_distance(&[0.0], None, &[0.0], Some(&u), 1.0), 0.0);
    }

    #[test]
    fn persistence_round_trip_and_version() {
        let mut m = ExperienceMemory::new(3);
        m.insert(vec![entry(0.1), entry(1.0 / 3.0)], 2);
        m.touch(0, 5);
        let text = m.to_record_string();
        let back = ExperienceMemory::parse(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        let old = text.replacen("EVOMAIL-MEMORY v1", "EVOMAIL-MEMORY v0", 1);
        assert!(matches!(
            ExperienceMemory::parse(old.as_bytes()),
            Err(EvolutionError::VersionMismatch { .. })
        ));
        let cut = &text[..text.len() - 10];
        assert!(matches!(
            ExperienceMemory::parse(cut.as_bytes()),
            Err(EvolutionError::CorruptFile(_))
        ));
    }
}
