//! Units of annotation for each protocol.
//!
//! Best-worst designs are built with a randomized round-robin: every item gets
//! an appearance quota (`⌊4B/N⌋` or `⌈4B/N⌉` for a budget of `B` tuples), and
//! each tuple is filled greedily with the candidate that adds the fewest
//! already-used pairs, preferring items with the most quota left. Items whose
//! remaining quota equals the number of tuples still to build are forced into
//! the current tuple, which keeps the greedy from ever reaching a dead end.
//! Several seeded attempts are made and the one with the fewest repeated
//! pairs is kept.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error("corpus has {n} items, a tuple needs {size}")]
    TooFewItems { n: usize, size: usize },
    #[error("invalid design configuration: {0}")]
    Config(String),
    #[error("subset size {subset} exceeds corpus size {n}")]
    SubsetTooLarge { subset: usize, n: usize },
    #[error("malformed design file: {0}")]
    Format(String),
}

/// Annotation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Rating scale, one text per prompt.
    Rs,
    /// Rating scale over four texts per prompt.
    RsT,
    /// Paired comparison.
    Pc,
    /// Best-worst scaling over 4-tuples.
    Bws,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Rs, Protocol::RsT, Protocol::Pc, Protocol::Bws];

    /// Number of texts shown per prompt (the last RS-T batch may be shorter).
    pub fn tuple_size(self) -> usize {
        match self {
            Protocol::Rs => 1,
            Protocol::RsT | Protocol::Bws => 4,
            Protocol::Pc => 2,
        }
    }

    pub fn is_comparative(self) -> bool {
        matches!(self, Protocol::Pc | Protocol::Bws)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Rs => "rs",
            Protocol::RsT => "rs_t",
            Protocol::Pc => "pc",
            Protocol::Bws => "bws",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rs" => Ok(Protocol::Rs),
            "rs_t" | "rst" => Ok(Protocol::RsT),
            "pc" => Ok(Protocol::Pc),
            "bws" => Ok(Protocol::Bws),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TupleDesignConfig {
    /// Budget multiplier: `round(k * N)` tuples are emitted.
    #[serde(rename = "k")]
    pub multiplier_k: f64,
    #[serde(default = "default_tuple_size")]
    pub tuple_size: usize,
    pub seed: u64,
    #[serde(default = "default_repair_attempts")]
    pub max_repair_attempts: usize,
}

fn default_tuple_size() -> usize {
    4
}

fn default_repair_attempts() -> usize {
    8
}

impl TupleDesignConfig {
    pub const PRESETS: [f64; 5] = [1.5, 2.0, 3.0, 6.0, 12.0];

    pub fn bws(multiplier_k: f64, seed: u64) -> Self {
        TupleDesignConfig {
            multiplier_k,
            tuple_size: 4,
            seed,
            max_repair_attempts: default_repair_attempts(),
        }
    }

    pub fn budget(&self, n: usize) -> usize {
        (self.multiplier_k * n as f64).round() as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignStats {
    pub appearance_counts: BTreeMap<String, usize>,
    /// `Σ max(0, c(p) − 1)` over unordered pairs `p` occurring `c(p)` times.
    pub repeated_pairs: usize,
}

impl DesignStats {
    pub fn compute(tuples: &[Vec<String>]) -> DesignStats {
        let mut appearance_counts = BTreeMap::new();
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for tuple in tuples {
            for (i, a) in tuple.iter().enumerate() {
                *appearance_counts.entry(a.clone()).or_insert(0) += 1;
                for b in &tuple[i + 1..] {
                    let key = if a < b {
                        (a.as_str(), b.as_str())
                    } else {
                        (b.as_str(), a.as_str())
                    };
                    *pairs.entry(key).or_insert(0) += 1;
                }
            }
        }
        let repeated_pairs = pairs.values().map(|c| c - 1).sum();
        DesignStats {
            appearance_counts,
            repeated_pairs,
        }
    }

    /// Max minus min appearance count.
    pub fn appearance_spread(&self) -> usize {
        let max = self.appearance_counts.values().max().copied().unwrap_or(0);
        let min = self.appearance_counts.values().min().copied().unwrap_or(0);
        max - min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleSet {
    pub protocol: Protocol,
    pub seed: u64,
    pub tuples: Vec<Vec<String>>,
    pub design_stats: DesignStats,
}

#[derive(Serialize, Deserialize)]
struct TupleSetRecord {
    protocol: Protocol,
    seed: u64,
    tuples: Vec<Vec<String>>,
}

impl TupleSet {
    pub fn new(protocol: Protocol, seed: u64, tuples: Vec<Vec<String>>) -> TupleSet {
        let design_stats = DesignStats::compute(&tuples);
        TupleSet {
            protocol,
            seed,
            tuples,
            design_stats,
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Single-line JSON `{protocol, seed, tuples}`.
    pub fn to_jsonl(&self) -> String {
        let record = TupleSetRecord {
            protocol: self.protocol,
            seed: self.seed,
            tuples: self.tuples.clone(),
        };
        let mut line = serde_json::to_string(&record).expect("tuple sets always serialize");
        line.push('\n');
        line
    }

    pub fn from_jsonl(content: &str) -> Result<TupleSet, DesignError> {
        let mut lines = content.lines().filter(|l| !l.trim().is_empty());
        let line = lines
            .next()
            .ok_or_else(|| DesignError::Format("empty design file".into()))?;
        if lines.next().is_some() {
            return Err(DesignError::Format("expected a single design record".into()));
        }
        let record: TupleSetRecord =
            serde_json::from_str(line).map_err(|e| DesignError::Format(e.to_string()))?;
        for tuple in &record.tuples {
            for (i, a) in tuple.iter().enumerate() {
                if tuple[i + 1..].contains(a) {
                    return Err(DesignError::Format(format!("id `{a}` repeated within a tuple")));
                }
            }
        }
        Ok(TupleSet::new(record.protocol, record.seed, record.tuples))
    }
}

/// Dense upper-triangular pair counter; falls back to a hash map for huge corpora.
enum PairCounts {
    Dense { n: usize, counts: Vec<u32> },
    Sparse(HashMap<(u32, u32), u32>),
}

const DENSE_LIMIT: usize = 8192;

impl PairCounts {
    fn new(n: usize) -> PairCounts {
        if n <= DENSE_LIMIT {
            PairCounts::Dense {
                n,
                counts: vec![0; n * (n - 1) / 2],
            }
        } else {
            PairCounts::Sparse(HashMap::new())
        }
    }

    fn index(n: usize, a: usize, b: usize) -> usize {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        // row offset of i in the packed upper triangle
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    fn get(&self, a: usize, b: usize) -> u32 {
        match self {
            PairCounts::Dense { n, counts } => counts[Self::index(*n, a, b)],
            PairCounts::Sparse(map) => {
                let key = (a.min(b) as u32, a.max(b) as u32);
                map.get(&key).copied().unwrap_or(0)
            }
        }
    }

    fn bump(&mut self, a: usize, b: usize) {
        match self {
            PairCounts::Dense { n, counts } => counts[Self::index(*n, a, b)] += 1,
            PairCounts::Sparse(map) => {
                *map.entry((a.min(b) as u32, a.max(b) as u32)).or_insert(0) += 1;
            }
        }
    }

    fn drop_one(&mut self, a: usize, b: usize) {
        match self {
            PairCounts::Dense { n, counts } => counts[Self::index(*n, a, b)] -= 1,
            PairCounts::Sparse(map) => {
                let key = (a.min(b) as u32, a.max(b) as u32);
                if let Some(c) = map.get_mut(&key) {
                    *c -= 1;
                    if *c == 0 {
                        map.remove(&key);
                    }
                }
            }
        }
    }
}

/// Mixes a seed with a stream index (splitmix64 finalizer).
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn design_bws_tuples(corpus: &Corpus, cfg: &TupleDesignConfig) -> Result<TupleSet, DesignError> {
    if cfg.tuple_size != 4 {
        return Err(DesignError::Config(format!(
            "best-worst designs use 4-tuples, got tuple_size = {}",
            cfg.tuple_size
        )));
    }
    if !(cfg.multiplier_k > 0.0 && cfg.multiplier_k.is_finite()) {
        return Err(DesignError::Config(format!(
            "multiplier k must be positive, got {}",
            cfg.multiplier_k
        )));
    }
    if cfg.max_repair_attempts == 0 {
        return Err(DesignError::Config("max_repair_attempts must be ≥ 1".into()));
    }
    let n = corpus.len();
    if n < 4 {
        return Err(DesignError::TooFewItems { n, size: 4 });
    }
    let budget = cfg.budget(n);
    let ids = corpus.ids();

    let mut best: Option<(usize, Vec<[usize; 4]>)> = None;
    for attempt in 0..cfg.max_repair_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, attempt as u64));
        let (repeats, tuples) = greedy_round_robin(n, budget, &mut rng);
        let better = best.as_ref().is_none_or(|(r, _)| repeats < *r);
        if better {
            best = Some((repeats, tuples));
        }
        if repeats == 0 {
            break;
        }
    }
    let (repeats, tuples) = best.expect("at least one attempt runs");
    if repeats > 0 {
        log::warn!(
            "best-worst design over {n} items with {budget} tuples repeats {repeats} pairs \
             (pair demand {} vs {} available pairs)",
            budget * 6,
            n * (n - 1) / 2
        );
    }
    let tuples: Vec<Vec<String>> = tuples
        .into_iter()
        .map(|t| t.iter().map(|&i| ids[i].clone()).collect())
        .collect();
    let set = TupleSet::new(Protocol::Bws, cfg.seed, tuples);
    debug_assert_eq!(set.design_stats.repeated_pairs, repeats);
    Ok(set)
}

fn greedy_round_robin(n: usize, budget: usize, rng: &mut ChaCha8Rng) -> (usize, Vec<[usize; 4]>) {
    let slots = budget * 4;
    let mut remaining = vec![slots / n; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &i in order.iter().take(slots % n) {
        remaining[i] += 1;
    }

    let mut pairs = PairCounts::new(n);
    let mut repeats = 0usize;
    let mut tuples = Vec::with_capacity(budget);
    let mut ties = Vec::new();

    for built in 0..budget {
        let tuples_left = budget - built;
        let mut chosen: [usize; 4] = [usize::MAX; 4];
        let mut filled = 0;

        // Items that must appear in every remaining tuple.
        let mut forced: Vec<usize> = (0..n).filter(|&i| remaining[i] == tuples_left).collect();
        forced.shuffle(rng);
        for i in forced {
            chosen[filled] = i;
            filled += 1;
        }

        while filled < 4 {
            // key: (added pair reuse, -remaining quota); smaller is better
            let mut best_key = (u32::MAX, i64::MAX);
            ties.clear();
            for (cand, &quota) in remaining.iter().enumerate() {
                if quota == 0 || chosen[..filled].contains(&cand) {
                    continue;
                }
                let reuse: u32 = chosen[..filled].iter().map(|&c| pairs.get(cand, c)).sum();
                let key = (reuse, -(quota as i64));
                if key < best_key {
                    best_key = key;
                    ties.clear();
                    ties.push(cand);
                } else if key == best_key {
                    ties.push(cand);
                }
            }
            let pick = ties[rng.random_range(0..ties.len())];
            chosen[filled] = pick;
            filled += 1;
        }

        for a in 0..4 {
            remaining[chosen[a]] -= 1;
            for b in a + 1..4 {
                if pairs.get(chosen[a], chosen[b]) > 0 {
                    repeats += 1;
                }
                pairs.bump(chosen[a], chosen[b]);
            }
        }
        tuples.push(chosen);
    }
    if repeats > 0 {
        repeats = repair_swaps(&mut tuples, &mut pairs, repeats, rng);
    }
    (repeats, tuples)
}

fn join_delta(pairs: &PairCounts, item: usize, others: &[usize]) -> i64 {
    others.iter().filter(|&&o| pairs.get(item, o) >= 1).count() as i64
}

/// Hill-climbs on item swaps between tuples. A swap keeps every item's
/// appearance count, so only pair reuse changes.
fn repair_swaps(
    tuples: &mut [[usize; 4]],
    pairs: &mut PairCounts,
    mut repeats: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let b = tuples.len();
    if b < 2 {
        return repeats;
    }
    let max_steps = (b * 40).clamp(2_000, 100_000);
    for _ in 0..max_steps {
        if repeats == 0 {
            break;
        }
        let t1 = rng.random_range(0..b);
        let Some(p) = (0..4).find(|&p| {
            let x = tuples[t1][p];
            tuples[t1].iter().any(|&o| o != x && pairs.get(x, o) >= 2)
        }) else {
            continue;
        };
        let t2 = rng.random_range(0..b);
        let q = rng.random_range(0..4);
        if t2 == t1 {
            continue;
        }
        let x = tuples[t1][p];
        let y = tuples[t2][q];
        if tuples[t1].contains(&y) || tuples[t2].contains(&x) {
            continue;
        }
        let rest1: Vec<usize> = tuples[t1].iter().copied().filter(|&o| o != x).collect();
        let rest2: Vec<usize> = tuples[t2].iter().copied().filter(|&o| o != y).collect();

        for &o in &rest1 {
            pairs.drop_one(x, o);
        }
        for &o in &rest2 {
            pairs.drop_one(y, o);
        }
        // a dropped pair whose count is still ≥ 1 was a repeat
        let before = join_delta(pairs, x, &rest1) + join_delta(pairs, y, &rest2);
        let after = join_delta(pairs, y, &rest1) + join_delta(pairs, x, &rest2);
        let delta = after - before;
        if delta < 0 || (delta == 0 && rng.random_bool(0.1)) {
            for &o in &rest1 {
                pairs.bump(y, o);
            }
            for &o in &rest2 {
                pairs.bump(x, o);
            }
            tuples[t1][p] = y;
            tuples[t2][q] = x;
            repeats = (repeats as i64 + delta) as usize;
        } else {
            for &o in &rest1 {
                pairs.bump(x, o);
            }
            for &o in &rest2 {
                pairs.bump(y, o);
            }
        }
    }
    repeats
}

/// All unordered pairs over the corpus (or a seeded random subset), each
/// emitted once with a randomized left/right order.
pub fn design_pc_pairs(
    corpus: &Corpus,
    subset_size: Option<usize>,
    seed: u64,
) -> Result<TupleSet, DesignError> {
    let n = corpus.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = match subset_size {
        Some(m) if m > n => return Err(DesignError::SubsetTooLarge { subset: m, n }),
        Some(m) => rand::seq::index::sample(&mut rng, n, m)
            .into_iter()
            .map(|i| corpus.instances[i].id.clone())
            .collect(),
        None => corpus.ids(),
    };
    if ids.len() < 2 {
        return Err(DesignError::TooFewItems {
            n: ids.len(),
            size: 2,
        });
    }
    let mut tuples = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            if rng.random_bool(0.5) {
                tuples.push(vec![b.clone(), a.clone()]);
            } else {
                tuples.push(vec![a.clone(), b.clone()]);
            }
        }
    }
    Ok(TupleSet::new(Protocol::Pc, seed, tuples))
}

/// Singletons in corpus order, or (when `batched`) a seeded shuffle cut into
/// disjoint batches of four; the last batch may be shorter.
pub fn design_rs_units(corpus: &Corpus, batched: bool, seed: u64) -> Result<TupleSet, DesignError> {
    if corpus.is_empty() {
        return Err(DesignError::TooFewItems { n: 0, size: 1 });
    }
    if !batched {
        let tuples = corpus.ids().into_iter().map(|id| vec![id]).collect();
        return Ok(TupleSet::new(Protocol::Rs, seed, tuples));
    }
    let mut ids = corpus.ids();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tuples = ids.chunks(4).map(|c| c.to_vec()).collect();
    Ok(TupleSet::new(Protocol::RsT, seed, tuples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Split, TextInstance};
    use std::collections::BTreeSet;

    pub(crate) fn synthetic(n: usize) -> Corpus {
        let instances = (0..n)
            .map(|i| TextInstance {
                id: format!("t{i}"),
                text: format!("text {i}"),
                dimension: "joy".into(),
                gold_score: None,
            })
            .collect();
        Corpus::new("joy", Split::Train, instances).unwrap()
    }

    #[test]
    fn packed_index_is_a_bijection() {
        let n = 9;
        let mut seen = BTreeSet::new();
        for a in 0..n {
            for b in a + 1..n {
                let idx = PairCounts::index(n, a, b);
                assert_eq!(idx, PairCounts::index(n, b, a));
                assert!(seen.insert(idx));
            }
        }
        assert_eq!(seen.len(), n * (n - 1) / 2);
        assert_eq!(*seen.iter().max().unwrap(), n * (n - 1) / 2 - 1);
    }

    #[test]
    fn n4_forces_identical_quadruples() {
        let c = synthetic(4);
        let set = design_bws_tuples(&c, &TupleDesignConfig::bws(1.0, 3)).unwrap();
        assert_eq!(set.len(), 4);
        for t in &set.tuples {
            let s: BTreeSet<_> = t.iter().collect();
            assert_eq!(s.len(), 4);
        }
        assert_eq!(set.design_stats.repeated_pairs, 18);
    }

    #[test]
    fn n8_k2_balanced_with_minimal_reported_repeats() {
        // 16 tuples need 96 pair slots but only 28 distinct pairs exist.
        let c = synthetic(8);
        let set = design_bws_tuples(&c, &TupleDesignConfig::bws(2.0, 11)).unwrap();
        assert_eq!(set.len(), 16);
        assert!(set.design_stats.appearance_counts.values().all(|&c| c == 8));
        assert_eq!(set.design_stats.repeated_pairs, 96 - 28);
    }

    #[test]
    fn too_small_corpus() {
        assert_eq!(
            design_bws_tuples(&synthetic(3), &TupleDesignConfig::bws(2.0, 1)),
            Err(DesignError::TooFewItems { n: 3, size: 4 })
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let c = synthetic(37);
        let cfg = TupleDesignConfig::bws(2.0, 99);
        let a = design_bws_tuples(&c, &cfg).unwrap();
        let b = design_bws_tuples(&c, &cfg).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let other = design_bws_tuples(&c, &TupleDesignConfig::bws(2.0, 100)).unwrap();
        assert_ne!(a.tuples, other.tuples);
    }

    #[test]
    fn pc_pair_counts() {
        let c = synthetic(5);
        let set = design_pc_pairs(&c, None, 7).unwrap();
        assert_eq!(set.len(), 10);
        let got: BTreeSet<(String, String)> = set
            .tuples
            .iter()
            .map(|t| {
                let (a, b) = (t[0].clone(), t[1].clone());
                if a < b { (a, b) } else { (b, a) }
            })
            .collect();
        let mut expected = BTreeSet::new();
        for i in 0..5 {
            for j in i + 1..5 {
                let (a, b) = (format!("t{i}"), format!("t{j}"));
                expected.insert(if a < b { (a, b) } else { (b, a) });
            }
        }
        assert_eq!(got, expected);
        assert_eq!(set.design_stats.repeated_pairs, 0);

        assert_eq!(design_pc_pairs(&synthetic(2), None, 1).unwrap().len(), 1);
        let big = design_pc_pairs(&synthetic(250), Some(200), 1).unwrap();
        assert_eq!(big.len(), 19_900);
        assert_eq!(big.design_stats.appearance_counts.len(), 200);
    }

    #[test]
    fn pc_positions_are_mixed() {
        let set = design_pc_pairs(&synthetic(30), None, 5).unwrap();
        let swapped = set
            .tuples
            .iter()
            .filter(|t| t[0][1..].parse::<u32>().unwrap() > t[1][1..].parse::<u32>().unwrap())
            .count();
        assert!(swapped > 100 && swapped < 335, "{swapped}");
    }

    #[test]
    fn pc_subset_too_large() {
        assert_eq!(
            design_pc_pairs(&synthetic(5), Some(6), 1),
            Err(DesignError::SubsetTooLarge { subset: 6, n: 5 })
        );
    }

    #[test]
    fn rs_units() {
        let single = design_rs_units(&synthetic(3), false, 1).unwrap();
        assert_eq!(single.tuples, vec![vec!["t0"], vec!["t1"], vec!["t2"]]);
        assert_eq!(single.protocol, Protocol::Rs);

        let batched = design_rs_units(&synthetic(7), true, 1).unwrap();
        let sizes: Vec<usize> = batched.tuples.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3]);
        let mut all: Vec<String> = batched.tuples.concat();
        all.sort();
        let mut ids = synthetic(7).ids();
        ids.sort();
        assert_eq!(all, ids);

        assert_eq!(design_rs_units(&synthetic(1616), true, 1).unwrap().len(), 404);
    }

    #[test]
    fn jsonl_round_trip() {
        let set = design_bws_tuples(&synthetic(12), &TupleDesignConfig::bws(1.5, 4)).unwrap();
        let back = TupleSet::from_jsonl(&set.to_jsonl()).unwrap();
        assert_eq!(back, set);
        assert!(TupleSet::from_jsonl(r#"{"protocol":"bws","seed":1,"tuples":[["a","a"]]}"#).is_err());
    }
}
