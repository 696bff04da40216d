//! Annotation quality: correlation against gold scores and split-half reliability.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::mix_seed;
use crate::scoring::{count_raw, JudgedTuple, ScoreTable, ScoringError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired values, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: a vector has zero variance")]
    ZeroVariance,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("no split produced a defined correlation")]
    NoReliability,
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(EvalError::TooShort(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Rank correlation (Pearson over average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&ranks(x), &ranks(y))
}

/// Pearson between a table's normalized scores and reference scores, over ids defined in both.
pub fn pearson_vs_reference(table: &ScoreTable, reference: &BTreeMap<String, f64>) -> Result<(f64, usize), EvalError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter_map(|r| Some((r.normalized_score?, *reference.get(&r.id)?)))
        .unzip();
    let n = xs.len();
    Ok((pearson(&xs, &ys)?, n))
}

/// How judged annotations are assigned to the two halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShrBinning {
    /// Per-tuple annotation split when every tuple was judged at least twice, else tuple split.
    Auto,
    /// Partition whole tuples into two halves (`⌈n/2⌉` and `⌊n/2⌋`).
    Tuples,
    /// Split the repeated annotations of each tuple between the halves.
    Annotations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrResult {
    pub mean: f64,
    pub per_iteration: Vec<f64>,
    pub binning: ShrBinning,
    /// Iterations whose correlation was undefined.
    pub skipped_iterations: usize,
    /// Item-iterations dropped because an item was scored in only one half.
    pub dropped_items: usize,
}

fn resolve_binning(judged: &[JudgedTuple], binning: ShrBinning) -> ShrBinning {
    match binning {
        ShrBinning::Auto => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for j in judged {
                *counts.entry(j.tuple_index).or_default() += 1;
            }
            if !counts.is_empty() && counts.values().all(|&c| c >= 2) {
                ShrBinning::Annotations
            } else {
                ShrBinning::Tuples
            }
        }
        other => other,
    }
}

/// One random split of the judged annotations into two halves.
pub fn split_once(
    judged: &[JudgedTuple],
    binning: ShrBinning,
    rng: &mut ChaCha8Rng,
) -> (Vec<JudgedTuple>, Vec<JudgedTuple>) {
    let mut groups: BTreeMap<usize, Vec<&JudgedTuple>> = BTreeMap::new();
    for j in judged {
        groups.entry(j.tuple_index).or_default().push(j);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    match resolve_binning(judged, binning) {
        ShrBinning::Annotations => {
            for (_, mut members) in groups {
                members.shuffle(rng);
                let cut = members.len().div_ceil(2);
                a.extend(members[..cut].iter().map(|j| (*j).clone()));
                b.extend(members[cut..].iter().map(|j| (*j).clone()));
            }
        }
        _ => {
            let mut keys: Vec<usize> = groups.keys().copied().collect();
            keys.shuffle(rng);
            let cut = keys.len().div_ceil(2);
            for (pos, key) in keys.iter().enumerate() {
                let target = if pos < cut { &mut a } else { &mut b };
                target.extend(groups[key].iter().map(|j| (*j).clone()));
            }
        }
    }
    (a, b)
}

/// Correlation of counting scores computed separately on two halves, over
/// items scored in both. Returns the correlation and the number of items dropped.
pub fn half_correlation(
    a: &[JudgedTuple],
    b: &[JudgedTuple],
    ids: &[String],
) -> Result<(f64, usize), EvalError> {
    let ta = count_raw(a, ids)?;
    let tb = count_raw(b, ids)?;
    let (ra, rb) = (ta.raw_by_id(), tb.raw_by_id());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for id in ids {
        match (ra.get(id.as_str()), rb.get(id.as_str())) {
            (Some(&x), Some(&y)) => {
                xs.push(x);
                ys.push(y);
            }
            (None, None) => {}
            _ => dropped += 1,
        }
    }
    Ok((pearson(&xs, &ys)?, dropped))
}

pub fn split_half_reliability(
    judged: &[JudgedTuple],
    iterations: usize,
    seed: u64,
) -> Result<ShrResult, EvalError> {
    split_half_reliability_with(judged, iterations, seed, ShrBinning::Auto)
}

/// Mean over `iterations` random splits of the half-vs-half counting correlation.
/// Iteration `i` draws its split from a generator seeded with `(seed, i)`.
pub fn split_half_reliability_with(
    judged: &[JudgedTuple],
    iterations: usize,
    seed: u64,
    binning: ShrBinning,
) -> Result<ShrResult, EvalError> {
    if iterations == 0 {
        return Err(EvalError::NoIterations);
    }
    if judged.is_empty() {
        return Err(ScoringError::Empty.into());
    }
    let ids: Vec<String> = judged
        .iter()
        .flat_map(|j| j.ids.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let resolved = resolve_binning(judged, binning);
    let mut per_iteration = Vec::with_capacity(iterations);
    let mut skipped = 0;
    let mut dropped_items = 0;
    for it in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, it as u64));
        let (a, b) = split_once(judged, resolved, &mut rng);
        if a.is_empty() || b.is_empty() {
            skipped += 1;
            continue;
        }
        match half_correlation(&a, &b, &ids) {
            Ok((r, dropped)) => {
                if dropped > 0 {
                    log::debug!("split {it}: {dropped} items scored in only one half were dropped");
                }
                dropped_items += dropped;
                per_iteration.push(r);
            }
            Err(EvalError::ZeroVariance | EvalError::TooShort(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if per_iteration.is_empty() {
        return Err(EvalError::NoReliability);
    }
    if dropped_items > 0 {
        log::warn!(
            "split-half reliability: {dropped_items} item-splits dropped an item scored in only one half"
        );
    }
    let mean = per_iteration.iter().sum::<f64>() / per_iteration.len() as f64;
    Ok(ShrResult {
        mean,
        per_iteration,
        binning: resolved,
        skipped_iterations: skipped,
        dropped_items,
    })
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub dimension: String,
    pub protocol: String,
    pub scale: Option<String>,
    pub k: Option<f64>,
    pub pearson: Option<f64>,
    pub shr: Option<f64>,
    pub n_items: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub pearson: Option<f64>,
    pub shr: Option<f64>,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<DimensionReport>,
    pub mean: MeanRow,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Builds the report with a mean row over the defined per-dimension values.
pub fn report(rows: Vec<DimensionReport>) -> EvalReport {
    let mean = MeanRow {
        pearson: mean_of(rows.iter().map(|r| r.pearson)),
        shr: mean_of(rows.iter().map(|r| r.shr)),
        n_items: rows.iter().map(|r| r.n_items).sum(),
    };
    EvalReport { rows, mean }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", x * 100.0))
}

impl EvalReport {
    /// Plain-text table, correlations ×100 with one decimal.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8}", "dimension", "pearson", "shr", "n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>8} {:>8}",
                r.dimension,
                pct(r.pearson),
                pct(r.shr),
                r.n_items
            );
        }
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8}",
            "mean",
            pct(self.mean.pearson),
            pct(self.mean.shr),
            self.mean.n_items
        );
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}
