//! Aggregating judgments into per-text scores.
//!
//! Comparative protocols use the counting method: an item's raw score is
//! `(#best − #worst) / #appearances`, counted over judged tuples only, so it
//! lies in `[−1, 1]`. Rating protocols use the rated value directly (or the
//! mean of repeated ratings). Raw scores are then mapped linearly onto
//! `[0, 1]` using the observed minimum and maximum of the run.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::Protocol;
use crate::parsing::Judgment;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("no judgments to score")]
    Empty,
    #[error("no item has a defined raw score")]
    NoDefinedScores,
    #[error("judgment for tuple {tuple} names `{id}`, which is not in the tuple")]
    ForeignId { tuple: usize, id: String },
    #[error("tuple {tuple} contains `{id}`, which is not in the corpus")]
    UnknownId { tuple: usize, id: String },
    #[error("tuple {0}: best and worst are the same item")]
    SameItem(usize),
    #[error("tuple {tuple}: expected a {expected} judgment")]
    WrongKind { tuple: usize, expected: &'static str },
    #[error("`{0}` was rated more than once but aggregation is `single`")]
    MultipleRatings(String),
    #[error("implied pairs need a 4-tuple with distinct best and worst members")]
    NotBestWorstTuple,
    #[error("malformed score table: {0}")]
    Format(String),
}

/// A judged unit of work: the tuple's position in its design, its members and the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedTuple {
    pub tuple_index: usize,
    pub ids: Vec<String>,
    pub judgment: Judgment,
}

impl JudgedTuple {
    pub fn new(tuple_index: usize, ids: Vec<String>, judgment: Judgment) -> Self {
        JudgedTuple {
            tuple_index,
            ids,
            judgment,
        }
    }
}

/// Restricts multi-dimension judgments to one dimension; single-dimension ones pass through.
pub fn project_dimension(judged: &[JudgedTuple], dimension: &str) -> Vec<JudgedTuple> {
    judged
        .iter()
        .filter_map(|j| {
            j.judgment.for_dimension(dimension).map(|sub| JudgedTuple {
                tuple_index: j.tuple_index,
                ids: j.ids.clone(),
                judgment: sub.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub best_count: u32,
    pub worst_count: u32,
    pub appearance_count: u32,
    /// `None` for items that were never judged.
    pub raw_score: Option<f64>,
    pub normalized_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalizationBounds {
    /// Observed min/max over the table.
    Observed,
    /// Fixed bounds, e.g. the rating scale's `[0, max]`.
    Fixed { min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Single,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub protocol: Protocol,
    pub seed: u64,
    pub rows: Vec<ScoreRow>,
    pub warnings: Vec<String>,
}

impl ScoreTable {
    pub fn with_source(mut self, protocol: Protocol, seed: u64) -> Self {
        self.protocol = protocol;
        self.seed = seed;
        self
    }

    pub fn row(&self, id: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn raw_by_id(&self) -> BTreeMap<&str, f64> {
        self.rows
            .iter()
            .filter_map(|r| r.raw_score.map(|s| (r.id.as_str(), s)))
            .collect()
    }

    pub fn normalized_by_id(&self) -> BTreeMap<&str, f64> {
        self.rows
            .iter()
            .filter_map(|r| r.normalized_score.map(|s| (r.id.as_str(), s)))
            .collect()
    }

    pub fn undefined_ids(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.raw_score.is_none())
            .map(|r| r.id.as_str())
            .collect()
    }

    /// Audit TSV: `id, best, worst, appearances, raw, normalized`; undefined scores are `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tbest\tworst\tappearances\traw\tnormalized\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.id,
                r.best_count,
                r.worst_count,
                r.appearance_count,
                fmt(r.raw_score),
                fmt(r.normalized_score)
            );
        }
        out
    }

    pub fn from_tsv(content: &str, protocol: Protocol, seed: u64) -> Result<ScoreTable, ScoringError> {
        let mut rows = Vec::new();
        for (n, line) in content.lines().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| ScoringError::Format(format!("line {}: {what}", n + 1));
            if cols.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let int = |s: &str| s.parse::<u32>().map_err(|_| bad("bad count"));
            let opt = |s: &str| -> Result<Option<f64>, ScoringError> {
                if s == "NA" {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad("bad score"))
                }
            };
            rows.push(ScoreRow {
                id: cols[0].to_string(),
                best_count: int(cols[1])?,
                worst_count: int(cols[2])?,
                appearance_count: int(cols[3])?,
                raw_score: opt(cols[4])?,
                normalized_score: opt(cols[5])?,
            });
        }
        Ok(ScoreTable {
            protocol,
            seed,
            rows,
            warnings: Vec::new(),
        })
    }
}

fn empty_rows(corpus_ids: &[String]) -> (Vec<ScoreRow>, HashMap<&str, usize>) {
    let rows = corpus_ids
        .iter()
        .map(|id| ScoreRow {
            id: id.clone(),
            best_count: 0,
            worst_count: 0,
            appearance_count: 0,
            raw_score: None,
            normalized_score: None,
        })
        .collect();
    let index = corpus_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    (rows, index)
}

/// Raw counting scores without normalization.
pub fn count_raw(judged: &[JudgedTuple], corpus_ids: &[String]) -> Result<ScoreTable, ScoringError> {
    if judged.is_empty() {
        return Err(ScoringError::Empty);
    }
    let (mut rows, index) = empty_rows(corpus_ids);
    for jt in judged {
        let (best, worst) = match &jt.judgment {
            Judgment::BestWorst { best, worst } => (best, worst),
            _ => {
                return Err(ScoringError::WrongKind {
                    tuple: jt.tuple_index,
                    expected: "best-worst",
                })
            }
        };
        if best == worst {
            return Err(ScoringError::SameItem(jt.tuple_index));
        }
        for named in [best, worst] {
            if !jt.ids.contains(named) {
                return Err(ScoringError::ForeignId {
                    tuple: jt.tuple_index,
                    id: named.clone(),
                });
            }
        }
        for id in &jt.ids {
            let &i = index.get(id.as_str()).ok_or_else(|| ScoringError::UnknownId {
                tuple: jt.tuple_index,
                id: id.clone(),
            })?;
            rows[i].appearance_count += 1;
        }
        rows[index[best.as_str()]].best_count += 1;
        rows[index[worst.as_str()]].worst_count += 1;
    }
    let mut warnings = Vec::new();
    for r in &mut rows {
        if r.appearance_count > 0 {
            r.raw_score = Some(
                (r.best_count as f64 - r.worst_count as f64) / r.appearance_count as f64,
            );
        } else {
            warnings.push(format!("`{}` never appeared in a judged tuple", r.id));
        }
    }
    let protocol = if judged.iter().all(|j| j.ids.len() == 2) {
        Protocol::Pc
    } else {
        Protocol::Bws
    };
    Ok(ScoreTable {
        protocol,
        seed: 0,
        rows,
        warnings,
    })
}

/// Counting-method scores, normalized to `[0, 1]`.
pub fn score_counting(judged: &[JudgedTuple], corpus_ids: &[String]) -> Result<ScoreTable, ScoringError> {
    normalize(count_raw(judged, corpus_ids)?)
}

/// Rating scores (single value or mean of repeats), normalized to `[0, 1]`.
pub fn score_ratings(
    judged: &[JudgedTuple],
    corpus_ids: &[String],
    aggregation: Aggregation,
) -> Result<ScoreTable, ScoringError> {
    score_ratings_with(judged, corpus_ids, aggregation, NormalizationBounds::Observed)
}

pub fn score_ratings_with(
    judged: &[JudgedTuple],
    corpus_ids: &[String],
    aggregation: Aggregation,
    bounds: NormalizationBounds,
) -> Result<ScoreTable, ScoringError> {
    if judged.is_empty() {
        return Err(ScoringError::Empty);
    }
    let (mut rows, index) = empty_rows(corpus_ids);
    let mut sums = vec![0.0f64; rows.len()];
    for jt in judged {
        let Judgment::Ratings { values } = &jt.judgment else {
            return Err(ScoringError::WrongKind {
                tuple: jt.tuple_index,
                expected: "rating",
            });
        };
        for r in values {
            if !jt.ids.contains(&r.id) {
                return Err(ScoringError::ForeignId {
                    tuple: jt.tuple_index,
                    id: r.id.clone(),
                });
            }
            let &i = index.get(r.id.as_str()).ok_or_else(|| ScoringError::UnknownId {
                tuple: jt.tuple_index,
                id: r.id.clone(),
            })?;
            if aggregation == Aggregation::Single && rows[i].appearance_count > 0 {
                return Err(ScoringError::MultipleRatings(r.id.clone()));
            }
            rows[i].appearance_count += 1;
            sums[i] += r.value;
        }
    }
    let mut warnings = Vec::new();
    for (r, sum) in rows.iter_mut().zip(sums) {
        if r.appearance_count > 0 {
            r.raw_score = Some(sum / r.appearance_count as f64);
        } else {
            warnings.push(format!("`{}` was never rated", r.id));
        }
    }
    let protocol = if judged.iter().any(|j| j.ids.len() > 1) {
        Protocol::RsT
    } else {
        Protocol::Rs
    };
    normalize_with(
        ScoreTable {
            protocol,
            seed: 0,
            rows,
            warnings,
        },
        bounds,
    )
}

/// Linear map of defined raw scores onto `[0, 1]` using the observed min and max.
/// A table whose defined scores are all equal maps every one of them to 0.5.
pub fn normalize(table: ScoreTable) -> Result<ScoreTable, ScoringError> {
    normalize_with(table, NormalizationBounds::Observed)
}

pub fn normalize_with(mut table: ScoreTable, bounds: NormalizationBounds) -> Result<ScoreTable, ScoringError> {
    let defined: Vec<f64> = table.rows.iter().filter_map(|r| r.raw_score).collect();
    if defined.is_empty() {
        return Err(ScoringError::NoDefinedScores);
    }
    let (min, max) = match bounds {
        NormalizationBounds::Observed => defined
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        NormalizationBounds::Fixed { min, max } => (min, max),
    };
    let degenerate = max <= min;
    if degenerate {
        let msg = format!("all raw scores equal {min}; normalized scores set to 0.5");
        log::warn!("{msg}");
        table.warnings.push(msg);
    }
    for r in &mut table.rows {
        r.normalized_score = r.raw_score.map(|raw| {
            if degenerate {
                0.5
            } else {
                ((raw - min) / (max - min)).clamp(0.0, 1.0)
            }
        });
    }
    Ok(table)
}

/// The dominance relations implied by one best-worst answer on a 4-tuple:
/// best beats the other three and both unchosen items beat worst. The
/// comparison between the two unchosen items is unknown.
pub fn implied_pairs(
    tuple: &[String],
    best: &str,
    worst: &str,
) -> Result<BTreeSet<(String, String)>, ScoringError> {
    let distinct: BTreeSet<&String> = tuple.iter().collect();
    if tuple.len() != 4
        || distinct.len() != 4
        || best == worst
        || !tuple.iter().any(|t| t == best)
        || !tuple.iter().any(|t| t == worst)
    {
        return Err(ScoringError::NotBestWorstTuple);
    }
    let mut pairs = BTreeSet::new();
    for other in tuple.iter().filter(|t| *t != best) {
        pairs.insert((best.to_string(), other.clone()));
    }
    for middle in tuple.iter().filter(|t| *t != best && *t != worst) {
        pairs.insert((middle.clone(), worst.to_string()));
    }
    Ok(pairs)
}
