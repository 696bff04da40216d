//! Turning raw model output into validated [`Judgment`]s.
//!
//! A response is acceptable when it yields exactly what the protocol asks for:
//! one in-range number per text for rating prompts, or two distinct speakers
//! for comparative prompts. Extraction is tried in order of strictness:
//!
//! 1. the exact format requested by the prompt,
//! 2. labeled lines anywhere in the response (`Text 2: ...`, `Most ... Speaker: ...`),
//! 3. bare numbers in reading order.
//!
//! Surrounding prose is ignored as long as a single reading survives.
//! Anything else is [`NotAcceptable`], which callers treat as "ask again".

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::Protocol;
use crate::prompting::{round4, PromptBundle, RatingScaleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub id: String,
    pub value: f64,
}

/// One accepted answer for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Judgment {
    Ratings { values: Vec<Rating> },
    BestWorst { best: String, worst: String },
    PerDimension { dimensions: BTreeMap<String, Judgment> },
}

impl Judgment {
    pub fn best_worst(best: impl Into<String>, worst: impl Into<String>) -> Judgment {
        Judgment::BestWorst {
            best: best.into(),
            worst: worst.into(),
        }
    }

    pub fn ratings<I, S>(values: I) -> Judgment
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Judgment::Ratings {
            values: values
                .into_iter()
                .map(|(id, value)| Rating {
                    id: id.into(),
                    value,
                })
                .collect(),
        }
    }

    /// The sub-judgment for `dimension`, or `self` for single-dimension judgments.
    pub fn for_dimension(&self, dimension: &str) -> Option<&Judgment> {
        match self {
            Judgment::PerDimension { dimensions } => dimensions.get(dimension),
            other => Some(other),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NotAcceptable {
    #[error("expected {expected} values, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("no numeric rating found")]
    NonNumeric,
    #[error("rating {value} outside [0, {max}]")]
    OutOfRange { value: f64, max: u32 },
    #[error("no `{0}` answer found")]
    MissingLine(&'static str),
    #[error("speaker {index} does not exist (tuple has {size})")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("most and least name the same speaker")]
    SameSpeaker,
    #[error("cannot tell which speaker `{0}` refers to")]
    UnknownSpeaker(String),
    #[error("conflicting answers: {0}")]
    Ambiguous(String),
    #[error("no answer for dimension `{0}`")]
    MissingDimension(String),
    #[error("unsupported prompt: {0}")]
    Unsupported(String),
}

const NUM: &str = r"(-?(?:\d+(?:\.\d+)?|\.\d+))";

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(NUM).unwrap());
static EXACT_SINGLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)^[\p{{L}} ]+ intensity:\s*{NUM}$")).unwrap());
static EXACT_TEXT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"^Text (\d+):\s*{NUM}$")).unwrap());
static LABELED_TEXT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\btext\s*#?\s*(\d+)\b[^:\n]*:\s*\**\s*{NUM}")).unwrap()
});
static LABELED_INTENSITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\b(?:intensity|rating|score)\s*:\s*\**\s*{NUM}")).unwrap()
});
static TEXT_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\btext\s*#?\s*\d+").unwrap());
static EXACT_BEST_WORST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^Most [^\n:]+ Speaker:\s*(\d+)\nLeast [^\n:]+ Speaker:\s*(\d+)$").unwrap()
});
static MOST_LEAST_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[\s*#>\-]*(most|least)\b([^:\n]*):[ \t]*(.*)$").unwrap()
});
static SPEAKER_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\W*(?:speaker\s*#?\s*)?(\d+)\b").unwrap());
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"\([^)]*\)|"[^"]*"|“[^”]*”"#).unwrap());
static SECOND_SPEAKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:,|/|&|\+|\band\b|\bor\b)\s*(?:speaker\s*#?\s*)?\d+\b|\bspeaker\s*#?\s*\d+").unwrap()
});
static DENOMINATOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\s*(?:\bout\s+of|/)\s*\d+(?:\.\d+)?").unwrap());
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\b").unwrap());
static MULTI_RATING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i)\btext\s*#?\s*(\d+)\s+([\p{{L}}]+)\s+intensity\s*:\s*\**\s*{NUM}"
    ))
    .unwrap()
});

fn to_f64(s: &str) -> Result<f64, NotAcceptable> {
    s.parse::<f64>().map_err(|_| NotAcceptable::NonNumeric)
}

/// Collects `index → value`, rejecting an index that is given two different values.
fn indexed(
    pairs: impl Iterator<Item = (usize, f64)>,
) -> Result<BTreeMap<usize, f64>, NotAcceptable> {
    let mut out = BTreeMap::new();
    for (i, v) in pairs {
        if let Some(prev) = out.insert(i, v) {
            if prev != v {
                return Err(NotAcceptable::Ambiguous(format!("text {i} rated {prev} and {v}")));
            }
        }
    }
    Ok(out)
}

fn extract_rating_values(response: &str, n: usize) -> Result<Vec<f64>, NotAcceptable> {
    let trimmed = response.trim();

    // 1. exact format
    if n == 1 {
        if let Some(c) = EXACT_SINGLE.captures(trimmed) {
            return Ok(vec![to_f64(&c[1])?]);
        }
    } else {
        let lines: Vec<&str> = trimmed.lines().map(str::trim).collect();
        if lines.len() == n {
            let exact: Option<Vec<f64>> = lines
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let c = EXACT_TEXT_LINE.captures(l)?;
                    (c[1].parse::<usize>().ok()? == i + 1).then(|| c[2].parse().ok())?
                })
                .collect();
            if let Some(values) = exact {
                return Ok(values);
            }
        }
    }

    // 2. labeled lines
    let by_index = indexed(
        LABELED_TEXT
            .captures_iter(trimmed)
            .filter_map(|c| Some((c[1].parse::<usize>().ok()?, c[2].parse::<f64>().ok()?))),
    )?;
    if !by_index.is_empty() {
        if by_index.keys().copied().eq(1..=n) {
            return Ok(by_index.into_values().collect());
        }
        return Err(NotAcceptable::WrongCount {
            expected: n,
            found: by_index.len(),
        });
    }
    if n == 1 {
        let labeled = indexed(
            LABELED_INTENSITY
                .captures_iter(trimmed)
                .filter_map(|c| Some((1, c[1].parse::<f64>().ok()?))),
        )?;
        if let Some(v) = labeled.get(&1) {
            return Ok(vec![*v]);
        }
    }

    // 3. bare numbers in reading order ("7 out of 10" counts as 7)
    let unlabeled = TEXT_LABEL.replace_all(trimmed, " ");
    let unlabeled = DENOMINATOR.replace_all(&unlabeled, " ");
    let values: Vec<f64> = NUMBER
        .captures_iter(&unlabeled)
        .map(|c| to_f64(&c[1]))
        .collect::<Result<_, _>>()?;
    match values.len() {
        0 => Err(NotAcceptable::NonNumeric),
        k if k == n => Ok(values),
        k => Err(NotAcceptable::WrongCount {
            expected: n,
            found: k,
        }),
    }
}

fn validate_rating(value: f64, scale: &RatingScaleSpec) -> Result<f64, NotAcceptable> {
    if !value.is_finite() || !scale.contains(value) {
        return Err(NotAcceptable::OutOfRange {
            value,
            max: scale.max_value,
        });
    }
    Ok(if scale.decimals { round4(value) } else { value })
}

/// Reads one rating per expected id, in order.
pub fn parse_rating(
    response: &str,
    expected_ids: &[String],
    scale: &RatingScaleSpec,
) -> Result<Judgment, NotAcceptable> {
    let n = expected_ids.len();
    if !(1..=4).contains(&n) {
        return Err(NotAcceptable::Unsupported(format!("{n} texts in a rating prompt")));
    }
    let values = extract_rating_values(response, n)?;
    let values = values
        .into_iter()
        .map(|v| validate_rating(v, scale))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Judgment::ratings(expected_ids.iter().cloned().zip(values)))
}

/// Resolves a speaker reference ("Speaker 3", "3", or the verbatim text) to a 0-based index.
fn resolve_speaker(value: &str, texts: &[String], size: usize) -> Result<usize, NotAcceptable> {
    let value = value.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '*');
    if value.is_empty() {
        return Err(NotAcceptable::UnknownSpeaker(String::new()));
    }
    if let Some(c) = SPEAKER_REF.captures(value) {
        let rest = QUOTED.replace_all(&value[c.get(0).map_or(0, |m| m.end())..], " ");
        if SECOND_SPEAKER.is_match(&rest) {
            return Err(NotAcceptable::Ambiguous(format!("`{value}` names more than one speaker")));
        }
        let index: usize = c[1].parse().map_err(|_| NotAcceptable::UnknownSpeaker(value.into()))?;
        if index == 0 || index > size {
            return Err(NotAcceptable::IndexOutOfRange { index, size });
        }
        return Ok(index - 1);
    }
    let needle = value.to_lowercase();
    let matches: Vec<usize> = texts
        .iter()
        .enumerate()
        .filter(|(_, t)| t.trim().to_lowercase() == needle)
        .map(|(i, _)| i)
        .collect();
    match matches.as_slice() {
        [i] => Ok(*i),
        _ => Err(NotAcceptable::UnknownSpeaker(value.into())),
    }
}

fn pick(
    found: Option<usize>,
    line: &'static str,
) -> Result<usize, NotAcceptable> {
    found.ok_or(NotAcceptable::MissingLine(line))
}

/// Finds the most/least answers, optionally restricted to lines naming `dimension`.
fn labeled_best_worst(
    response: &str,
    texts: &[String],
    size: usize,
    dimension: Option<&str>,
) -> Result<Option<(usize, usize)>, NotAcceptable> {
    let mut most = None;
    let mut least = None;
    let mut seen_any = false;
    for c in MOST_LEAST_LINE.captures_iter(response) {
        let label = c[2].to_lowercase();
        if let Some(dim) = dimension {
            if !label.split(|ch: char| !ch.is_alphanumeric()).any(|w| w == dim) {
                continue;
            }
        }
        seen_any = true;
        let index = resolve_speaker(&c[3], texts, size)?;
        let slot = if c[1].eq_ignore_ascii_case("most") {
            &mut most
        } else {
            &mut least
        };
        match *slot {
            Some(prev) if prev != index => {
                return Err(NotAcceptable::Ambiguous(format!(
                    "{} given as speaker {} and {}",
                    c[1].to_lowercase(),
                    prev + 1,
                    index + 1
                )))
            }
            _ => *slot = Some(index),
        }
    }
    if !seen_any {
        return Ok(None);
    }
    Ok(Some((pick(most, "most")?, pick(least, "least")?)))
}

fn finish_best_worst(
    (best, worst): (usize, usize),
    ids: &[String],
) -> Result<Judgment, NotAcceptable> {
    if best == worst {
        return Err(NotAcceptable::SameSpeaker);
    }
    Ok(Judgment::best_worst(ids[best].clone(), ids[worst].clone()))
}

/// Reads a most/least answer over 2 (paired) or 4 (best-worst) speakers.
///
/// `texts` enables matching an answer that repeats a speaker's text verbatim;
/// pass an empty slice to disable it.
pub fn parse_best_worst(
    response: &str,
    expected_ids: &[String],
    texts: &[String],
) -> Result<Judgment, NotAcceptable> {
    let size = expected_ids.len();
    if size != 2 && size != 4 {
        return Err(NotAcceptable::Unsupported(format!("{size} speakers in a comparison")));
    }
    let trimmed = response.trim();

    if let Some(c) = EXACT_BEST_WORST.captures(trimmed) {
        let best = resolve_speaker(&c[1], texts, size)?;
        let worst = resolve_speaker(&c[2], texts, size)?;
        return finish_best_worst((best, worst), expected_ids);
    }
    if let Some(found) = labeled_best_worst(trimmed, texts, size, None)? {
        return finish_best_worst(found, expected_ids);
    }
    let ints: Vec<usize> = INTEGER
        .captures_iter(trimmed)
        .filter_map(|c| c[1].parse().ok())
        .collect();
    match ints.as_slice() {
        [b, w] => {
            for &i in [b, w] {
                if i == 0 || i > size {
                    return Err(NotAcceptable::IndexOutOfRange { index: i, size });
                }
            }
            finish_best_worst((b - 1, w - 1), expected_ids)
        }
        [] => Err(NotAcceptable::MissingLine("most")),
        other => Err(NotAcceptable::WrongCount {
            expected: 2,
            found: other.len(),
        }),
    }
}

/// Reads one most/least pair per dimension from a multi-emotion answer.
pub fn parse_best_worst_multi(
    response: &str,
    expected_ids: &[String],
    texts: &[String],
    dimensions: &[String],
) -> Result<Judgment, NotAcceptable> {
    let size = expected_ids.len();
    let mut out = BTreeMap::new();
    for dim in dimensions {
        let dim = dim.to_lowercase();
        let found = labeled_best_worst(response, texts, size, Some(&dim))?
            .ok_or_else(|| NotAcceptable::MissingDimension(dim.clone()))?;
        out.insert(dim, finish_best_worst(found, expected_ids)?);
    }
    Ok(Judgment::PerDimension { dimensions: out })
}

/// Reads `Text i {emo} intensity: v` lines for every text and dimension.
pub fn parse_rating_multi(
    response: &str,
    expected_ids: &[String],
    scale: &RatingScaleSpec,
    dimensions: &[String],
) -> Result<Judgment, NotAcceptable> {
    let n = expected_ids.len();
    let mut table: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for c in MULTI_RATING.captures_iter(response) {
        let (Ok(i), Ok(v)) = (c[1].parse::<usize>(), c[3].parse::<f64>()) else {
            continue;
        };
        let dim = c[2].to_lowercase();
        if let Some(prev) = table.entry(dim.clone()).or_default().insert(i, v) {
            if prev != v {
                return Err(NotAcceptable::Ambiguous(format!("text {i} {dim} rated twice")));
            }
        }
    }
    let mut out = BTreeMap::new();
    for dim in dimensions {
        let dim = dim.to_lowercase();
        let rows = table
            .get(&dim)
            .ok_or_else(|| NotAcceptable::MissingDimension(dim.clone()))?;
        if !rows.keys().copied().eq(1..=n) {
            return Err(NotAcceptable::WrongCount {
                expected: n,
                found: rows.len(),
            });
        }
        let values = rows
            .values()
            .map(|&v| validate_rating(v, scale))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(dim, Judgment::ratings(expected_ids.iter().cloned().zip(values)));
    }
    Ok(Judgment::PerDimension { dimensions: out })
}

/// Parses a response to `prompt` with the rules of its protocol.
pub fn parse_response(prompt: &PromptBundle, response: &str) -> Result<Judgment, NotAcceptable> {
    let multi = prompt.is_multi_dimension();
    match prompt.protocol {
        Protocol::Rs | Protocol::RsT => {
            let scale = prompt
                .scale
                .as_ref()
                .ok_or_else(|| NotAcceptable::Unsupported("rating prompt without a scale".into()))?;
            if multi {
                parse_rating_multi(response, &prompt.tuple_ids, scale, &prompt.dimensions)
            } else {
                parse_rating(response, &prompt.tuple_ids, scale)
            }
        }
        Protocol::Pc | Protocol::Bws => {
            if multi {
                parse_best_worst_multi(response, &prompt.tuple_ids, &prompt.texts, &prompt.dimensions)
            } else {
                parse_best_worst(response, &prompt.tuple_ids, &prompt.texts)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        ["a", "b", "c", "d"][..n].iter().map(|s| s.to_string()).collect()
    }

    fn scale(s: &str) -> RatingScaleSpec {
        s.parse().unwrap()
    }

    fn values(j: &Judgment) -> Vec<f64> {
        match j {
            Judgment::Ratings { values } => values.iter().map(|r| r.value).collect(),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_rating_exact() {
        let j = parse_rating("joy intensity: 7", &ids(1), &scale("D-10")).unwrap();
        assert_eq!(values(&j), vec![7.0]);
    }

    #[test]
    fn single_rating_out_of_range() {
        assert_eq!(
            parse_rating("joy intensity: 11", &ids(1), &scale("D-10")),
            Err(NotAcceptable::OutOfRange { value: 11.0, max: 10 })
        );
        assert!(parse_rating("joy intensity: -1", &ids(1), &scale("D-10")).is_err());
    }

    #[test]
    fn four_ratings_on_unit_scale() {
        let j = parse_rating("Text 1: 0.8312\nText 2: 0.41\nText 3: 0\nText 4: 1", &ids(4), &scale("B-1"))
            .unwrap();
        assert_eq!(values(&j), vec![0.8312, 0.41, 0.0, 1.0]);
    }

    #[test]
    fn decimals_rounded_to_four_places() {
        let j = parse_rating("anger intensity: 0.123456", &ids(1), &scale("B-1")).unwrap();
        assert_eq!(values(&j), vec![0.1235]);
    }

    #[test]
    fn fractional_answers_on_integer_scales_kept() {
        let j = parse_rating("joy intensity: 7.5", &ids(1), &scale("D-10")).unwrap();
        assert_eq!(values(&j), vec![7.5]);
    }

    #[test]
    fn leniency_ladder_for_ratings() {
        let s = scale("D-10");
        // prose around a labeled answer
        let j = parse_rating("Sure! Here you go.\nJoy intensity: 6\nHope that helps.", &ids(1), &s).unwrap();
        assert_eq!(values(&j), vec![6.0]);
        // bare number
        assert_eq!(values(&parse_rating("  4 ", &ids(1), &s).unwrap()), vec![4.0]);
        // labeled lines out of order, with extra words
        let j = parse_rating("Text 2 joy intensity: 3\nText 1 joy intensity: 9\nText 4: 0\nText 3: 10", &ids(4), &s)
            .unwrap();
        assert_eq!(values(&j), vec![9.0, 3.0, 10.0, 0.0]);
        // bare numbers in reading order
        let j = parse_rating("8, 2, 5, 1", &ids(4), &s).unwrap();
        assert_eq!(values(&j), vec![8.0, 2.0, 5.0, 1.0]);
        let j = parse_rating("I'd say 7 out of 10", &ids(1), &s).unwrap();
        assert_eq!(values(&j), vec![7.0]);
    }

    #[test]
    fn rating_rejections() {
        let s = scale("D-10");
        assert_eq!(
            parse_rating("joy intensity: high", &ids(1), &s),
            Err(NotAcceptable::NonNumeric)
        );
        assert!(matches!(
            parse_rating("I'd say 7, maybe 8", &ids(1), &s),
            Err(NotAcceptable::WrongCount { expected: 1, found: 2 })
        ));
        assert!(matches!(
            parse_rating("Text 1: 3\nText 2: 4", &ids(4), &s),
            Err(NotAcceptable::WrongCount { .. })
        ));
        assert!(matches!(
            parse_rating("Text 1: 3\nText 1: 4\nText 2: 1\nText 3: 1\nText 4: 1", &ids(4), &s),
            Err(NotAcceptable::Ambiguous(_))
        ));
    }

    #[test]
    fn best_worst_exact() {
        let j = parse_best_worst("Most joy Speaker: 2\nLeast joy Speaker: 4", &ids(4), &[]).unwrap();
        assert_eq!(j, Judgment::best_worst("b", "d"));
    }

    #[test]
    fn best_worst_same_speaker_rejected() {
        assert_eq!(
            parse_best_worst("Most anger Speaker: 1\nLeast anger Speaker: 1", &ids(4), &[]),
            Err(NotAcceptable::SameSpeaker)
        );
    }

    #[test]
    fn best_worst_lenient() {
        let j = parse_best_worst("Most fear Speaker: Speaker 3 \n least fear speaker: 1", &ids(4), &[]).unwrap();
        assert_eq!(j, Judgment::best_worst("c", "a"));

        let texts: Vec<String> = ["so happy", "meh", "ok", "sad day"].iter().map(|s| s.to_string()).collect();
        let j = parse_best_worst("Most joy Speaker: \"so happy\"\nLeast joy Speaker: Sad day", &ids(4), &texts)
            .unwrap();
        assert_eq!(j, Judgment::best_worst("a", "d"));

        let j = parse_best_worst("**Most joy Speaker:** 4\n**Least joy Speaker:** 2", &ids(4), &[]).unwrap();
        assert_eq!(j, Judgment::best_worst("d", "b"));

        let j = parse_best_worst("3, 1", &ids(4), &[]).unwrap();
        assert_eq!(j, Judgment::best_worst("c", "a"));
    }

    #[test]
    fn best_worst_rejections() {
        assert_eq!(
            parse_best_worst("Most joy Speaker: 5\nLeast joy Speaker: 1", &ids(4), &[]),
            Err(NotAcceptable::IndexOutOfRange { index: 5, size: 4 })
        );
        assert_eq!(
            parse_best_worst("Most joy Speaker: 3", &ids(4), &[]),
            Err(NotAcceptable::MissingLine("least"))
        );
        assert!(matches!(
            parse_best_worst("Most joy Speaker: 3\nMost joy Speaker: 2\nLeast joy Speaker: 1", &ids(4), &[]),
            Err(NotAcceptable::Ambiguous(_))
        ));
        assert!(parse_best_worst("I cannot help with that.", &ids(4), &[]).is_err());
        assert!(matches!(
            parse_best_worst("Most joy Speaker: 2 or 3\nLeast joy Speaker: 1", &ids(4), &[]),
            Err(NotAcceptable::Ambiguous(_))
        ));
        let j = parse_best_worst("Most joy Speaker: 2 (not Speaker 3)\nLeast joy Speaker: 1", &ids(4), &[]).unwrap();
        assert_eq!(j, Judgment::best_worst("b", "a"));
        assert_eq!(
            parse_best_worst("Most joy Speaker: 3\nLeast joy Speaker: 1", &ids(2), &[]),
            Err(NotAcceptable::IndexOutOfRange { index: 3, size: 2 })
        );
        let j = parse_best_worst("Most joy Speaker: 2\nLeast joy Speaker: 1", &ids(2), &[]).unwrap();
        assert_eq!(j, Judgment::best_worst("b", "a"));
    }

    #[test]
    fn multi_dimension_best_worst() {
        let dims: Vec<String> = ["joy", "fear"].iter().map(|s| s.to_string()).collect();
        let j = parse_best_worst_multi(
            "Most joy Speaker: 1\nLeast joy Speaker: 2\nMost fear Speaker: 3\nLeast fear Speaker: 4",
            &ids(4),
            &[],
            &dims,
        )
        .unwrap();
        assert_eq!(j.for_dimension("joy"), Some(&Judgment::best_worst("a", "b")));
        assert_eq!(j.for_dimension("fear"), Some(&Judgment::best_worst("c", "d")));
        assert_eq!(
            parse_best_worst_multi("Most joy Speaker: 1\nLeast joy Speaker: 2", &ids(4), &[], &dims),
            Err(NotAcceptable::MissingDimension("fear".into()))
        );
    }

    #[test]
    fn multi_dimension_ratings() {
        let dims: Vec<String> = ["joy", "anger"].iter().map(|s| s.to_string()).collect();
        let resp = "Text 1 joy intensity: 1\nText 2 joy intensity: 2\nText 1 anger intensity: 9\nText 2 anger intensity: 0";
        let j = parse_rating_multi(resp, &ids(2), &scale("D-10"), &dims).unwrap();
        assert_eq!(values(j.for_dimension("joy").unwrap()), vec![1.0, 2.0]);
        assert_eq!(values(j.for_dimension("anger").unwrap()), vec![9.0, 0.0]);
    }

    #[test]
    fn judgment_json_shape() {
        let j = Judgment::best_worst("a", "d");
        assert_eq!(
            serde_json::to_string(&j).unwrap(),
            r#"{"kind":"best_worst","best":"a","worst":"d"}"#
        );
    }
}
