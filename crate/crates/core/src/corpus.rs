//! Annotated text corpora: loading, validation and labeled export.
//!
//! Two on-disk formats are understood:
//!
//! * `ait_tsv`: tab-separated `id, text, dimension[, score]`, UTF-8, LF line
//!   endings. A header row is optional and recognised by a non-numeric score
//!   field (or a non-empty fourth column that fails to parse on the first row).
//! * `jsonl`: one object per line with keys `id`, `text`, `dimension` and an
//!   optional `score`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::ScoreTable;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid corpus: {0}")]
    Validation(String),
    #[error("missing scores for ids: {}", .0.join(", "))]
    MissingScores(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    /// Guesses the split from a file name (`...dev...`, `...test...`), falling back to train.
    pub fn from_path(path: &Path) -> Split {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if name.contains("dev") {
            Split::Dev
        } else if name.contains("test") {
            Split::Test
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    AitTsv,
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ait_tsv" | "tsv" => Ok(CorpusFormat::AitTsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusFormat::AitTsv => "ait_tsv",
            CorpusFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextInstance {
    pub id: String,
    pub text: String,
    pub dimension: String,
    #[serde(rename = "score", default, skip_serializing_if = "Option::is_none")]
    pub gold_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dimension: String,
    pub split: Split,
    pub instances: Vec<TextInstance>,
}

impl Corpus {
    /// Builds a corpus, checking every instance invariant.
    pub fn new(
        dimension: impl Into<String>,
        split: Split,
        instances: Vec<TextInstance>,
    ) -> Result<Corpus, CorpusError> {
        let corpus = Corpus {
            dimension: dimension.into(),
            split,
            instances,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.instances.is_empty() {
            return Err(CorpusError::Validation("corpus is empty".into()));
        }
        let mut seen = HashSet::with_capacity(self.instances.len());
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(CorpusError::Validation(format!(
                    "duplicate id `{}`",
                    inst.id
                )));
            }
            if inst.text.trim().is_empty() {
                return Err(CorpusError::Validation(format!(
                    "instance `{}` has empty text",
                    inst.id
                )));
            }
            if inst.dimension != self.dimension {
                return Err(CorpusError::Validation(format!(
                    "instance `{}` has dimension `{}`, corpus is `{}`",
                    inst.id, inst.dimension, self.dimension
                )));
            }
            if let Some(s) = inst.gold_score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(CorpusError::Validation(format!(
                        "instance `{}` has score {s} outside [0,1]",
                        inst.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.instances.iter().map(|i| i.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&TextInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Id → text lookup table.
    pub fn text_index(&self) -> BTreeMap<&str, &str> {
        self.instances
            .iter()
            .map(|i| (i.id.as_str(), i.text.as_str()))
            .collect()
    }

    /// Id → gold score for every instance that carries one.
    pub fn gold_scores(&self) -> BTreeMap<String, f64> {
        self.instances
            .iter()
            .filter_map(|i| i.gold_score.map(|s| (i.id.clone(), s)))
            .collect()
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let instances = match format {
        CorpusFormat::AitTsv => parse_tsv(&content)?,
        CorpusFormat::Jsonl => parse_jsonl(&content)?,
    };
    let dimension = instances
        .first()
        .map(|i| i.dimension.clone())
        .ok_or_else(|| CorpusError::Validation("corpus has no data rows".into()))?;
    Corpus::new(dimension, Split::from_path(path), instances)
}

fn strip_line_end(line: &str) -> &str {
    line.strip_suffix('\r').unwrap_or(line)
}

pub fn parse_tsv(content: &str) -> Result<Vec<TextInstance>, CorpusError> {
    let mut instances = Vec::new();
    let mut first_row = true;
    for (idx, raw) in content.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = strip_line_end(raw);
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 && cols.len() != 4 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 3 or 4 tab-separated columns, found {}", cols.len()),
            });
        }
        let is_first = std::mem::replace(&mut first_row, false);
        let score_field = cols.get(3).map(|s| s.trim()).filter(|s| !s.is_empty());
        let score = match score_field.map(str::parse::<f64>) {
            None => None,
            Some(Ok(v)) => Some(v),
            Some(Err(_)) if is_first => continue,
            Some(Err(_)) => {
                return Err(CorpusError::Parse {
                    line: line_no,
                    message: format!("score `{}` is not a number", score_field.unwrap_or("")),
                })
            }
        };
        // Three-column files have no score to test, so fall back to the usual id column name.
        if is_first && cols.len() == 3 && cols[0].eq_ignore_ascii_case("id") {
            continue;
        }
        instances.push(TextInstance {
            id: cols[0].to_string(),
            text: cols[1].to_string(),
            dimension: cols[2].trim().to_string(),
            gold_score: score,
        });
    }
    Ok(instances)
}

#[derive(Deserialize)]
struct JsonRow {
    id: String,
    text: String,
    dimension: String,
    #[serde(default)]
    score: Option<f64>,
}

pub fn parse_jsonl(content: &str) -> Result<Vec<TextInstance>, CorpusError> {
    let mut instances = Vec::new();
    for (idx, raw) in content.split('\n').enumerate() {
        let line = strip_line_end(raw);
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        instances.push(TextInstance {
            id: row.id,
            text: row.text,
            dimension: row.dimension,
            gold_score: row.score,
        });
    }
    Ok(instances)
}

/// Formats a score with the fixed four-decimal precision used by all exports.
pub fn format_score(score: f64) -> String {
    format!("{score:.4}")
}

/// Renders one labeled JSONL row. The score is written as a literal with four decimals.
pub fn labeled_row(inst: &TextInstance, score: f64) -> String {
    format!(
        "{{\"id\":{},\"text\":{},\"dimension\":{},\"score\":{}}}",
        serde_json::Value::from(inst.id.as_str()),
        serde_json::Value::from(inst.text.as_str()),
        serde_json::Value::from(inst.dimension.as_str()),
        format_score(score)
    )
}

/// Writes `{id, text, dimension, score}` rows in corpus order using the
/// normalized scores of `scores`. Returns the number of rows written.
pub fn export_labeled(
    corpus: &Corpus,
    scores: &ScoreTable,
    path: impl AsRef<Path>,
) -> Result<usize, CorpusError> {
    let lookup = scores.normalized_by_id();
    let missing: Vec<String> = corpus
        .instances
        .iter()
        .filter(|i| !lookup.contains_key(i.id.as_str()))
        .map(|i| i.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingScores(missing));
    }
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for inst in &corpus.instances {
        writeln!(out, "{}", labeled_row(inst, lookup[inst.id.as_str()])).map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(corpus.instances.len())
}
