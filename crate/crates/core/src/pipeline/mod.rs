//! Config-driven runs: load → design → render → annotate → score → evaluate → export.
//!
//! Every stage reads and writes plain files under `output_dir`, so stages can
//! be run one at a time from the CLI or all at once with [`run_annotation`].
//!
//! ```text
//! output_dir/
//!   config.toml                 snapshot of the effective config
//!   report.json                 evaluation table over all dimensions
//!   <unit>/                     one per dimension (or `adapted/` for six-emotion prompts)
//!     manifest.json             content hash guarding resumes
//!     design.jsonl
//!     transcripts.jsonl         every attempt, append-only
//!     judgments.jsonl           accepted answer or failure per annotation
//!   <dimension>/
//!     scores.tsv  labeled.jsonl  report.json
//! ```

mod compare;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{
    read_transcript, run_batch, Backend, BackendConfig, BackendError, BackendKind, BatchStats,
    SimulatedAnnotatorConfig, TranscriptLog,
};
use crate::corpus::{export_labeled, load_corpus, Corpus, CorpusError, CorpusFormat};
use crate::design::{
    design_bws_tuples, design_pc_pairs, design_rs_units, DesignError, Protocol, TupleDesignConfig,
    TupleSet,
};
use crate::evaluation::{
    pearson_vs_reference, report, split_half_reliability_with, DimensionReport, EvalError,
    EvalReport, ShrBinning,
};
use crate::parsing::Judgment;
use crate::prompting::{render_adapted_multiemotion, render_prompt, PromptBundle, PromptError, RatingScaleSpec};
use crate::scoring::{
    project_dimension, score_counting, score_ratings_with, Aggregation, JudgedTuple,
    NormalizationBounds, ScoreTable, ScoringError,
};

pub use compare::{
    run_protocol_comparison, ComparisonConfig, ComparisonReport, ComparisonRow, ComparisonSummary,
    KWin,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(
        "{dir} holds a run with different inputs (content hash {recorded}, now {current}); \
         use a fresh output directory"
    )]
    ResumeMismatch {
        dir: PathBuf,
        recorded: String,
        current: String,
    },
    #[error("{0} is missing; run the earlier stage first")]
    MissingArtifact(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl PipelineError {
    /// 1 for problems with the configuration, 2 for a stage that failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Backend(BackendError::Config(_)) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), PipelineError> {
    fs::write(path, content).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::AitTsv
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_repair")]
    pub max_repair_attempts: usize,
}

fn default_k() -> f64 {
    2.0
}
fn default_repair() -> usize {
    8
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            k: default_k(),
            max_repair_attempts: default_repair(),
        }
    }
}

/// How rating scores are mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatingNormalization {
    /// Observed minimum and maximum.
    #[default]
    Observed,
    /// The scale's own `[0, max]`.
    Scale,
}

fn default_repeats() -> usize {
    1
}
fn default_shr_iterations() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub protocol: Protocol,
    /// Rating scale variant such as `D-10`; rating protocols only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<RatingScaleSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats_per_tuple: usize,
    #[serde(default = "default_shr_iterations")]
    pub shr_iterations: usize,
    /// Paired comparison over a random subset of this many items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc_subset: Option<usize>,
    /// One prompt asks about all six dimensions (needs six corpora over the same texts).
    #[serde(default)]
    pub adapted: bool,
    #[serde(default)]
    pub rating_normalization: RatingNormalization,
    #[serde(default)]
    pub corpora: Vec<CorpusEntry>,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Simulated annotator settings. Latent scores default to the corpus gold scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulator: Option<SimulatedAnnotatorConfig>,
}

impl RunConfig {
    pub fn new(output_dir: impl Into<PathBuf>, protocol: Protocol) -> Self {
        RunConfig {
            output_dir: output_dir.into(),
            protocol,
            scale: None,
            seed: 0,
            repeats_per_tuple: default_repeats(),
            shr_iterations: default_shr_iterations(),
            pc_subset: None,
            adapted: false,
            rating_normalization: RatingNormalization::Observed,
            corpora: Vec::new(),
            design: DesignSection::default(),
            backend: BackendConfig::default(),
            simulator: None,
        }
    }

    /// Parses a TOML config. Relative paths are resolved against the
    /// directory containing the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for c in &mut self.corpora {
            fix(&mut c.path);
        }
        let mut backend = Some(&mut self.backend);
        while let Some(b) = backend {
            if let Some(p) = b.transcript_path.as_mut() {
                fix(p);
            }
            backend = b.fallback.as_deref_mut();
        }
    }

    pub fn design_config(&self) -> TupleDesignConfig {
        TupleDesignConfig {
            multiplier_k: self.design.k,
            tuple_size: 4,
            seed: self.seed,
            max_repair_attempts: self.design.max_repair_attempts,
        }
    }

    /// Checks everything that can be checked before touching the network.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.corpora.is_empty() {
            return bad("no corpora listed".into());
        }
        for c in &self.corpora {
            if !c.path.is_file() {
                return bad(format!("corpus file {} does not exist", c.path.display()));
            }
        }
        let rating = matches!(self.protocol, Protocol::Rs | Protocol::RsT);
        match (rating, self.scale) {
            (true, None) => return bad(format!("protocol {} needs a scale", self.protocol)),
            (false, Some(s)) => {
                return bad(format!("protocol {} takes no scale (got {s})", self.protocol))
            }
            _ => {}
        }
        if self.repeats_per_tuple == 0 {
            return bad("repeats_per_tuple must be ≥ 1".into());
        }
        if self.shr_iterations == 0 {
            return bad("shr_iterations must be ≥ 1".into());
        }
        if !(self.design.k > 0.0 && self.design.k.is_finite()) {
            return bad(format!("design.k must be positive, got {}", self.design.k));
        }
        if self.pc_subset.is_some() && self.protocol != Protocol::Pc {
            return bad("pc_subset only applies to protocol pc".into());
        }
        if self.adapted {
            if !matches!(self.protocol, Protocol::RsT | Protocol::Bws) {
                return bad("adapted prompts exist for rs_t and bws only".into());
            }
            if self.corpora.len() != 6 {
                return bad(format!(
                    "adapted prompts need six corpora, got {}",
                    self.corpora.len()
                ));
            }
        }
        self.backend.validate()?;
        let mut b = Some(&self.backend);
        while let Some(cfg) = b {
            if cfg.kind == BackendKind::Simulated && self.simulator.is_none() {
                return bad("backend kind `simulated` needs a [simulator] section".into());
            }
            b = cfg.fallback.as_deref();
        }
        if let Some(sim) = &self.simulator {
            sim.validate()?;
        }
        Ok(())
    }
}

/// One annotation job: a single dimension, or six for adapted prompts.
#[derive(Debug, Clone)]
struct Unit {
    name: String,
    corpora: Vec<Corpus>,
}

impl Unit {
    fn primary(&self) -> &Corpus {
        &self.corpora[0]
    }
}

fn dimension_key(corpus: &Corpus) -> String {
    corpus.dimension.to_lowercase()
}

fn load_units(cfg: &RunConfig) -> Result<Vec<Unit>, PipelineError> {
    let mut corpora = Vec::with_capacity(cfg.corpora.len());
    for entry in &cfg.corpora {
        corpora.push(load_corpus(&entry.path, entry.format)?);
    }
    let mut seen = BTreeSet::new();
    for c in &corpora {
        if !seen.insert(dimension_key(c)) {
            return Err(PipelineError::Config(format!(
                "two corpora for dimension `{}`",
                c.dimension
            )));
        }
    }
    if !cfg.adapted {
        return Ok(corpora
            .into_iter()
            .map(|c| Unit {
                name: dimension_key(&c),
                corpora: vec![c],
            })
            .collect());
    }
    let first = &corpora[0];
    for c in &corpora[1..] {
        let same = c.len() == first.len()
            && c.instances
                .iter()
                .zip(&first.instances)
                .all(|(a, b)| a.id == b.id && a.text == b.text);
        if !same {
            return Err(PipelineError::Config(format!(
                "adapted prompts need the same texts in every corpus; `{}` differs from `{}`",
                c.dimension, first.dimension
            )));
        }
    }
    Ok(vec![Unit {
        name: "adapted".into(),
        corpora,
    }])
}

fn design_for(cfg: &RunConfig, corpus: &Corpus) -> Result<TupleSet, PipelineError> {
    Ok(match cfg.protocol {
        Protocol::Bws => design_bws_tuples(corpus, &cfg.design_config())?,
        Protocol::Pc => design_pc_pairs(corpus, cfg.pc_subset, cfg.seed)?,
        Protocol::Rs => design_rs_units(corpus, false, cfg.seed)?,
        Protocol::RsT => design_rs_units(corpus, true, cfg.seed)?,
    })
}

/// One prompt per (tuple, repeat), tuple-major.
fn render_prompts(cfg: &RunConfig, unit: &Unit, tuples: &TupleSet) -> Result<Vec<PromptBundle>, PipelineError> {
    let corpus = unit.primary();
    let lookup = corpus.text_index();
    let dims: Vec<String> = unit.corpora.iter().map(|c| c.dimension.clone()).collect();
    let mut prompts = Vec::with_capacity(tuples.len() * cfg.repeats_per_tuple);
    for tuple in &tuples.tuples {
        let texts: Vec<(String, String)> = tuple
            .iter()
            .map(|id| (id.clone(), lookup[id.as_str()].to_string()))
            .collect();
        let prompt = if cfg.adapted {
            render_adapted_multiemotion(&texts, &dims, cfg.scale, cfg.protocol)?
        } else {
            render_prompt(cfg.protocol, &texts, &corpus.dimension, cfg.scale)?
        };
        for _ in 0..cfg.repeats_per_tuple {
            prompts.push(prompt.clone());
        }
    }
    Ok(prompts)
}

fn content_hash(cfg: &RunConfig, unit: &Unit, tuples: &TupleSet, prompts: &[PromptBundle]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}\n{}\n", cfg.protocol, cfg.repeats_per_tuple));
    for c in &unit.corpora {
        h.update(format!("#{}\n", c.dimension));
        for inst in &c.instances {
            h.update(format!("{}\t{}\n", inst.id, inst.text));
        }
    }
    h.update(tuples.to_jsonl());
    for p in prompts {
        h.update(p.hash());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub content_hash: String,
    pub protocol: Protocol,
    pub dimensions: Vec<String>,
    pub n_tuples: usize,
    pub n_annotations: usize,
    pub repeats_per_tuple: usize,
}

/// One line of `judgments.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentEntry {
    pub annotation_index: usize,
    pub tuple_index: usize,
    pub ids: Vec<String>,
    pub attempts: u32,
    #[serde(default)]
    pub from_fallback: bool,
    #[serde(default)]
    pub used_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Raw answers of a failed annotation, for audit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<String>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = read_file(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Format {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifacts always serialize"));
        out.push('\n');
    }
    out
}

fn unit_dir(cfg: &RunConfig, unit: &Unit) -> PathBuf {
    cfg.output_dir.join(&unit.name)
}

fn dimension_dir(cfg: &RunConfig, corpus: &Corpus) -> PathBuf {
    cfg.output_dir.join(dimension_key(corpus))
}

/// Writes `design.jsonl` for every unit.
pub fn stage_design(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.validate()?;
    let mut written = Vec::new();
    for unit in load_units(cfg)? {
        let dir = unit_dir(cfg, &unit);
        create_dir(&dir)?;
        let tuples = design_for(cfg, unit.primary())?;
        let path = dir.join("design.jsonl");
        write_file(&path, &tuples.to_jsonl())?;
        written.push(path);
    }
    Ok(written)
}

fn simulator_for(cfg: &RunConfig, unit: &Unit) -> Result<Option<SimulatedAnnotatorConfig>, PipelineError> {
    let Some(sim) = &cfg.simulator else {
        return Ok(None);
    };
    let mut sim = sim.clone();
    if sim.latent_scores.is_empty() && sim.dimension_latents.is_empty() && !sim.uniform_random {
        for c in &unit.corpora {
            let gold = c.gold_scores();
            if gold.len() != c.len() {
                return Err(PipelineError::Config(format!(
                    "simulator needs latent scores: corpus `{}` lacks gold scores for {} items",
                    c.dimension,
                    c.len() - gold.len()
                )));
            }
            sim.dimension_latents.insert(dimension_key(c), gold);
        }
    }
    Ok(Some(sim))
}

/// Annotates the designed tuples of every unit, resuming from an existing
/// transcript when the inputs are unchanged.
pub fn stage_annotate(cfg: &RunConfig) -> Result<Vec<(String, BatchStats)>, PipelineError> {
    cfg.validate()?;
    let mut all = Vec::new();
    for unit in load_units(cfg)? {
        let dir = unit_dir(cfg, &unit);
        let design_path = dir.join("design.jsonl");
        let tuples = TupleSet::from_jsonl(&read_file(&design_path)?)?;
        let prompts = render_prompts(cfg, &unit, &tuples)?;
        let hash = content_hash(cfg, &unit, &tuples, &prompts);

        let manifest_path = dir.join("manifest.json");
        let transcript_path = dir.join("transcripts.jsonl");
        let mut prior = Vec::new();
        if manifest_path.exists() {
            let recorded: Manifest = serde_json::from_str(&read_file(&manifest_path)?).map_err(|e| {
                PipelineError::Format {
                    path: manifest_path.clone(),
                    message: e.to_string(),
                }
            })?;
            if recorded.content_hash != hash {
                return Err(PipelineError::ResumeMismatch {
                    dir,
                    recorded: recorded.content_hash,
                    current: hash,
                });
            }
            if transcript_path.exists() {
                prior = read_transcript(&transcript_path)?;
            }
        } else if transcript_path.exists() {
            return Err(PipelineError::Config(format!(
                "{} exists without a manifest; use a fresh output directory",
                transcript_path.display()
            )));
        }
        let manifest = Manifest {
            content_hash: hash,
            protocol: cfg.protocol,
            dimensions: unit.corpora.iter().map(dimension_key).collect(),
            n_tuples: tuples.len(),
            n_annotations: prompts.len(),
            repeats_per_tuple: cfg.repeats_per_tuple,
        };
        write_file(&manifest_path, &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"))?;

        let sim = simulator_for(cfg, &unit)?;
        let mut backend = Backend::from_config(&cfg.backend, sim.as_ref())?;
        if !prior.is_empty() {
            log::info!("{}: resuming with {} recorded attempts", unit.name, prior.len());
            backend = backend.resuming(&prior);
        }
        let transcript = TranscriptLog::append_to(&transcript_path)?;
        let result = run_batch(&prompts, &backend, &transcript);

        let entries: Vec<JudgmentEntry> = result
            .outcomes
            .iter()
            .map(|o| {
                let a = o.tuple_index;
                let (judgment, failure, responses, from_fallback) = match &o.result {
                    Ok((raw, j)) => (Some(j.clone()), None, Vec::new(), raw.from_fallback),
                    Err(f) => (None, Some(f.reason.clone()), f.responses.clone(), false),
                };
                JudgmentEntry {
                    annotation_index: a,
                    tuple_index: a / cfg.repeats_per_tuple,
                    ids: prompts[a].tuple_ids.clone(),
                    attempts: o.attempts(),
                    from_fallback,
                    used_fallback: o.used_fallback,
                    judgment,
                    failure,
                    responses,
                }
            })
            .collect();
        write_file(&dir.join("judgments.jsonl"), &to_jsonl(&entries))?;
        all.push((unit.name.clone(), result.stats));
    }
    Ok(all)
}

fn judged_for(entries: &[JudgmentEntry], corpus: &Corpus, adapted: bool) -> Vec<JudgedTuple> {
    let judged: Vec<JudgedTuple> = entries
        .iter()
        .filter_map(|e| {
            e.judgment
                .as_ref()
                .map(|j| JudgedTuple::new(e.tuple_index, e.ids.clone(), j.clone()))
        })
        .collect();
    if adapted {
        project_dimension(&judged, &dimension_key(corpus))
    } else {
        judged
    }
}

fn score_dimension(
    cfg: &RunConfig,
    corpus: &Corpus,
    judged: &[JudgedTuple],
) -> Result<ScoreTable, PipelineError> {
    let ids = corpus.ids();
    let table = if cfg.protocol.is_comparative() {
        score_counting(judged, &ids)?
    } else {
        let aggregation = if cfg.repeats_per_tuple > 1 {
            Aggregation::Mean
        } else {
            Aggregation::Single
        };
        let bounds = match (cfg.rating_normalization, cfg.scale) {
            (RatingNormalization::Scale, Some(s)) => NormalizationBounds::Fixed {
                min: 0.0,
                max: s.max_value as f64,
            },
            _ => NormalizationBounds::Observed,
        };
        score_ratings_with(judged, &ids, aggregation, bounds)?
    };
    Ok(table.with_source(cfg.protocol, cfg.seed))
}

/// Writes `scores.tsv` and `labeled.jsonl` for every dimension.
pub fn stage_score(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.validate()?;
    let mut written = Vec::new();
    for unit in load_units(cfg)? {
        let entries: Vec<JudgmentEntry> = read_jsonl(&unit_dir(cfg, &unit).join("judgments.jsonl"))?;
        for corpus in &unit.corpora {
            let dir = dimension_dir(cfg, corpus);
            create_dir(&dir)?;
            let judged = judged_for(&entries, corpus, cfg.adapted);
            let table = score_dimension(cfg, corpus, &judged)?;
            let scores_path = dir.join("scores.tsv");
            write_file(&scores_path, &table.to_tsv())?;

            let defined = table.normalized_by_id();
            let scored: Vec<_> = corpus
                .instances
                .iter()
                .filter(|i| defined.contains_key(i.id.as_str()))
                .cloned()
                .collect();
            if scored.len() < corpus.len() {
                log::warn!(
                    "{}: {} items have no score and are left out of labeled.jsonl",
                    corpus.dimension,
                    corpus.len() - scored.len()
                );
            }
            let export = Corpus::new(corpus.dimension.clone(), corpus.split, scored)?;
            export_labeled(&export, &table, dir.join("labeled.jsonl"))?;
            written.push(scores_path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub annotations: usize,
    pub accepted: usize,
    pub failures: usize,
    pub retried: usize,
    pub fallback_uses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTuple {
    pub annotation_index: usize,
    pub tuple_index: usize,
    pub ids: Vec<String>,
    pub attempts: u32,
    pub reason: String,
    pub responses: Vec<String>,
}

/// Contents of `<dimension>/report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRunReport {
    pub dimension: String,
    pub protocol: Protocol,
    pub scale: Option<String>,
    pub k: Option<f64>,
    pub seed: u64,
    pub n_items: usize,
    pub n_tuples: usize,
    pub annotation: AnnotationSummary,
    pub pearson: Option<f64>,
    pub pearson_n: usize,
    pub shr: Option<f64>,
    pub shr_binning: Option<ShrBinning>,
    pub shr_iterations: usize,
    pub unscored_items: Vec<String>,
    pub warnings: Vec<String>,
    pub failed_tuples: Vec<FailedTuple>,
}

fn summarize(entries: &[JudgmentEntry]) -> (AnnotationSummary, Vec<FailedTuple>) {
    let failed: Vec<FailedTuple> = entries
        .iter()
        .filter_map(|e| {
            e.failure.as_ref().map(|reason| FailedTuple {
                annotation_index: e.annotation_index,
                tuple_index: e.tuple_index,
                ids: e.ids.clone(),
                attempts: e.attempts,
                reason: reason.clone(),
                responses: e.responses.clone(),
            })
        })
        .collect();
    let summary = AnnotationSummary {
        annotations: entries.len(),
        accepted: entries.len() - failed.len(),
        failures: failed.len(),
        retried: entries.iter().filter(|e| e.attempts > 1).count(),
        fallback_uses: entries.iter().filter(|e| e.used_fallback).count(),
    };
    (summary, failed)
}

fn round_metric(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

/// Correlates scores with gold and computes split-half reliability; writes
/// per-dimension and overall `report.json`.
pub fn stage_eval(cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for unit in load_units(cfg)? {
        let udir = unit_dir(cfg, &unit);
        let entries: Vec<JudgmentEntry> = read_jsonl(&udir.join("judgments.jsonl"))?;
        let n_tuples = TupleSet::from_jsonl(&read_file(&udir.join("design.jsonl"))?)?.len();
        let (annotation, failed) = summarize(&entries);
        for corpus in &unit.corpora {
            let dir = dimension_dir(cfg, corpus);
            let table = ScoreTable::from_tsv(&read_file(&dir.join("scores.tsv"))?, cfg.protocol, cfg.seed)?;
            let gold = corpus.gold_scores();
            let (pearson, pearson_n) = if gold.is_empty() {
                (None, 0)
            } else {
                match pearson_vs_reference(&table, &gold) {
                    Ok((r, n)) => (Some(round_metric(r)), n),
                    Err(e) => {
                        log::warn!("{}: no Pearson correlation: {e}", corpus.dimension);
                        (None, 0)
                    }
                }
            };
            let judged = judged_for(&entries, corpus, cfg.adapted);
            let mut warnings = Vec::new();
            let (shr, shr_binning) = if cfg.protocol.is_comparative() && !judged.is_empty() {
                match split_half_reliability_with(&judged, cfg.shr_iterations, cfg.seed, ShrBinning::Auto) {
                    Ok(r) => (Some(round_metric(r.mean)), Some(r.binning)),
                    Err(e) => {
                        warnings.push(format!("split-half reliability undefined: {e}"));
                        (None, None)
                    }
                }
            } else {
                (None, None)
            };
            let unscored: Vec<String> = table.undefined_ids().into_iter().map(String::from).collect();
            if !unscored.is_empty() {
                warnings.push(format!("{} items have no score", unscored.len()));
            }
            let report_row = DimensionRunReport {
                dimension: dimension_key(corpus),
                protocol: cfg.protocol,
                scale: cfg.scale.map(|s| s.to_string()),
                k: (cfg.protocol == Protocol::Bws).then_some(cfg.design.k),
                seed: cfg.seed,
                n_items: corpus.len(),
                n_tuples,
                annotation: annotation.clone(),
                pearson,
                pearson_n,
                shr,
                shr_binning,
                shr_iterations: cfg.shr_iterations,
                unscored_items: unscored,
                warnings,
                failed_tuples: failed.clone(),
            };
            write_file(
                &dir.join("report.json"),
                &(serde_json::to_string_pretty(&report_row).unwrap() + "\n"),
            )?;
            rows.push(DimensionReport {
                dimension: report_row.dimension,
                protocol: cfg.protocol.to_string(),
                scale: report_row.scale,
                k: report_row.k,
                pearson,
                shr,
                n_items: corpus.len(),
                seed: cfg.seed,
            });
        }
    }
    let overall = report(rows);
    write_file(&cfg.output_dir.join("report.json"), &overall.to_json())?;
    Ok(overall)
}

/// What a full run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: EvalReport,
    /// Per unit: batch statistics, including live request counts.
    pub batches: Vec<(String, BatchStats)>,
}

/// Runs every stage and writes the config snapshot.
pub fn run_annotation(cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join("config.toml"), &cfg.to_toml())?;
    stage_design(cfg)?;
    let batches = stage_annotate(cfg)?;
    stage_score(cfg)?;
    let report = stage_eval(cfg)?;
    Ok(RunSummary { report, batches })
}
