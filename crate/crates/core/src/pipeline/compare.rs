use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::backends::{run_batch, Backend, SimulatedAnnotator, SimulatedAnnotatorConfig, TranscriptLog};
use crate::corpus::{Corpus, Split, TextInstance};
use crate::design::{
    design_bws_tuples, design_pc_pairs, design_rs_units, Protocol, TupleDesignConfig, TupleSet,
};
use crate::evaluation::{pearson_vs_reference, split_half_reliability_with, ShrBinning};
use crate::prompting::{render_prompt, PromptBundle, RatingScaleSpec};
use crate::scoring::{score_counting, score_ratings, Aggregation};

fn default_n() -> usize {
    100
}
fn default_sigma() -> f64 {
    0.15
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_ks() -> Vec<f64> {
    vec![2.0, 3.0, 6.0, 12.0]
}
fn default_protocols() -> Vec<Protocol> {
    Protocol::ALL.to_vec()
}
fn default_scale() -> RatingScaleSpec {
    "D-10".parse().expect("known variant")
}
fn default_iterations() -> usize {
    50
}
fn default_workers() -> usize {
    4
}

/// Settings for the simulated protocol sweep over synthetic texts with
/// uniform latent scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    #[serde(default = "default_n")]
    pub n_items: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Best-worst budgets as multiples of the item count.
    #[serde(default = "default_ks")]
    pub k_values: Vec<f64>,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default = "default_scale")]
    pub scale: RatingScaleSpec,
    #[serde(default = "default_iterations")]
    pub shr_iterations: usize,
    #[serde(default)]
    pub pc_subset: Option<usize>,
    #[serde(default = "default_workers")]
    pub max_in_flight: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            n_items: default_n(),
            noise_sigma: default_sigma(),
            seeds: default_seeds(),
            k_values: default_ks(),
            protocols: default_protocols(),
            scale: default_scale(),
            shr_iterations: default_iterations(),
            pc_subset: None,
            max_in_flight: default_workers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub protocol: Protocol,
    pub k: Option<f64>,
    pub seed: u64,
    pub n_tuples: usize,
    pub pearson: f64,
    pub shr: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub protocol: Protocol,
    pub k: Option<f64>,
    pub runs: usize,
    pub mean_pearson: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub sd_pearson: f64,
    pub mean_shr: Option<f64>,
}

/// Best-worst at one budget against single-text rating, seed by seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KWin {
    pub k: f64,
    pub wins: usize,
    pub losses: usize,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ComparisonConfig,
    pub rows: Vec<ComparisonRow>,
    pub summary: Vec<ComparisonSummary>,
    pub bws_vs_rs: Vec<KWin>,
}

impl ComparisonReport {
    pub fn summary_for(&self, protocol: Protocol, k: Option<f64>) -> Option<&ComparisonSummary> {
        self.summary.iter().find(|s| s.protocol == protocol && s.k == k)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>6} {:>9} {:>7} {:>8}", "protocol", "k", "pearson", "sd", "shr");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>9.1} {:>7.1} {:>8}",
                s.protocol.as_str(),
                s.k.map_or("-".into(), |k| k.to_string()),
                s.mean_pearson * 100.0,
                s.sd_pearson * 100.0,
                s.mean_shr.map_or("-".into(), |v| format!("{:.1}", v * 100.0)),
            );
        }
        for w in &self.bws_vs_rs {
            let _ = writeln!(
                out,
                "bws k={} vs rs: {} wins, {} losses, mean Δ {:+.1}",
                w.k,
                w.wins,
                w.losses,
                w.mean_delta * 100.0
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize") + "\n"
    }
}

/// Synthetic corpus whose gold scores are the latent scores, drawn uniformly.
pub(crate) fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..n)
        .map(|i| TextInstance {
            id: format!("s{i:04}"),
            text: format!("synthetic text number {i}"),
            dimension: "joy".into(),
            gold_score: Some(rng.random::<f64>()),
        })
        .collect();
    Corpus::new("joy", Split::Train, instances).expect("synthetic corpus is valid")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

struct Trial<'a> {
    cfg: &'a ComparisonConfig,
    corpus: &'a Corpus,
    gold: BTreeMap<String, f64>,
    seed: u64,
}

impl Trial<'_> {
    fn run(&self, protocol: Protocol, k: Option<f64>) -> Result<ComparisonRow, PipelineError> {
        let c = self.corpus;
        let tuples: TupleSet = match protocol {
            Protocol::Bws => {
                let k = k.expect("best-worst trials carry k");
                design_bws_tuples(c, &TupleDesignConfig::bws(k, self.seed))?
            }
            Protocol::Pc => design_pc_pairs(c, self.cfg.pc_subset, self.seed)?,
            Protocol::Rs => design_rs_units(c, false, self.seed)?,
            Protocol::RsT => design_rs_units(c, true, self.seed)?,
        };
        let scale = (!protocol.is_comparative()).then_some(self.cfg.scale);
        let lookup = c.text_index();
        let prompts = tuples
            .tuples
            .iter()
            .map(|t| {
                let texts: Vec<(String, String)> = t
                    .iter()
                    .map(|id| (id.clone(), lookup[id.as_str()].to_string()))
                    .collect();
                render_prompt(protocol, &texts, &c.dimension, scale)
            })
            .collect::<Result<Vec<PromptBundle>, _>>()?;

        let sim = SimulatedAnnotatorConfig::perfect(self.gold.clone()).with_noise(self.cfg.noise_sigma, self.seed);
        let backend = Backend::new(Box::new(SimulatedAnnotator::new(sim)?))
            .with_max_in_flight(self.cfg.max_in_flight)
            .with_backoff(Duration::ZERO);
        let batch = run_batch(&prompts, &backend, &TranscriptLog::in_memory());
        let judged = batch.judged_tuples(&prompts);
        let ids = c.ids();
        let table = if protocol.is_comparative() {
            score_counting(&judged, &ids)?
        } else {
            score_ratings(&judged, &ids, Aggregation::Single)?
        };
        let (pearson, _) = pearson_vs_reference(&table, &self.gold)?;
        let shr = if protocol.is_comparative() {
            split_half_reliability_with(&judged, self.cfg.shr_iterations, self.seed, ShrBinning::Tuples)
                .ok()
                .map(|r| r.mean)
        } else {
            None
        };
        Ok(ComparisonRow {
            protocol,
            k,
            seed: self.seed,
            n_tuples: tuples.len(),
            pearson,
            shr,
            failures: batch.stats.failures,
        })
    }
}

/// Runs every protocol (and every best-worst budget) on fresh synthetic data
/// per seed and summarizes Pearson-vs-latent and split-half reliability.
pub fn run_protocol_comparison(cfg: &ComparisonConfig) -> Result<ComparisonReport, PipelineError> {
    if cfg.n_items < 4 {
        return Err(PipelineError::Config(format!("n_items must be ≥ 4, got {}", cfg.n_items)));
    }
    if cfg.seeds.is_empty() || cfg.protocols.is_empty() {
        return Err(PipelineError::Config("need at least one seed and one protocol".into()));
    }
    if cfg.protocols.contains(&Protocol::Bws) && cfg.k_values.is_empty() {
        return Err(PipelineError::Config("bws needs at least one k".into()));
    }
    if cfg.noise_sigma.is_nan() || cfg.noise_sigma < 0.0 {
        return Err(PipelineError::Config("noise_sigma must be ≥ 0".into()));
    }

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let corpus = synthetic_corpus(cfg.n_items, seed);
        let trial = Trial {
            cfg,
            gold: corpus.gold_scores(),
            corpus: &corpus,
            seed,
        };
        for &protocol in &cfg.protocols {
            if protocol == Protocol::Bws {
                for &k in &cfg.k_values {
                    rows.push(trial.run(protocol, Some(k))?);
                }
            } else {
                rows.push(trial.run(protocol, None)?);
            }
        }
    }

    let mut keys: Vec<(Protocol, Option<f64>)> = Vec::new();
    for r in &rows {
        if !keys.contains(&(r.protocol, r.k)) {
            keys.push((r.protocol, r.k));
        }
    }
    let summary: Vec<ComparisonSummary> = keys
        .into_iter()
        .map(|(protocol, k)| {
            let group: Vec<&ComparisonRow> = rows.iter().filter(|r| r.protocol == protocol && r.k == k).collect();
            let pearsons: Vec<f64> = group.iter().map(|r| r.pearson).collect();
            let shrs: Vec<f64> = group.iter().filter_map(|r| r.shr).collect();
            ComparisonSummary {
                protocol,
                k,
                runs: group.len(),
                mean_pearson: mean(&pearsons),
                sd_pearson: sample_sd(&pearsons),
                mean_shr: (!shrs.is_empty()).then(|| mean(&shrs)),
            }
        })
        .collect();

    let rs_by_seed: BTreeMap<u64, f64> = rows
        .iter()
        .filter(|r| r.protocol == Protocol::Rs)
        .map(|r| (r.seed, r.pearson))
        .collect();
    let mut bws_vs_rs = Vec::new();
    if !rs_by_seed.is_empty() {
        for &k in &cfg.k_values {
            let deltas: Vec<f64> = rows
                .iter()
                .filter(|r| r.protocol == Protocol::Bws && r.k == Some(k))
                .filter_map(|r| rs_by_seed.get(&r.seed).map(|rs| r.pearson - rs))
                .collect();
            if deltas.is_empty() {
                continue;
            }
            bws_vs_rs.push(KWin {
                k,
                wins: deltas.iter().filter(|d| **d > 0.0).count(),
                losses: deltas.iter().filter(|d| **d < 0.0).count(),
                mean_delta: mean(&deltas),
            });
        }
    }
    Ok(ComparisonReport {
        config: cfg.clone(),
        rows,
        summary,
        bws_vs_rs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_annotator_reaches_ceiling() {
        let cfg = ComparisonConfig {
            n_items: 24,
            noise_sigma: 0.0,
            seeds: vec![1],
            k_values: vec![2.0],
            scale: "B-100".parse().unwrap(),
            shr_iterations: 5,
            ..ComparisonConfig::default()
        };
        let report = run_protocol_comparison(&cfg).unwrap();
        assert_eq!(report.rows.len(), 4);
        for r in &report.rows {
            assert_eq!(r.failures, 0);
            let floor = if r.protocol.is_comparative() { 0.95 } else { 0.999 };
            assert!(r.pearson > floor, "{:?} {}", r.protocol, r.pearson);
        }
        assert_eq!(report.bws_vs_rs.len(), 1);
    }

    #[test]
    fn synthetic_corpus_is_seeded() {
        let a = synthetic_corpus(10, 4);
        let b = synthetic_corpus(10, 4);
        assert_eq!(a, b);
        assert_ne!(a, synthetic_corpus(10, 5));
    }
}
