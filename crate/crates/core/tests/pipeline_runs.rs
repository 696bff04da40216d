use std::fs;
use std::path::{Path, PathBuf};

use bestworst::backends::{read_transcript, BackendConfig, BackendKind, SimulatedAnnotatorConfig};
use bestworst::corpus::CorpusFormat;
use bestworst::design::{Protocol, TupleSet};
use bestworst::pipeline::{
    run_annotation, stage_annotate, stage_design, stage_eval, stage_score, CorpusEntry,
    PipelineError, RunConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EMOTIONS: [&str; 6] = ["anger", "fear", "joy", "sadness", "disgust", "surprise"];

fn write_corpus(dir: &Path, dimension: &str, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("id\ttweet\temotion\tscore\n");
    for i in 0..n {
        let score: f64 = rng.random();
        out.push_str(&format!("2017-{i:05}\tpost number {i} about my day\t{dimension}\t{score:.3}\n"));
    }
    let path = dir.join(format!("{dimension}-train.tsv"));
    fs::write(&path, out).unwrap();
    path
}

fn sim_config(dir: &Path, protocol: Protocol, corpus: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::new(dir.join("out"), protocol);
    cfg.seed = 5;
    cfg.shr_iterations = 20;
    cfg.corpora.push(CorpusEntry {
        path: corpus,
        format: CorpusFormat::AitTsv,
    });
    cfg.backend = BackendConfig {
        backoff_base_ms: 0,
        ..BackendConfig::simulated()
    };
    cfg.simulator = Some(SimulatedAnnotatorConfig::perfect(Default::default()).with_noise(0.1, 3));
    cfg
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn simulator_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "joy", 100, 1);
    let cfg = sim_config(dir.path(), Protocol::Bws, corpus);
    let summary = run_annotation(&cfg).unwrap();

    let (unit, stats) = &summary.batches[0];
    assert_eq!(unit, "joy");
    assert_eq!(stats.tuples, 200);
    assert_eq!(stats.failures, 0);
    assert_eq!(stats.live_requests, 200);

    let out = dir.path().join("out");
    for f in ["config.toml", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for f in [
        "manifest.json",
        "design.jsonl",
        "transcripts.jsonl",
        "judgments.jsonl",
        "scores.tsv",
        "labeled.jsonl",
        "report.json",
    ] {
        assert!(out.join("joy").join(f).is_file(), "{f}");
    }
    let design = TupleSet::from_jsonl(&fs::read_to_string(out.join("joy/design.jsonl")).unwrap()).unwrap();
    assert_eq!(design.len(), 200);
    assert_eq!(read_transcript(out.join("joy/transcripts.jsonl")).unwrap().len(), 200);

    let labeled = fs::read_to_string(out.join("joy/labeled.jsonl")).unwrap();
    assert_eq!(labeled.lines().count(), 100);
    let row: serde_json::Value = serde_json::from_str(labeled.lines().next().unwrap()).unwrap();
    for key in ["id", "text", "dimension", "score"] {
        assert!(row.get(key).is_some(), "{key}");
    }

    let pearson = summary.report.rows[0].pearson.unwrap();
    assert!(pearson > 0.85, "{pearson}");
    let snapshot = RunConfig::from_toml(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(snapshot, cfg);
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "fear", 40, 2);
    let mut a = sim_config(dir.path(), Protocol::Bws, corpus.clone());
    a.output_dir = dir.path().join("a");
    let mut b = a.clone();
    b.output_dir = dir.path().join("b");
    run_annotation(&a).unwrap();
    run_annotation(&b).unwrap();
    for f in ["design.jsonl", "judgments.jsonl", "scores.tsv", "labeled.jsonl", "report.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.output_dir.join("fear").join(f)).unwrap(),
            fs::read(b.output_dir.join("fear").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        fs::read(a.output_dir.join("report.json")).unwrap(),
        fs::read(b.output_dir.join("report.json")).unwrap()
    );
}

#[test]
fn interrupted_run_only_requests_what_is_missing() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "joy", 30, 3);
    let mut cfg = sim_config(dir.path(), Protocol::Bws, corpus);
    cfg.simulator.as_mut().unwrap().malformed_rate = 0.2;

    let mut full = cfg.clone();
    full.output_dir = dir.path().join("full");
    let complete = run_annotation(&full).unwrap();
    let total = complete.batches[0].1.live_requests;

    // a run that died after writing part of its transcript, mid-line
    stage_design(&cfg).unwrap();
    let first = stage_annotate(&cfg).unwrap();
    assert_eq!(first[0].1.live_requests, total);
    let transcript = cfg.output_dir.join("joy/transcripts.jsonl");
    let text = fs::read_to_string(&transcript).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let kept = lines.len() / 3;
    let mut cut = lines[..kept].join("\n");
    cut.push('\n');
    cut.push_str(&lines[kept][..lines[kept].len() / 2]);
    fs::write(&transcript, cut).unwrap();

    let resumed = stage_annotate(&cfg).unwrap();
    let stats = &resumed[0].1;
    assert_eq!(stats.recorded_requests, kept as u64);
    assert_eq!(stats.live_requests, total - kept as u64);
    stage_score(&cfg).unwrap();
    stage_eval(&cfg).unwrap();
    for f in ["judgments.jsonl", "scores.tsv", "report.json"] {
        assert_eq!(
            fs::read(cfg.output_dir.join("joy").join(f)).unwrap(),
            fs::read(full.output_dir.join("joy").join(f)).unwrap(),
            "{f}"
        );
    }

    // running again replays everything
    let again = stage_annotate(&cfg).unwrap();
    assert_eq!(again[0].1.live_requests, 0);
}

#[test]
fn resume_with_different_inputs_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "joy", 12, 4);
    let mut cfg = sim_config(dir.path(), Protocol::Bws, corpus);
    run_annotation(&cfg).unwrap();
    cfg.seed += 1;
    let err = run_annotation(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::ResumeMismatch { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn rating_protocols_run_end_to_end() {
    for protocol in [Protocol::Rs, Protocol::RsT] {
        let dir = tempfile::tempdir().unwrap();
        let corpus = write_corpus(dir.path(), "sadness", 25, 5);
        let mut cfg = sim_config(dir.path(), protocol, corpus);
        cfg.scale = Some("D-10".parse().unwrap());
        let summary = run_annotation(&cfg).unwrap();
        let row = &summary.report.rows[0];
        assert!(row.pearson.unwrap() > 0.8);
        assert_eq!(row.shr, None);
        let expected = if protocol == Protocol::Rs { 25 } else { 7 };
        assert_eq!(summary.batches[0].1.tuples, expected);
    }
}

#[test]
fn paired_comparison_subset_exports_scored_items_only() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "anger", 20, 6);
    let mut cfg = sim_config(dir.path(), Protocol::Pc, corpus);
    cfg.pc_subset = Some(8);
    let summary = run_annotation(&cfg).unwrap();
    assert_eq!(summary.batches[0].1.tuples, 28);
    let out = cfg.output_dir.join("anger");
    assert_eq!(fs::read_to_string(out.join("labeled.jsonl")).unwrap().lines().count(), 8);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["unscored_items"].as_array().unwrap().len(), 12);
}

#[test]
fn repeated_annotations_use_annotation_split() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "joy", 20, 7);
    let mut cfg = sim_config(dir.path(), Protocol::Bws, corpus);
    cfg.repeats_per_tuple = 2;
    cfg.simulator = Some(SimulatedAnnotatorConfig::perfect(Default::default()));
    let summary = run_annotation(&cfg).unwrap();
    assert_eq!(summary.batches[0].1.tuples, 80);
    let shr = summary.report.rows[0].shr.unwrap();
    assert!((shr - 1.0).abs() < 1e-9, "{shr}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.output_dir.join("joy/report.json")).unwrap()).unwrap();
    assert_eq!(report["shr_binning"], "annotations");
}

#[test]
fn adapted_prompts_score_all_six_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(dir.path().join("out"), Protocol::Bws);
    cfg.adapted = true;
    cfg.shr_iterations = 10;
    for (i, emo) in EMOTIONS.iter().enumerate() {
        let path = write_corpus(dir.path(), emo, 16, 10 + i as u64);
        cfg.corpora.push(CorpusEntry {
            path,
            format: CorpusFormat::AitTsv,
        });
    }
    cfg.backend.backoff_base_ms = 0;
    cfg.simulator = Some(SimulatedAnnotatorConfig::perfect(Default::default()));
    let summary = run_annotation(&cfg).unwrap();
    assert_eq!(summary.batches.len(), 1);
    assert_eq!(summary.batches[0].0, "adapted");
    assert_eq!(summary.report.rows.len(), 6);
    for row in &summary.report.rows {
        assert!(row.pearson.unwrap() > 0.85, "{} {:?}", row.dimension, row.pearson);
        assert!(cfg.output_dir.join(&row.dimension).join("labeled.jsonl").is_file());
    }
    assert!(cfg.output_dir.join("adapted/transcripts.jsonl").is_file());
}

#[test]
fn adapted_needs_matching_texts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(dir.path().join("out"), Protocol::Bws);
    cfg.adapted = true;
    for (i, emo) in EMOTIONS.iter().enumerate() {
        let path = write_corpus(dir.path(), emo, 10 + i, 1);
        cfg.corpora.push(CorpusEntry {
            path,
            format: CorpusFormat::AitTsv,
        });
    }
    cfg.simulator = Some(SimulatedAnnotatorConfig::perfect(Default::default()));
    assert!(matches!(run_annotation(&cfg), Err(PipelineError::Config(_))));
}

#[test]
fn missing_api_key_fails_before_any_request() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), "joy", 8, 8);
    let mut cfg = sim_config(dir.path(), Protocol::Bws, corpus);
    cfg.backend = BackendConfig {
        kind: BackendKind::HttpChat,
        // nothing listens here; the run must stop before connecting
        endpoint_url: Some("http://127.0.0.1:9/v1/chat/completions".into()),
        model_name: "any".into(),
        api_key_env: Some("BESTWORST_TEST_KEY_THAT_IS_NOT_SET".into()),
        ..BackendConfig::default()
    };
    let err = run_annotation(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    assert!(err.to_string().contains("BESTWORST_TEST_KEY_THAT_IS_NOT_SET"));
    assert!(!cfg.output_dir.join("joy/transcripts.jsonl").exists());
}

#[test]
fn replay_fixture_reproduces_recorded_scores() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let mut cfg = RunConfig::load(fixture("replay/run.toml")).unwrap();
        cfg.output_dir = dir.path().join(run);
        let summary = run_annotation(&cfg).unwrap();
        assert_eq!(summary.batches[0].1.live_requests, 0);
        assert_eq!(summary.batches[0].1.failures, 1);
        outputs.push(cfg.output_dir);
    }
    let expected = fixture("replay/expected");
    for (produced, stored) in [
        ("joy/scores.tsv", "scores.tsv"),
        ("joy/report.json", "report.json"),
        ("report.json", "overall_report.json"),
    ] {
        let want = fs::read(expected.join(stored)).unwrap();
        for out in &outputs {
            assert_eq!(fs::read(out.join(produced)).unwrap(), want, "{produced}");
        }
    }
}
