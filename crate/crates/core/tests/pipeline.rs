use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use popgen::chord::{timeline_steps, ChangeWeights};
use popgen::harmony::{decorate_progression, DecorationHmm, StyleWeights};
use popgen::midi::import_midi;
use popgen::persist;
use popgen::pipeline::{run_pipeline, PipelineConfig, Stage};
use popgen::progression::{ingest_chord_corpus, load_progression};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_config() -> PipelineConfig {
    PipelineConfig::load(&fixtures().join("pipeline.json")).unwrap()
}

#[test]
fn jazz_weights_decorate_the_loop() {
    let corpus = ingest_chord_corpus(&fixtures().join("corpus"), 120.0).unwrap();
    assert!(corpus.failed_files.is_empty());
    let model = DecorationHmm::train(&corpus.progressions(), 0.5).unwrap();
    let input = load_progression(&fixtures().join("progression.txt"), Some(64)).unwrap();
    let out = decorate_progression(&model, &input, 10, &StyleWeights::JAZZ, &ChangeWeights::default()).unwrap();
    assert!(out.chords.iter().any(|c| c.decorations().adds().next().is_some()));
    for (a, b) in out.chords.iter().zip(&input) {
        assert_eq!((a.root(), a.chord_type(), a.bass(), a.duration()), (b.root(), b.chord_type(), b.bass(), b.duration()));
    }
}

#[test]
fn saved_model_matches_corpus_training() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest_chord_corpus(&fixtures().join("corpus"), 120.0).unwrap();
    let model = DecorationHmm::train(&corpus.progressions(), 0.5).unwrap();
    let model_path = dir.path().join("hmm.json");
    fs::write(&model_path, persist::to_json(&model)).unwrap();

    let from_corpus = fixture_config();
    let mut from_file = from_corpus.clone();
    from_file.hmm_corpus = None;
    from_file.hmm_model = Some(model_path);
    from_file.validate().unwrap();
    let a = run_pipeline(&from_corpus).unwrap();
    let b = run_pipeline(&from_file).unwrap();
    assert_eq!(a.midi, b.midi);
    assert_eq!(a.report_json, b.report_json);
}

#[test]
fn report_contents() {
    let out = run_pipeline(&fixture_config()).unwrap();
    let report: serde_json::Value = serde_json::from_str(&out.report_json).unwrap();
    assert_eq!(report["bars"].as_array().unwrap().len(), 4);
    assert_eq!(report["decorated_progression"].as_array().unwrap().len(), 4);
    assert_eq!(report["seeds"]["lead"]["layer_seeds"].as_array().unwrap().len(), 6);
    assert!(report["decoration"]["rank"].is_u64());
    assert!(report["implementation_choices"]["tempo"].is_string());
    assert_eq!(timeline_steps(&out.arrangement.chords), 64);

    let midi = import_midi(&out.midi).unwrap();
    assert_eq!(midi.tracks.len(), 3);
    // tempo is stored in whole microseconds per quarter
    assert!((midi.tempo_bpm.unwrap() - 90.0).abs() < 1e-3);
    assert_eq!(midi.beats_per_bar, Some(4));
}

#[test]
fn seeds_change_output() {
    let base = fixture_config();
    let outputs: BTreeSet<Vec<u8>> = (0..5)
        .map(|s| {
            let cfg = PipelineConfig {
                master_seed: s,
                ..base.clone()
            };
            run_pipeline(&cfg).unwrap().midi
        })
        .collect();
    assert!(outputs.len() > 1);
}

#[test]
fn errors_carry_stage() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixtures().join("progression.txt"), dir.path().join("progression.txt")).unwrap();
    fs::write(dir.path().join("hmm.json"), r#"{"format": "pitch-context", "version": 1, "model": {}}"#).unwrap();
    let text = r#"{"version": 1, "progression": "progression.txt", "hmm_model": "hmm.json"}"#;
    let cfg = PipelineConfig::from_json(text, dir.path()).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Harmony);
    assert!(err.to_string().starts_with("harmony model stage failed"));

    let text = r#"{"version": 1, "progression": "progression.txt", "phrase": {"bars": 2, "beats_per_bar": 4}}"#;
    let cfg = PipelineConfig::from_json(text, dir.path()).unwrap();
    assert_eq!(run_pipeline(&cfg).unwrap_err().stage, Stage::Progression);
}

#[test]
fn schema_lists_every_config_field() {
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixtures().join("../schema/pipeline-config.schema.json")).unwrap())
            .unwrap();
    let documented: BTreeSet<&str> = schema["properties"].as_object().unwrap().keys().map(|k| k.as_str()).collect();
    let config = serde_json::to_value(fixture_config()).unwrap();
    let fields: BTreeSet<&str> = config.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(documented, fields);
    assert_eq!(schema["properties"]["version"]["const"], 1);
}
