use super::*;
use crate::error::Error;

fn overrides(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn small_ensemble_config(out: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"
seed = 17
out = "{}"
workers = 2

[corpus]
source = "vowel_ensemble"

[vowel_ensemble]
n_segments = 6
segment_ms = 60.0
"#,
        out.display()
    );
    ExperimentConfig::from_toml(&text, &[], None).unwrap()
}

fn small_recognition_config(out: &std::path::Path, seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"
seed = {seed}
out = "{}"

[synth]
n_speakers = 3
utterances_per_speaker = 3
phones_per_utterance = 3

[recognition]
features = ["periodogram", "mt_mogdf"]
speaker_counts = [2, 3]
enroll_utterances = 2

[recognition.gmm]
components = 4
iterations = 3
"#,
        out.display()
    );
    ExperimentConfig::from_toml(&text, &[], None).unwrap()
}

#[test]
fn defaults_need_only_a_seed() {
    let cfg = ExperimentConfig::from_toml("seed = 1", &[], None).unwrap();
    assert_eq!(cfg.tapers.nw, 4.0);
    assert_eq!(cfg.ensemble.n_tapers, vec![2, 4, 8]);
    assert_eq!(cfg.recognition.gmm.components, 64);
    assert_eq!(cfg.recognition.cost.p_target, 0.001);
}

#[test]
fn missing_seed_is_a_config_error() {
    let err = ExperimentConfig::from_toml("", &[], None).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("seed")), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn overrides_reach_nested_keys() {
    let o = overrides(&[
        ("seed", "5"),
        ("tapers.nw", "3.5"),
        ("recognition.gmm.components", "8"),
        ("estimators.names", r#"["mogdf"]"#),
        ("out", "results/run1"),
    ]);
    let cfg = ExperimentConfig::from_toml("seed = 1\n[tapers]\nnw = 2.0\n", &o, None).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.tapers.nw, 3.5);
    assert_eq!(cfg.recognition.gmm.components, 8);
    assert_eq!(cfg.estimators.names, vec![crate::spectral::EstimatorKind::Mogdf]);
    assert_eq!(cfg.out, std::path::PathBuf::from("results/run1"));
}

#[test]
fn unknown_keys_and_bad_values_name_the_field() {
    let err = ExperimentConfig::from_toml("seed = 1\n[tapers]\nnww = 2.0\n", &[], None).unwrap_err();
    assert!(err.to_string().contains("nww"), "{err}");
    let err = ExperimentConfig::from_toml("seed = 1\n[estimators]\nnames = [\"welch\"]\n", &[], None).unwrap_err();
    assert!(err.to_string().contains("welch"), "{err}");
    let err = ExperimentConfig::from_toml("seed = 1\n[frames]\noverlap = 1.5\n", &[], None).unwrap_err();
    assert!(err.to_string().contains("frames.overlap"), "{err}");
    let err = ExperimentConfig::from_toml("seed = 1\n[recognition]\nspeaker_counts = [0]\n", &[], None).unwrap_err();
    assert!(err.to_string().contains("recognition.speaker_counts"), "{err}");
}

#[test]
fn missing_corpus_path_names_the_path() {
    let o = overrides(&[("corpus.source", "files"), ("corpus.root", "/no/such/corpus")]);
    let err = ExperimentConfig::from_toml("seed = 1", &o, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("/no/such/corpus"), "{err}");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = ExperimentConfig::from_toml("seed = 3\n[ensemble]\nbands_hz = [[0.0, 1000.0]]\n", &[], None).unwrap();
    let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), &[], None).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn ensemble_experiment_writes_every_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_ensemble_config(d.path());
    let out = run_ensemble_experiment(&cfg).unwrap();
    // 2 estimators x {2, 4, 8} x 2 domains
    assert_eq!(out.report_csvs.len(), 12);
    for p in &out.report_csvs {
        assert!(p.is_file());
        assert!(p.with_extension("json").is_file());
    }
    let dir = d.path().join("ensemble");
    assert!(dir.join("vowel/mt_mogdf_N8_cepstral.csv").is_file());
    assert!(dir.join("summary.csv").is_file());
    assert!(dir.join("config.toml").is_file());
    // one "all" row per report plus the c0-c12 cepstral range
    assert_eq!(out.summary.len(), 12 + 6);
}

#[test]
fn ensemble_experiment_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = small_ensemble_config(a.path());
    let mut cb = small_ensemble_config(b.path());
    ca.workers = 1;
    cb.workers = 3;
    let ra = run_ensemble_experiment(&ca).unwrap();
    run_ensemble_experiment(&cb).unwrap();
    for p in &ra.report_csvs {
        let rel = p.strip_prefix(a.path()).unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
    }
    assert_eq!(
        std::fs::read(a.path().join("ensemble/summary.csv")).unwrap(),
        std::fs::read(b.path().join("ensemble/summary.csv")).unwrap()
    );
}

#[test]
fn protocol_splits_enrolment_and_tests() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_recognition_config(d.path(), 2);
    let corpus = prepare_corpus(&cfg).unwrap();
    let p = build_protocol(&corpus, 2, 2).unwrap();
    assert_eq!(p.speakers, vec!["spk000", "spk001"]);
    assert_eq!(p.enroll["spk000"], vec!["spk000_u000", "spk000_u001"]);
    // 2 models x 2 test utterances
    assert_eq!(p.trials.len(), 4);
    assert_eq!(p.trials.iter().filter(|t| t.target).count(), 2);
    assert!(build_protocol(&corpus, 4, 2).is_err());
    assert!(build_protocol(&corpus, 2, 3).is_err());
}

#[test]
fn recognition_table_shape() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_recognition_config(d.path(), 4);
    let out = run_recognition_experiment(&cfg).unwrap();
    assert_eq!(out.cells.len(), 4);
    let text = std::fs::read_to_string(&out.table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,n_speakers,periodogram,mt_mogdf");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("eer_percent,2,"));
    assert!(lines[4].starts_with("dcf_x100,3,"));
    for c in &out.cells {
        assert!((0.0..=1.0).contains(&c.eer));
    }
    let rec = d.path().join("recognition");
    assert!(rec.join("scores/mt_mogdf_3spk.csv").is_file());
    assert!(rec.join("trials_2spk.csv").is_file());
}

#[test]
fn recognition_schema_is_seed_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_recognition_experiment(&small_recognition_config(a.path(), 4)).unwrap();
    let rb = run_recognition_experiment(&small_recognition_config(b.path(), 5)).unwrap();
    let head = |p: &std::path::Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
    };
    assert_eq!(head(&ra.table), head(&rb.table));
    let sa = std::fs::read(a.path().join("recognition/scores/periodogram_3spk.csv")).unwrap();
    let sb = std::fs::read(b.path().join("recognition/scores/periodogram_3spk.csv")).unwrap();
    assert_ne!(sa, sb);
}

#[test]
fn oversized_speaker_sweep_fails_at_run_time() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = small_recognition_config(d.path(), 1);
    cfg.recognition.speaker_counts = vec![5];
    let err = run_recognition_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("recognition.speaker_counts"), "{err}");
}
