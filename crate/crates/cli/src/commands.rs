use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use mtgd::corpus::{frame_len_samples, frame_signal, read_audio};
use mtgd::experiment::{
    build_estimator, build_protocol, build_tapers, enroll_speakers, prepare_corpus, run_ensemble_experiment,
    run_recognition_experiment, score_trials, train_ubm, utterance_features, with_workers, write_config_snapshot,
    ExperimentConfig, Utterance,
};
use mtgd::export::{format_g17, write_csv, write_json};
use mtgd::features::extract_features;
use mtgd::recognition::{compute_eer_dcf, read_scores, read_trials, write_scores, write_trials, ModelFile, TrialScores};
use mtgd::spectral::{bin_frequencies, Estimator, EstimatorKind};
use mtgd::synth::generate_corpus;
use mtgd::{Error, Result};
use serde_json::json;

use crate::Command;

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

pub fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<()> {
    match cmd {
        Command::GenCorpus => gen_corpus(cfg),
        Command::Tapers { len, sample_rate } => tapers(cfg, *len, *sample_rate),
        Command::Estimate {
            input,
            estimator,
            frame,
        } => estimate(cfg, input, *estimator, *frame),
        Command::Ensemble => ensemble(cfg),
        Command::Features { input, feature } => features(cfg, input.as_deref(), *feature),
        Command::TrainUbm { feature, speakers } => train(cfg, *feature, *speakers),
        Command::Enroll { ubm } => enroll(cfg, ubm.as_deref()),
        Command::Score { ubm, trials } => score(cfg, ubm.as_deref(), trials.as_deref()),
        Command::Evaluate { scores } => evaluate(cfg, scores),
        Command::Report => report(cfg),
    }
}

fn gen_corpus(cfg: &ExperimentConfig) -> Result<()> {
    let root = cfg.corpus_root();
    let m = with_workers(cfg.workers, || generate_corpus(&cfg.synth, cfg.seed, &root))?;
    say!(
        "{} speakers, {} utterances written to {}",
        m.speakers.len(),
        m.utterances.len(),
        root.display()
    );
    Ok(())
}

fn tapers(cfg: &ExperimentConfig, len: Option<usize>, sample_rate: u32) -> Result<()> {
    let len = len.unwrap_or_else(|| frame_len_samples(cfg.frames.frame_ms, sample_rate));
    let set = build_tapers(cfg, len, cfg.tapers.n)?;
    let out = &cfg.out;
    mtgd::tapers::write_tapers(&set, out.join("tapers.csv"), Some(&out.join("weights.csv")))?;
    let (max_diag, max_off) = set.orthonormality_error();
    write_json(
        out.join("tapers.json"),
        &json!({
            "family": set.family(),
            "len": set.len(),
            "count": set.count(),
            "time_bandwidth": set.time_bandwidth(),
            "eigenvalues": set.eigenvalues(),
            "weights": set.weights(),
            "orthonormality_error": {"diagonal": max_diag, "off_diagonal": max_off},
            "config": cfg,
        }),
    )?;
    say!("{} {} tapers of length {len} written to {}", set.count(), set.family(), out.display());
    if let Some(ev) = set.eigenvalues() {
        for (k, l) in ev.iter().enumerate() {
            say!("  lambda_{k} = {l:.12}");
        }
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

fn estimate(cfg: &ExperimentConfig, input: &Path, kind: Option<EstimatorKind>, frame: Option<usize>) -> Result<()> {
    let kind = kind.unwrap_or(cfg.estimators.names[0]);
    let w = read_audio(input, cfg.corpus.format)?;
    let frames = frame_signal(&w, cfg.frames.frame_ms, cfg.frames.overlap)?;
    let est = build_estimator(cfg, kind, frames.frame_len(), cfg.tapers.n)?;
    let name = format!("{}_{kind}", stem(input));
    match frame {
        Some(i) => {
            if i >= frames.len() {
                return Err(Error::InvalidArgument(format!("frame {i} out of range (0..{})", frames.len())));
            }
            let row = frames.frame(i).to_vec();
            let e = est.estimate(&row)?;
            let base = cfg.out.join(format!("{name}_f{i}"));
            e.write_csv(base.with_extension("csv"), w.sample_rate())?;
            e.write_json(base.with_extension("json"), w.sample_rate())?;
            say!("{}", base.with_extension("csv").display());
        }
        None => {
            let rows = with_workers(cfg.workers, || {
                use rayon::prelude::*;
                (0..frames.len())
                    .into_par_iter()
                    .map(|i| {
                        est.estimate(&frames.frame(i).to_vec()).map_err(|e| Error::Frame {
                            index: i,
                            source: Box::new(e),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let hz = bin_frequencies(est.bins() * 2 - 2, w.sample_rate());
            let mut header = vec!["frame".to_string()];
            header.extend(hz.iter().map(|h| format!("hz_{}", format_g17(*h))));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let path = cfg.out.join(format!("{name}.csv"));
            write_csv(
                &path,
                &header,
                rows.iter().enumerate().map(|(i, e)| {
                    std::iter::once(i.to_string())
                        .chain(e.values().iter().map(|v| format_g17(*v)))
                        .collect::<Vec<_>>()
                }),
            )?;
            write_json(
                cfg.out.join(format!("{name}.json")),
                &json!({"input": input, "estimator": kind, "params": est.params(), "frames": frames.len(),
                        "sample_rate": w.sample_rate(), "config": cfg}),
            )?;
            say!("{} frames written to {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn ensemble(cfg: &ExperimentConfig) -> Result<()> {
    let outcome = run_ensemble_experiment(cfg)?;
    say!("{:<8} {:<12} {:>3} {:<9} {:<10} {:>12} {:>12} {:>12}", "label", "estimator", "N", "domain", "band", "|bias|", "variance", "mse");
    for r in &outcome.summary {
        say!(
            "{:<8} {:<12} {:>3} {:<9} {:<10} {:>12.6} {:>12.6} {:>12.6}",
            r.label,
            r.estimator.to_string(),
            r.n_tapers.map_or_else(|| "-".into(), |n| n.to_string()),
            r.domain.to_string(),
            r.band,
            r.summary.mean_abs_bias,
            r.summary.mean_variance,
            r.summary.mean_mse
        );
    }
    say!("{} reports written under {}", outcome.report_csvs.len(), cfg.out.join("ensemble").display());
    Ok(())
}

fn features(cfg: &ExperimentConfig, input: Option<&Path>, kind: Option<EstimatorKind>) -> Result<()> {
    let kinds: Vec<EstimatorKind> = kind.map_or_else(|| cfg.recognition.features.clone(), |k| vec![k]);
    with_workers(cfg.workers, || {
        let dir = cfg.out.join("features");
        if let Some(input) = input {
            let w = read_audio(input, cfg.corpus.format)?;
            let frames = frame_signal(&w, cfg.frames.frame_ms, cfg.frames.overlap)?;
            for &k in &kinds {
                let est = build_estimator(cfg, k, frames.frame_len(), cfg.tapers.n)?;
                let f = extract_features(&frames, &est, &cfg.features)?;
                let base = dir.join(k.name()).join(stem(input));
                f.write_csv(base.with_extension("csv"))?;
                f.write_json(base.with_extension("json"))?;
                say!("{k}: {} x {} written to {}", f.len(), f.dim(), base.with_extension("csv").display());
            }
            return Ok(());
        }
        let corpus = prepare_corpus(cfg)?;
        let utts: Vec<&Utterance> = corpus.utterances.iter().collect();
        for &k in &kinds {
            let feats = utterance_features(cfg, k, &utts)?;
            for (id, f) in &feats {
                let base = dir.join(k.name()).join(id);
                f.write_csv(base.with_extension("csv"))?;
                f.write_json(base.with_extension("json"))?;
            }
            say!("{k}: {} utterances written to {}", feats.len(), dir.join(k.name()).display());
        }
        write_config_snapshot(cfg, &dir)
    })
}

fn model_dir(cfg: &ExperimentConfig, kind: EstimatorKind) -> PathBuf {
    cfg.out.join("models").join(kind.name())
}

fn feature_kind(file: &ModelFile) -> Result<EstimatorKind> {
    file.features
        .get("estimator")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::InvalidData(format!("model {} does not record its feature type", file.id)))?
        .parse()
}

fn protocol_speakers(file: &ModelFile) -> Result<usize> {
    file.features
        .get("speakers")
        .and_then(|v| v.as_u64())
        .map(|v| v as usize)
        .ok_or_else(|| Error::InvalidData(format!("model {} does not record its speaker count", file.id)))
}

fn train(cfg: &ExperimentConfig, kind: Option<EstimatorKind>, speakers: Option<usize>) -> Result<()> {
    let kind = kind.unwrap_or(EstimatorKind::MtMogdf);
    let n = speakers.unwrap_or_else(|| cfg.recognition.speaker_counts.iter().copied().max().unwrap_or(1));
    with_workers(cfg.workers, || {
        let corpus = prepare_corpus(cfg)?;
        let protocol = build_protocol(&corpus, n, cfg.recognition.enroll_utterances)?;
        let utts: Vec<&Utterance> = corpus
            .utterances
            .iter()
            .filter(|u| protocol.enroll.values().flatten().any(|id| *id == u.id))
            .collect();
        let feats = utterance_features(cfg, kind, &utts)?;
        let (ubm, ll) = train_ubm(cfg, &protocol, &feats)?;
        let dir = model_dir(cfg, kind);
        let file = ModelFile {
            id: "ubm".into(),
            model: ubm,
            config: cfg.recognition.gmm.clone(),
            seed: cfg.seed,
            features: json!({"estimator": kind, "options": cfg.features, "speakers": n}),
            log_likelihoods: ll.clone(),
        };
        file.write(dir.join("ubm.json"))?;
        write_trials(dir.join("trials.csv"), &protocol.trials)?;
        write_config_snapshot(cfg, &dir)?;
        say!(
            "ubm: {} components, final log-likelihood {}, written to {}",
            file.model.n_components(),
            format_g17(*ll.last().expect("trace is never empty")),
            dir.join("ubm.json").display()
        );
        Ok(())
    })
}

fn load_ubm(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<(ModelFile, PathBuf)> {
    let path = path.map_or_else(|| model_dir(cfg, EstimatorKind::MtMogdf).join("ubm.json"), Path::to_path_buf);
    if !path.is_file() {
        return Err(Error::Config(format!("--ubm: {} does not exist (run train-ubm first)", path.display())));
    }
    let file = ModelFile::read(&path)?;
    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((file, dir))
}

fn enroll(cfg: &ExperimentConfig, ubm_path: Option<&Path>) -> Result<()> {
    let (ubm, dir) = load_ubm(cfg, ubm_path)?;
    let kind = feature_kind(&ubm)?;
    let n = protocol_speakers(&ubm)?;
    with_workers(cfg.workers, || {
        let corpus = prepare_corpus(cfg)?;
        let protocol = build_protocol(&corpus, n, cfg.recognition.enroll_utterances)?;
        let utts: Vec<&Utterance> = corpus
            .utterances
            .iter()
            .filter(|u| protocol.enroll.values().flatten().any(|id| *id == u.id))
            .collect();
        let feats = utterance_features(cfg, kind, &utts)?;
        let models = enroll_speakers(cfg, &ubm.model, &protocol, &feats)?;
        for (spk, model) in models {
            ModelFile {
                id: spk.clone(),
                model,
                config: cfg.recognition.gmm.clone(),
                seed: cfg.seed,
                features: ubm.features.clone(),
                log_likelihoods: Vec::new(),
            }
            .write(dir.join(format!("{spk}.json")))?;
        }
        say!("{} speakers enrolled in {}", protocol.speakers.len(), dir.display());
        Ok(())
    })
}

fn score(cfg: &ExperimentConfig, ubm_path: Option<&Path>, trials_path: Option<&Path>) -> Result<()> {
    let (ubm, dir) = load_ubm(cfg, ubm_path)?;
    let kind = feature_kind(&ubm)?;
    let trials_path = trials_path.map_or_else(|| dir.join("trials.csv"), Path::to_path_buf);
    if !trials_path.is_file() {
        return Err(Error::Config(format!("--trials: {} does not exist", trials_path.display())));
    }
    let trials = read_trials(&trials_path)?;
    with_workers(cfg.workers, || {
        let mut models = BTreeMap::new();
        for t in &trials {
            if !models.contains_key(&t.model_id) {
                let p = dir.join(format!("{}.json", t.model_id));
                if !p.is_file() {
                    return Err(Error::Config(format!("model {} not found (run enroll first)", p.display())));
                }
                models.insert(t.model_id.clone(), ModelFile::read(&p)?.model);
            }
        }
        let corpus = prepare_corpus(cfg)?;
        let utts: Vec<&Utterance> = corpus
            .utterances
            .iter()
            .filter(|u| trials.iter().any(|t| t.test_id == u.id))
            .collect();
        let feats = utterance_features(cfg, kind, &utts)?;
        let scores = score_trials(&trials, &models, &ubm.model, &feats)?;
        let out = dir.join("scores.csv");
        write_scores(&out, &trials, &scores)?;
        say!("{} trials scored, written to {}", trials.len(), out.display());
        Ok(())
    })
}

fn evaluate(cfg: &ExperimentConfig, scores: &Path) -> Result<()> {
    if !scores.is_file() {
        return Err(Error::Config(format!("--scores: {} does not exist", scores.display())));
    }
    let (trials, values) = read_scores(scores)?;
    let ts = TrialScores::new(values, trials.iter().map(|t| t.target).collect())?;
    let m = compute_eer_dcf(&ts, &cfg.recognition.cost)?;
    let base = scores.with_file_name(format!("{}_metrics", stem(scores)));
    write_json(
        base.with_extension("json"),
        &json!({"eer": m.eer, "min_dcf": m.min_dcf, "n_target": m.n_target, "n_nontarget": m.n_nontarget,
                "cost": cfg.recognition.cost}),
    )?;
    write_csv(
        scores.with_file_name(format!("{}_det.csv", stem(scores))),
        &["threshold", "p_miss", "p_fa"],
        m.det
            .iter()
            .map(|p| [format_g17(p.threshold), format_g17(p.p_miss), format_g17(p.p_fa)]),
    )?;
    say!("EER {:.4}%  minDCF {:.6}  ({} target, {} non-target)", 100.0 * m.eer, m.min_dcf, m.n_target, m.n_nontarget);
    Ok(())
}

fn report(cfg: &ExperimentConfig) -> Result<()> {
    let outcome = run_recognition_experiment(cfg)?;
    let text = std::fs::read_to_string(&outcome.table).map_err(|e| Error::Io {
        path: outcome.table.clone(),
        source: e,
    })?;
    say!("{}", text.trim_end());
    info!("table written to {}", outcome.table.display());
    Ok(())
}
