use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::data::{build_estimator, ensemble_frames, prepare_corpus, stack_features, utterance_features, Corpus};
use crate::ensemble::{aggregate, aggregate_range, evaluate_estimator, reference_spectrum, Domain, EnsembleReport, Summary};
use crate::error::{Error, Result};
use crate::export::{format_g17, write_csv, write_json, write_text};
use crate::features::FeatureMatrix;
use crate::recognition::{
    compute_eer_dcf, map_adapt, score_llr, train_gmm_em, write_scores, write_trials, DetectionMetrics, GaussianMixture,
    Trial, TrialScores,
};
use crate::spectral::EstimatorKind;

/// Run `f` on a pool of `workers` threads (all cores when 0).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))?;
    pool.install(f)
}

/// Resolved configuration next to the outputs it produced.
pub fn write_config_snapshot(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    write_text(dir.join("config.toml"), &cfg.to_toml()?)?;
    write_json(dir.join("config.json"), cfg)
}

fn config_value(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config is serializable")
}

/// Stem of a report file, e.g. `mt_mogdf_N8_cepstral`.
pub fn report_stem(kind: EstimatorKind, n_tapers: Option<usize>, domain: Domain) -> String {
    match n_tapers {
        Some(n) => format!("{kind}_N{n}_{domain}"),
        None => format!("{kind}_{domain}"),
    }
}

/// One banded aggregate in `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub estimator: EstimatorKind,
    pub n_tapers: Option<usize>,
    pub domain: Domain,
    pub band: String,
    pub summary: Summary,
}

/// Files and aggregates written by [`run_ensemble_experiment`].
#[derive(Debug, Clone, Default)]
pub struct EnsembleOutcome {
    pub report_csvs: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
    pub reports: Vec<(String, EnsembleReport)>,
}

fn summaries(cfg: &ExperimentConfig, label: &str, kind: EstimatorKind, n: Option<usize>, r: &EnsembleReport) -> Result<Vec<SummaryRow>> {
    let row = |band: String, summary: Summary| SummaryRow {
        label: label.to_string(),
        estimator: kind,
        n_tapers: n,
        domain: r.domain(),
        band,
        summary,
    };
    let mut out = vec![row("all".into(), aggregate(r, None)?)];
    match r.domain() {
        Domain::Spectral => {
            for &(lo, hi) in &cfg.ensemble.bands_hz {
                out.push(row(format!("{}-{}Hz", format_g17(lo), format_g17(hi)), aggregate(r, Some((lo, hi)))?));
            }
        }
        Domain::Cepstral => {
            for &(lo, hi) in &cfg.ensemble.cepstral_ranges {
                let hi = hi.min(r.len());
                if lo < hi {
                    out.push(row(format!("c{lo}-c{}", hi - 1), aggregate_range(r, lo..hi)?));
                }
            }
        }
    }
    Ok(out)
}

/// Bias/variance/MSE reports for every label, estimator, taper count and
/// domain, plus `summary.csv` and a config snapshot under `<out>/ensemble`.
pub fn run_ensemble_experiment(cfg: &ExperimentConfig) -> Result<EnsembleOutcome> {
    let dir = cfg.out.join("ensemble");
    with_workers(cfg.workers, || {
        let ensembles = ensemble_frames(cfg)?;
        let nfft = cfg.estimators.nfft;
        let opts = cfg.ensemble.evaluate_options();
        let extra = config_value(cfg);
        let mut outcome = EnsembleOutcome::default();
        for (label, frames) in &ensembles {
            let reference = reference_spectrum(frames, cfg.ensemble.reference, nfft)?;
            let label_dir = dir.join(label);
            let mut jobs = Vec::new();
            for &kind in &cfg.estimators.names {
                let sweep: Vec<Option<usize>> = if kind.uses_tapers() {
                    cfg.ensemble.n_tapers.iter().map(|n| Some(*n)).collect()
                } else {
                    vec![None]
                };
                for n in sweep {
                    for &domain in &cfg.ensemble.domains {
                        jobs.push((kind, n, domain));
                    }
                }
            }
            let results = jobs
                .par_iter()
                .map(|&(kind, n, domain)| {
                    let est = build_estimator(cfg, kind, frames.frame_len(), n.unwrap_or(1))?;
                    let report = evaluate_estimator(frames, &est, &reference, domain, &opts)?
                        .with_reference_method(cfg.ensemble.reference);
                    let stem = report_stem(kind, n, domain);
                    let csv = label_dir.join(format!("{stem}.csv"));
                    report.write_csv(&csv)?;
                    report.write_sidecar(label_dir.join(format!("{stem}.json")), &extra)?;
                    let rows = summaries(cfg, label, kind, n, &report)?;
                    info!("{label}/{stem}: {} realizations", report.n_realizations());
                    Ok((csv, rows, (stem, report)))
                })
                .collect::<Result<Vec<_>>>()?;
            for (csv, rows, report) in results {
                outcome.report_csvs.push(csv);
                outcome.summary.extend(rows);
                outcome.reports.push(report);
            }
        }
        write_summary(&dir.join("summary.csv"), &outcome.summary)?;
        write_config_snapshot(cfg, &dir)?;
        Ok(outcome)
    })
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        &["label", "estimator", "n_tapers", "domain", "band", "mean_abs_bias", "mean_variance", "mean_mse", "n_indices"],
        rows.iter().map(|r| {
            [
                r.label.clone(),
                r.estimator.to_string(),
                r.n_tapers.map_or_else(String::new, |n| n.to_string()),
                r.domain.to_string(),
                r.band.clone(),
                format_g17(r.summary.mean_abs_bias),
                format_g17(r.summary.mean_variance),
                format_g17(r.summary.mean_mse),
                r.summary.n_indices.to_string(),
            ]
        }),
    )
}

/// Enrolment and test split of the first `n_speakers` speakers.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub speakers: Vec<String>,
    /// Enrolment utterance ids per speaker.
    pub enroll: BTreeMap<String, Vec<String>>,
    pub trials: Vec<Trial>,
}

/// The leading `enroll_utterances` of each speaker enrol; every remaining
/// utterance of the subset is tried against every enrolled speaker.
pub fn build_protocol(corpus: &Corpus, n_speakers: usize, enroll_utterances: usize) -> Result<Protocol> {
    let all = corpus.speakers();
    if n_speakers > all.len() {
        return Err(Error::Config(format!(
            "recognition.speaker_counts: {n_speakers} speakers requested, corpus has {}",
            all.len()
        )));
    }
    let speakers: Vec<String> = all[..n_speakers].to_vec();
    let mut enroll = BTreeMap::new();
    let mut tests = Vec::new();
    for s in &speakers {
        let utts: Vec<_> = corpus.of_speaker(s).collect();
        if utts.len() <= enroll_utterances {
            return Err(Error::Config(format!(
                "recognition.enroll_utterances: speaker {s} has {} utterances, {enroll_utterances} enrol and none remain for testing",
                utts.len()
            )));
        }
        enroll.insert(s.clone(), utts[..enroll_utterances].iter().map(|u| u.id.clone()).collect());
        tests.extend(utts[enroll_utterances..].iter().map(|u| (u.id.clone(), s.clone())));
    }
    let trials = speakers
        .iter()
        .flat_map(|m| {
            tests.iter().map(move |(t, owner)| Trial {
                model_id: m.clone(),
                test_id: t.clone(),
                target: owner == m,
            })
        })
        .collect();
    Ok(Protocol { speakers, enroll, trials })
}

/// Background model trained on the pooled enrolment data of `protocol`.
pub fn train_ubm(
    cfg: &ExperimentConfig,
    protocol: &Protocol,
    feats: &BTreeMap<String, FeatureMatrix>,
) -> Result<(GaussianMixture, Vec<f64>)> {
    let pooled = stack_features(protocol.enroll.values().flatten().map(|id| &feats[id]))?;
    let c = cfg.recognition.gmm.components;
    if c > pooled.nrows() {
        return Err(Error::Config(format!(
            "recognition.gmm.components: {c} components for {} training frames",
            pooled.nrows()
        )));
    }
    let fit = train_gmm_em(pooled.view(), c, cfg.recognition.gmm.iterations, cfg.seed)?;
    Ok((fit.model, fit.log_likelihoods))
}

/// MAP-adapted model per enrolled speaker, trained concurrently.
pub fn enroll_speakers(
    cfg: &ExperimentConfig,
    ubm: &GaussianMixture,
    protocol: &Protocol,
    feats: &BTreeMap<String, FeatureMatrix>,
) -> Result<BTreeMap<String, GaussianMixture>> {
    protocol
        .enroll
        .par_iter()
        .map(|(spk, ids)| {
            let x = stack_features(ids.iter().map(|id| &feats[id]))?;
            Ok((spk.clone(), map_adapt(ubm, x.view(), cfg.recognition.gmm.relevance)?))
        })
        .collect()
}

/// Average LLR of every trial, in trial order.
pub fn score_trials(
    trials: &[Trial],
    models: &BTreeMap<String, GaussianMixture>,
    ubm: &GaussianMixture,
    feats: &BTreeMap<String, FeatureMatrix>,
) -> Result<Vec<f64>> {
    let arrays: BTreeMap<&str, ndarray::Array2<f64>> = feats
        .iter()
        .map(|(k, v)| Ok((k.as_str(), stack_features([v])?)))
        .collect::<Result<_>>()?;
    trials
        .par_iter()
        .map(|t| {
            let model = models
                .get(&t.model_id)
                .ok_or_else(|| Error::InvalidData(format!("no model for {}", t.model_id)))?;
            let x = arrays
                .get(t.test_id.as_str())
                .ok_or_else(|| Error::InvalidData(format!("no features for {}", t.test_id)))?;
            score_llr(model, ubm, x.view())
        })
        .collect()
}

/// One feature type at one speaker count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecognitionCell {
    pub feature: EstimatorKind,
    pub n_speakers: usize,
    pub eer: f64,
    pub min_dcf: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RecognitionOutcome {
    pub cells: Vec<RecognitionCell>,
    pub table: PathBuf,
}

impl RecognitionOutcome {
    pub fn cell(&self, feature: EstimatorKind, n_speakers: usize) -> Option<&RecognitionCell> {
        self.cells.iter().find(|c| c.feature == feature && c.n_speakers == n_speakers)
    }
}

/// EER and minimum DCF for every feature type and speaker count, written as
/// `<out>/recognition/table.csv` (EER in percent, DCF x 100) with per-trial
/// score files under `scores/`.
pub fn run_recognition_experiment(cfg: &ExperimentConfig) -> Result<RecognitionOutcome> {
    let dir = cfg.out.join("recognition");
    with_workers(cfg.workers, || {
        let corpus = prepare_corpus(cfg)?;
        let counts = &cfg.recognition.speaker_counts;
        let max_n = counts.iter().copied().max().unwrap_or(0);
        let protocols = counts
            .iter()
            .map(|&n| build_protocol(&corpus, n, cfg.recognition.enroll_utterances))
            .collect::<Result<Vec<_>>>()?;
        let largest = corpus.speakers()[..max_n].to_vec();
        let used: Vec<_> = corpus.utterances.iter().filter(|u| largest.contains(&u.speaker)).collect();

        let mut cells = Vec::new();
        for &feature in &cfg.recognition.features {
            let feats = utterance_features(cfg, feature, &used)?;
            for (n, protocol) in counts.iter().zip(&protocols) {
                let (ubm, _) = train_ubm(cfg, protocol, &feats)?;
                let models = enroll_speakers(cfg, &ubm, protocol, &feats)?;
                let scores = score_trials(&protocol.trials, &models, &ubm, &feats)?;
                let ts = TrialScores::new(scores.clone(), protocol.trials.iter().map(|t| t.target).collect())?;
                let m: DetectionMetrics = compute_eer_dcf(&ts, &cfg.recognition.cost)?;
                write_scores(dir.join("scores").join(format!("{feature}_{n}spk.csv")), &protocol.trials, &scores)?;
                info!("{feature} @ {n} speakers: EER {:.2}% minDCF {:.4}", 100.0 * m.eer, m.min_dcf);
                cells.push(RecognitionCell {
                    feature,
                    n_speakers: *n,
                    eer: m.eer,
                    min_dcf: m.min_dcf,
                    n_target: m.n_target,
                    n_nontarget: m.n_nontarget,
                });
            }
        }
        for (n, protocol) in counts.iter().zip(&protocols) {
            write_trials(dir.join(format!("trials_{n}spk.csv")), &protocol.trials)?;
        }
        let table = dir.join("table.csv");
        write_table(&table, cfg, &cells)?;
        write_json(dir.join("metrics.json"), &cells)?;
        write_config_snapshot(cfg, &dir)?;
        Ok(RecognitionOutcome { cells, table })
    })
}

fn write_table(path: &Path, cfg: &ExperimentConfig, cells: &[RecognitionCell]) -> Result<()> {
    let features = &cfg.recognition.features;
    let mut header = vec!["metric".to_string(), "n_speakers".to_string()];
    header.extend(features.iter().map(|f| f.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (metric, scale) in [("eer_percent", 100.0), ("dcf_x100", 100.0)] {
        for &n in &cfg.recognition.speaker_counts {
            let mut row = vec![metric.to_string(), n.to_string()];
            for f in features {
                let c = cells
                    .iter()
                    .find(|c| c.feature == *f && c.n_speakers == n)
                    .expect("every cell computed");
                let v = if metric == "eer_percent" { c.eer } else { c.min_dcf };
                row.push(format_g17(scale * v));
            }
            rows.push(row);
        }
    }
    write_csv(path, &header, rows)
}
