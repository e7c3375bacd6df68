//! Config-driven experiment runners.
//!
//! An [`ExperimentConfig`] is read from TOML; any key can be overridden with
//! a dotted `section.key=value` pair. The seed is mandatory. Every output
//! directory receives `config.toml` and `config.json` snapshots of the
//! resolved configuration, and CSV bodies depend only on config and seed.

mod config;
mod data;
mod run;

pub use config::{
    apply_override, CorpusSection, CorpusSource, EnsembleSection, EstimatorSection, ExperimentConfig, FrameSection,
    RecognitionSection, TaperChoice, TaperSection,
};
pub use data::{
    build_estimator, build_tapers, ensemble_frames, prepare_corpus, stack_features, utterance_features, Corpus,
    Utterance,
};
pub use run::{
    build_protocol, enroll_speakers, report_stem, run_ensemble_experiment, run_recognition_experiment, score_trials,
    train_ubm, with_workers, write_config_snapshot, EnsembleOutcome, Protocol, RecognitionCell, RecognitionOutcome,
    SummaryRow,
};

#[cfg(test)]
mod tests;
