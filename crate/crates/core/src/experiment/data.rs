use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use ndarray::Array2;
use rayon::prelude::*;

use super::config::{CorpusSource, ExperimentConfig, TaperChoice};
use crate::corpus::{extract_segments, frame_segments, frame_signal, parse_alignment, read_audio, FrameSet};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureMatrix};
use crate::spectral::{EstimatorConfig, EstimatorKind};
use crate::synth::{generate_corpus, vowel_ensemble, CorpusManifest};
use crate::tapers::{dpss_tapers, import_tapers, sine_tapers, TaperSet};

/// One utterance of a corpus, with absolute paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub audio: PathBuf,
    pub alignment: PathBuf,
}

/// Utterances sorted by speaker then id.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    /// Speaker ids in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.utterances.iter().map(|u| u.speaker.clone()).collect();
        s.dedup();
        s
    }

    pub fn of_speaker<'a>(&'a self, speaker: &'a str) -> impl Iterator<Item = &'a Utterance> + 'a {
        self.utterances.iter().filter(move |u| u.speaker == speaker)
    }

    /// Open a directory: `corpus.json` when present, otherwise every audio
    /// file (`.wav`, `.sph`, any case) with a sibling `.PHN`/`.phn`. The
    /// speaker is the parent directory name.
    pub fn open(root: impl AsRef<Path>) -> Result<Corpus> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::Config(format!("corpus root {} does not exist", root.display())));
        }
        let mut utterances = Vec::new();
        if root.join(CorpusManifest::FILE_NAME).is_file() {
            let m = CorpusManifest::load(root)?;
            for u in m.utterances {
                utterances.push(Utterance {
                    id: u.id,
                    speaker: u.speaker,
                    audio: root.join(u.audio),
                    alignment: root.join(u.alignment),
                });
            }
        } else {
            walk(root, &mut utterances)?;
        }
        if utterances.is_empty() {
            return Err(Error::InvalidData(format!("{}: no audio files with alignments", root.display())));
        }
        utterances.sort_by(|a, b| (&a.speaker, &a.id).cmp(&(&b.speaker, &b.id)));
        Ok(Corpus {
            root: root.to_path_buf(),
            utterances,
        })
    }
}

fn walk(dir: &Path, out: &mut Vec<Utterance>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
            continue;
        }
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("wav" | "sph")) {
            continue;
        }
        let Some(alignment) = ["PHN", "phn"].iter().map(|e| p.with_extension(e)).find(|a| a.is_file()) else {
            continue;
        };
        let speaker = dir.file_name().map_or_else(|| "spk".into(), |n| n.to_string_lossy().into_owned());
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(Utterance {
            id: format!("{speaker}_{stem}"),
            speaker,
            audio: p,
            alignment,
        });
    }
    Ok(())
}

/// The corpus a configuration points at, generating it first for synthetic
/// sources.
pub fn prepare_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let root = cfg.corpus_root();
    match cfg.corpus.source {
        CorpusSource::Synthetic => {
            let m = generate_corpus(&cfg.synth, cfg.seed, &root)?;
            info!("generated {} utterances (seed {}) in {}", m.utterances.len(), cfg.seed, root.display());
            Corpus::open(&root)
        }
        CorpusSource::Files => Corpus::open(&root),
        CorpusSource::VowelEnsemble => Err(Error::Config(
            "corpus.source: vowel_ensemble provides frames only, not a speaker corpus".into(),
        )),
    }
}

/// Labelled frame ensembles for the ensemble experiment, in label order.
pub fn ensemble_frames(cfg: &ExperimentConfig) -> Result<Vec<(String, FrameSet)>> {
    if cfg.corpus.source == CorpusSource::VowelEnsemble {
        let e = vowel_ensemble(&cfg.vowel_ensemble, cfg.seed)?;
        return Ok(vec![("vowel".to_string(), e.frames)]);
    }
    let corpus = prepare_corpus(cfg)?;
    let loaded: Vec<_> = corpus
        .utterances
        .par_iter()
        .map(|u| Ok((read_audio(&u.audio, cfg.corpus.format)?, parse_alignment(&u.alignment)?)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for label in &cfg.corpus.labels {
        let mut segments = Vec::new();
        for (w, a) in &loaded {
            segments.extend(extract_segments(w, a, label)?);
        }
        if segments.is_empty() {
            return Err(Error::InvalidData(format!("corpus.labels: no segment labelled {label:?} in the corpus")));
        }
        let (frames, _) = frame_segments(&segments, cfg.frames.frame_ms, cfg.frames.overlap, label)?;
        info!("ensemble {label}: {} frames from {} segments", frames.len(), segments.len());
        out.push((label.clone(), frames));
    }
    Ok(out)
}

/// Taper set of the configured family with `n` tapers of length `len`.
pub fn build_tapers(cfg: &ExperimentConfig, len: usize, n: usize) -> Result<TaperSet> {
    let t = &cfg.tapers;
    match t.family {
        TaperChoice::Thomson => dpss_tapers(len, t.nw, n, t.weighting),
        TaperChoice::Sine => sine_tapers(len, n, None),
        TaperChoice::File => {
            let path = t.path.as_ref().ok_or_else(|| Error::Config("tapers.path: missing".into()))?;
            let set = import_tapers(path, t.weights_path.as_deref())?;
            if set.len() != len {
                return Err(Error::Config(format!(
                    "tapers.path: tapers have length {}, frames have {len} samples",
                    set.len()
                )));
            }
            set.leading(n)
        }
    }
}

/// Estimator `kind` for frames of `len` samples; `n` tapers when it is a
/// multitaper estimator.
pub fn build_estimator(cfg: &ExperimentConfig, kind: EstimatorKind, len: usize, n: usize) -> Result<EstimatorConfig> {
    let tapers = if kind.uses_tapers() {
        Some(Arc::new(build_tapers(cfg, len, n)?))
    } else {
        None
    };
    EstimatorConfig::build(kind, cfg.estimators.mogdf_params(), tapers)
}

/// Mel-cepstral features of whole utterances, keyed by utterance id.
pub fn utterance_features(
    cfg: &ExperimentConfig,
    kind: EstimatorKind,
    utterances: &[&Utterance],
) -> Result<BTreeMap<String, FeatureMatrix>> {
    let waves = utterances
        .par_iter()
        .map(|u| read_audio(&u.audio, cfg.corpus.format))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = waves.first() else {
        return Ok(BTreeMap::new());
    };
    let len = crate::corpus::frame_len_samples(cfg.frames.frame_ms, first.sample_rate());
    let estimator = build_estimator(cfg, kind, len, cfg.tapers.n)?;
    let mut out = BTreeMap::new();
    for (u, w) in utterances.iter().zip(&waves) {
        let frames = frame_signal(w, cfg.frames.frame_ms, cfg.frames.overlap)?;
        let mut feats = extract_features(&frames, &estimator, &cfg.features)?;
        feats.meta.source_id = u.id.clone();
        out.insert(u.id.clone(), feats);
    }
    Ok(out)
}

/// Stack feature matrices into one `T x D` array.
pub fn stack_features<'a>(mats: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Array2<f64>> {
    let mut rows: Vec<f64> = Vec::new();
    let mut dim = None;
    let mut t = 0;
    for m in mats {
        if m.is_empty() {
            continue;
        }
        match dim {
            None => dim = Some(m.dim()),
            Some(d) if d != m.dim() => return Err(Error::InvalidData("feature dimensions differ".into())),
            _ => {}
        }
        for r in m.rows() {
            rows.extend_from_slice(r);
        }
        t += m.len();
    }
    let d = dim.ok_or_else(|| Error::InvalidData("no feature frames".into()))?;
    Ok(Array2::from_shape_vec((t, d), rows).expect("row lengths checked"))
}
