use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fricative, vowel, VowelParams};
use crate::corpus::{serialize_alignment, write_sphere, write_wav, AudioFormat, PhoneAlignment, PhoneEntry, Waveform};
use crate::error::{Error, Result};
use crate::export::{read_json, write_json, write_text};

/// A vowel category with its reference formants (before speaker scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelClass {
    pub label: String,
    pub formants_hz: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FricativeClass {
    pub label: String,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

/// Synthetic corpus layout and speaker model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub phones_per_utterance: usize,
    pub sample_rate: u32,
    pub format: AudioFormat,
    pub phone_ms: (f64, f64),
    pub peak: f64,
    pub noise_level: f64,
    pub bandwidths_hz: [f64; 2],
    /// Vocal-tract scale factors, spread evenly over speakers.
    pub speaker_scale: (f64, f64),
    /// Mean pitch, spread evenly over speakers in shuffled order.
    pub speaker_pitch_hz: (f64, f64),
    /// Per-utterance pitch variation (relative, +/-).
    pub pitch_jitter: f64,
    pub vowels: Vec<VowelClass>,
    pub fricatives: Vec<FricativeClass>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let v = |label: &str, f1, f2| VowelClass {
            label: label.into(),
            formants_hz: [f1, f2],
        };
        let f = |label: &str, center_hz, bandwidth_hz| FricativeClass {
            label: label.into(),
            center_hz,
            bandwidth_hz,
        };
        SynthConfig {
            n_speakers: 10,
            utterances_per_speaker: 6,
            phones_per_utterance: 8,
            sample_rate: 16000,
            format: AudioFormat::Wav,
            phone_ms: (80.0, 200.0),
            peak: 0.5,
            noise_level: 0.01,
            bandwidths_hz: [80.0, 120.0],
            speaker_scale: (0.8, 1.25),
            speaker_pitch_hz: (90.0, 220.0),
            pitch_jitter: 0.05,
            vowels: vec![
                v("aa", 730.0, 1090.0),
                v("iy", 270.0, 2290.0),
                v("uw", 300.0, 870.0),
                v("ae", 660.0, 1720.0),
                v("eh", 530.0, 1840.0),
            ],
            fricatives: vec![f("s", 5000.0, 2000.0), f("sh", 3000.0, 1500.0)],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_speakers == 0 || self.utterances_per_speaker == 0 || self.phones_per_utterance == 0 {
            return bad("synthetic corpus needs at least one speaker, utterance and phone");
        }
        if self.vowels.is_empty() {
            return bad("synthetic corpus needs at least one vowel class");
        }
        let (lo, hi) = self.phone_ms;
        if !(lo >= 10.0 && lo <= hi) {
            return bad("phone_ms must be an interval starting at 10 ms or more");
        }
        if !(self.peak > 0.0 && self.peak < 1.0) {
            return bad("peak must lie in (0, 1)");
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        let top = self.speaker_scale.1.max(self.speaker_scale.0);
        for v in &self.vowels {
            if v.formants_hz.iter().any(|f| !(*f > 0.0 && f * top < nyquist)) {
                return Err(Error::Config(format!("vowel {} formants leave the band after scaling", v.label)));
            }
        }
        Ok(())
    }

    fn speaker_value(range: (f64, f64), i: usize, n: usize) -> f64 {
        if n == 1 {
            (range.0 + range.1) / 2.0
        } else {
            range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
        }
    }
}

/// Ground truth for one phone segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneTruth {
    pub label: String,
    pub start: u64,
    pub end: u64,
    /// Formants of voiced segments.
    pub formants_hz: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEntry {
    pub id: String,
    pub scale: f64,
    pub pitch_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEntry {
    pub id: String,
    pub speaker: String,
    /// Paths relative to the corpus root.
    pub audio: PathBuf,
    pub alignment: PathBuf,
    pub phones: Vec<PhoneTruth>,
}

/// `corpus.json` at the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub speakers: Vec<SpeakerEntry>,
    pub utterances: Vec<UtteranceEntry>,
}

impl CorpusManifest {
    pub const FILE_NAME: &'static str = "corpus.json";

    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        read_json(root.as_ref().join(Self::FILE_NAME))
    }

    pub fn speaker_ids(&self) -> Vec<&str> {
        self.speakers.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn utterances_of<'a>(&'a self, speaker: &'a str) -> impl Iterator<Item = &'a UtteranceEntry> + 'a {
        self.utterances.iter().filter(move |u| u.speaker == speaker)
    }
}

fn synth_utterance(cfg: &SynthConfig, speaker: &SpeakerEntry, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<PhoneTruth>)> {
    let pitch = speaker.pitch_hz * (1.0 + cfg.pitch_jitter * rng.random_range(-1.0..=1.0));
    let mut samples = Vec::new();
    let mut phones = Vec::with_capacity(cfg.phones_per_utterance);
    let n_classes = cfg.vowels.len() + cfg.fricatives.len();
    for _ in 0..cfg.phones_per_utterance {
        let ms = rng.random_range(cfg.phone_ms.0..=cfg.phone_ms.1);
        let len = (ms * cfg.sample_rate as f64 / 1000.0).round() as usize;
        let class = rng.random_range(0..n_classes);
        let (label, seg, formants) = if class < cfg.vowels.len() {
            let v = &cfg.vowels[class];
            let formants = v.formants_hz.map(|f| f * speaker.scale);
            let p = VowelParams {
                formants_hz: formants,
                bandwidths_hz: cfg.bandwidths_hz,
                pitch_hz: pitch,
                noise_level: cfg.noise_level,
            };
            (v.label.clone(), vowel(&p, len, cfg.sample_rate, cfg.peak, rng)?, Some(formants))
        } else {
            let f = &cfg.fricatives[class - cfg.vowels.len()];
            let center = (f.center_hz * speaker.scale).min(0.45 * cfg.sample_rate as f64);
            let seg = fricative(center, f.bandwidth_hz, len, cfg.sample_rate, cfg.peak * 0.3, rng)?;
            (f.label.clone(), seg, None)
        };
        let start = samples.len() as u64;
        samples.extend_from_slice(&seg);
        phones.push(PhoneTruth {
            label,
            start,
            end: samples.len() as u64,
            formants_hz: formants,
        });
    }
    Ok((samples, phones))
}

/// Write a synthetic corpus under `root` and return its manifest.
///
/// Utterance `u` of speaker `s` draws from its own ChaCha stream, so the
/// output does not depend on scheduling.
pub fn generate_corpus(cfg: &SynthConfig, seed: u64, root: impl AsRef<Path>) -> Result<CorpusManifest> {
    cfg.validate()?;
    let root = root.as_ref();
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut order: Vec<usize> = (0..cfg.n_speakers).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let speakers: Vec<SpeakerEntry> = (0..cfg.n_speakers)
        .map(|s| SpeakerEntry {
            id: format!("spk{s:03}"),
            scale: SynthConfig::speaker_value(cfg.speaker_scale, s, cfg.n_speakers),
            pitch_hz: SynthConfig::speaker_value(cfg.speaker_pitch_hz, order[s], cfg.n_speakers),
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cfg.n_speakers)
        .flat_map(|s| (0..cfg.utterances_per_speaker).map(move |u| (s, u)))
        .collect();
    let ext = match cfg.format {
        AudioFormat::Sphere => "sph",
        _ => "wav",
    };
    let utterances = jobs
        .par_iter()
        .map(|&(s, u)| {
            let speaker = &speakers[s];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((s * cfg.utterances_per_speaker + u + 1) as u64);
            let (samples, phones) = synth_utterance(cfg, speaker, &mut rng)?;
            let id = format!("{}_u{u:03}", speaker.id);
            let audio = PathBuf::from(&speaker.id).join(format!("{id}.{ext}"));
            let alignment = PathBuf::from(&speaker.id).join(format!("{id}.PHN"));
            let wav = Waveform::new(samples, cfg.sample_rate, id.clone())?;
            std::fs::create_dir_all(root.join(&speaker.id)).map_err(|e| Error::io(root.join(&speaker.id), e))?;
            match cfg.format {
                AudioFormat::Sphere => write_sphere(root.join(&audio), &wav)?,
                _ => write_wav(root.join(&audio), &wav)?,
            }
            let entries = phones.iter().map(|p| PhoneEntry::new(p.start, p.end, p.label.clone())).collect();
            write_text(root.join(&alignment), &serialize_alignment(&PhoneAlignment::new(entries)?))?;
            Ok(UtteranceEntry {
                id,
                speaker: speaker.id.clone(),
                audio,
                alignment,
                phones,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = CorpusManifest {
        seed,
        config: cfg.clone(),
        speakers,
        utterances,
    };
    write_json(root.join(CorpusManifest::FILE_NAME), &manifest)?;
    info!(
        "synthetic corpus: {} speakers x {} utterances written to {}",
        cfg.n_speakers,
        cfg.utterances_per_speaker,
        root.display()
    );
    Ok(manifest)
}
