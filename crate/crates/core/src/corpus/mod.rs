//! Corpus ingestion: 16-bit PCM audio in RIFF-WAV or NIST-SPHERE containers,
//! TIMIT-style `.PHN` phone alignments, phone-segment extraction and
//! fixed-length framing.

mod alignment;
mod audio;
mod framing;

pub use alignment::{parse_alignment, parse_alignment_str, serialize_alignment, PhoneAlignment, PhoneEntry};
pub use audio::{read_audio, write_sphere, write_wav, AudioFormat};
pub use framing::{frame_len_samples, frame_segments, frame_signal, hop_samples, FrameSet};

use crate::error::{Error, Result};

/// Normalization applied to 16-bit integer samples.
pub const PCM_SCALE: f64 = 32768.0;

/// A mono sampled signal with samples normalized to `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    source_id: String,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("waveform has no samples"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Integer PCM values, `round(x * 32768)` saturated to the `i16` range.
    pub fn to_pcm16(&self) -> Vec<i16> {
        self.samples
            .iter()
            .map(|&s| (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
            .collect()
    }
}

/// Cut out every segment of `waveform` whose alignment label equals `label`.
///
/// Samples are copied verbatim. An absent label yields an empty list.
pub fn extract_segments(waveform: &Waveform, alignment: &PhoneAlignment, label: &str) -> Result<Vec<Waveform>> {
    let len = waveform.len() as u64;
    alignment
        .entries()
        .iter()
        .filter(|e| e.label == label)
        .map(|e| {
            if e.end > len {
                return Err(Error::InvalidData(format!(
                    "{}: segment {}..{} ({}) exceeds waveform length {}",
                    waveform.source_id, e.start, e.end, e.label, len
                )));
            }
            let samples = waveform.samples[e.start as usize..e.end as usize].to_vec();
            Waveform::new(
                samples,
                waveform.sample_rate,
                format!("{}:{}-{}", waveform.source_id, e.start, e.end),
            )
        })
        .collect()
}
