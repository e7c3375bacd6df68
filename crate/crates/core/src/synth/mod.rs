//! Synthetic speech-like material with known ground truth.
//!
//! Vowels are pulse trains through a fourth-order all-pole filter with two
//! resonances; fricatives are white noise through a broad two-pole
//! resonance. Every generator is driven by an explicit seed.

mod corpus;

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use corpus::{generate_corpus, CorpusManifest, SynthConfig, UtteranceEntry, VowelClass};

use crate::corpus::{frame_len_samples, hop_samples, FrameSet};
use crate::error::{Error, Result};

/// Pole radius giving a resonance of 3 dB bandwidth `bandwidth_hz`.
pub fn pole_radius(bandwidth_hz: f64, sample_rate: u32) -> f64 {
    (-PI * bandwidth_hz / sample_rate as f64).exp()
}

/// Pole angle in radians of a resonance at `hz`.
pub fn pole_angle(hz: f64, sample_rate: u32) -> f64 {
    2.0 * PI * hz / sample_rate as f64
}

/// Denominator `A(z) = 1 + a_1 z^-1 + ...` of an all-pole filter with the
/// given conjugate pole pairs `(radius, angle)`.
pub fn ar_coefficients(poles: &[(f64, f64)]) -> Vec<f64> {
    let mut a = vec![1.0];
    for &(r, theta) in poles {
        let section = [1.0, -2.0 * r * theta.cos(), r * r];
        let mut next = vec![0.0; a.len() + 2];
        for (i, ai) in a.iter().enumerate() {
            for (j, sj) in section.iter().enumerate() {
                next[i + j] += ai * sj;
            }
        }
        a = next;
    }
    a
}

/// Run `input` through `1 / A(z)` from rest.
pub fn all_pole_filter(a: &[f64], input: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; input.len()];
    for n in 0..input.len() {
        let mut v = input[n];
        for (k, ak) in a.iter().enumerate().skip(1) {
            if n >= k {
                v -= ak * y[n - k];
            }
        }
        y[n] = v;
    }
    y
}

/// Unit impulses every `period` samples (fractional periods are rounded per
/// pulse), the first at `offset`.
pub fn pulse_train(len: usize, period: f64, offset: f64) -> Vec<f64> {
    let mut x = vec![0.0; len];
    let mut t = offset;
    while t < len as f64 {
        let n = t.round() as usize;
        if n < len {
            x[n] = 1.0;
        }
        t += period;
    }
    x
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Scale to a peak absolute value of `peak`.
fn normalize_peak(x: &mut [f64], peak: f64) {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        for v in x.iter_mut() {
            *v *= peak / max;
        }
    }
}

/// One vowel-like segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VowelParams {
    pub formants_hz: [f64; 2],
    pub bandwidths_hz: [f64; 2],
    pub pitch_hz: f64,
    /// Additive white noise level relative to the voiced signal's RMS.
    pub noise_level: f64,
}

/// Pulse-excited two-formant vowel of `len` samples with peak amplitude
/// `peak`. The pulse phase is drawn from `rng`.
pub fn vowel(p: &VowelParams, len: usize, sample_rate: u32, peak: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if p.formants_hz.iter().chain(&p.bandwidths_hz).any(|f| !(*f > 0.0 && *f < nyquist)) || !(p.pitch_hz > 0.0) {
        return Err(Error::invalid(format!("vowel parameters out of range: {p:?}")));
    }
    let poles: Vec<(f64, f64)> = (0..2)
        .map(|i| (pole_radius(p.bandwidths_hz[i], sample_rate), pole_angle(p.formants_hz[i], sample_rate)))
        .collect();
    let a = ar_coefficients(&poles);
    let period = sample_rate as f64 / p.pitch_hz;
    // run the filter in before the segment so it starts in steady state
    let lead = (4.0 * period).ceil() as usize;
    let excitation = pulse_train(len + lead, period, rng.random_range(0.0..period));
    let voiced = all_pole_filter(&a, &excitation);
    let mut out = voiced[lead..].to_vec();
    let level = p.noise_level * rms(&out);
    for (v, n) in out.iter_mut().zip(gaussian(rng, len)) {
        *v += level * n;
    }
    normalize_peak(&mut out, peak);
    Ok(out)
}

/// White noise through a single broad resonance at `center_hz`.
pub fn fricative(center_hz: f64, bandwidth_hz: f64, len: usize, sample_rate: u32, peak: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(center_hz > 0.0 && center_hz < nyquist && bandwidth_hz > 0.0) {
        return Err(Error::invalid(format!("fricative centre {center_hz} Hz outside (0, {nyquist})")));
    }
    let a = ar_coefficients(&[(pole_radius(bandwidth_hz, sample_rate), pole_angle(center_hz, sample_rate))]);
    let lead = 256;
    let y = all_pole_filter(&a, &gaussian(rng, len + lead));
    let mut out = y[lead..].to_vec();
    normalize_peak(&mut out, peak);
    Ok(out)
}

/// Settings for a single-vowel frame ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VowelEnsembleConfig {
    pub n_segments: usize,
    pub segment_ms: f64,
    pub formants_hz: [f64; 2],
    /// Relative spread of the formants across segments (uniform, +/-).
    pub formant_jitter: f64,
    pub bandwidths_hz: [f64; 2],
    pub pitch_range_hz: (f64, f64),
    pub noise_level: f64,
    pub peak: f64,
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub overlap: f64,
}

impl Default for VowelEnsembleConfig {
    fn default() -> Self {
        VowelEnsembleConfig {
            n_segments: 130,
            segment_ms: 200.0,
            formants_hz: [700.0, 1800.0],
            formant_jitter: 0.05,
            bandwidths_hz: [80.0, 120.0],
            pitch_range_hz: (100.0, 200.0),
            noise_level: 0.01,
            peak: 0.5,
            sample_rate: 16000,
            frame_ms: 10.0,
            overlap: 0.5,
        }
    }
}

/// Frames of a vowel ensemble with the formants that produced each frame.
#[derive(Debug, Clone)]
pub struct VowelEnsemble {
    pub frames: FrameSet,
    pub formants_hz: Vec<[f64; 2]>,
}

impl VowelEnsemble {
    /// True pole angles of frame `i` as fractional DFT bins.
    pub fn pole_bins(&self, i: usize, nfft: usize) -> [f64; 2] {
        let sr = self.frames.sample_rate() as f64;
        self.formants_hz[i].map(|f| f * nfft as f64 / sr)
    }
}

pub fn vowel_ensemble(cfg: &VowelEnsembleConfig, seed: u64) -> Result<VowelEnsemble> {
    use rand::SeedableRng;
    if cfg.n_segments == 0 {
        return Err(Error::Config("vowel ensemble needs at least one segment".into()));
    }
    let (lo, hi) = cfg.pitch_range_hz;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Config(format!("pitch range ({lo}, {hi}) is not a positive interval")));
    }
    let m = frame_len_samples(cfg.frame_ms, cfg.sample_rate);
    let hop = hop_samples(m, cfg.overlap);
    let seg_len = frame_len_samples(cfg.segment_ms, cfg.sample_rate);
    if seg_len < m {
        return Err(Error::Config("segment shorter than one frame".into()));
    }
    let per_segment = (seg_len - m) / hop + 1;
    let mut data = Vec::with_capacity(cfg.n_segments * per_segment * m);
    let mut truth = Vec::with_capacity(cfg.n_segments * per_segment);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.n_segments {
        let jitter = |rng: &mut ChaCha8Rng, f: f64| f * (1.0 + cfg.formant_jitter * rng.random_range(-1.0..=1.0));
        let formants = [jitter(&mut rng, cfg.formants_hz[0]), jitter(&mut rng, cfg.formants_hz[1])];
        let params = VowelParams {
            formants_hz: formants,
            bandwidths_hz: cfg.bandwidths_hz,
            pitch_hz: rng.random_range(lo..=hi),
            noise_level: cfg.noise_level,
        };
        let seg = vowel(&params, seg_len, cfg.sample_rate, cfg.peak, &mut rng)?;
        for f in 0..per_segment {
            data.extend_from_slice(&seg[f * hop..f * hop + m]);
            truth.push(formants);
        }
    }
    let frames = Array2::from_shape_vec((truth.len(), m), data).expect("frame count matches data");
    let frames = FrameSet::from_frames(frames, cfg.sample_rate, format!("vowel-ensemble-{seed}"))?.with_label("vowel");
    Ok(VowelEnsemble {
        frames,
        formants_hz: truth,
    })
}
