//! Log-domain bias, variance and MSE of spectral estimators over an ensemble
//! of frames.
//!
//! For every frame the estimate is floored positive and compared against a
//! reference spectrum `S_T`:
//!
//! ```text
//! D_i(k)   = ln(S_i(k) / S_T(k))
//! bias(k)  = mean_i D_i(k)
//! var(k)   = mean_i (D_i(k) - bias(k))^2      (population variance)
//! mse(k)   = bias(k)^2 + var(k)
//! ```
//!
//! In the cepstral domain `D_i` is replaced by its orthonormal DCT, which by
//! linearity equals `DCT(ln S_i) - DCT(ln S_T)`.
//!
//! Frames are evaluated in parallel; accumulation runs in frame order with a
//! Welford update, so reports are bit-identical across runs and thread counts.

mod report;

use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{aggregate, aggregate_range, EnsembleReport, ReportMeta, Summary};

use crate::corpus::FrameSet;
use crate::error::{Error, Result};
use crate::features::Dct;
use crate::spectral::{periodogram, positive_floor, Estimator, NegativeHandling, MAGNITUDE_FLOOR};

const CHUNK: usize = 2048;

/// How the "true" spectrum of an ensemble is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    /// `exp(mean_i ln P_i)` over floored periodograms.
    #[default]
    MeanLogSpectrum,
    /// Periodogram of the sample-by-sample mean frame.
    SpectrumOfMeanSignal,
}

impl fmt::Display for ReferenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceMethod::MeanLogSpectrum => "mean_log_spectrum",
            ReferenceMethod::SpectrumOfMeanSignal => "spectrum_of_mean_signal",
        })
    }
}

impl FromStr for ReferenceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_log_spectrum" => Ok(ReferenceMethod::MeanLogSpectrum),
            "spectrum_of_mean_signal" => Ok(ReferenceMethod::SpectrumOfMeanSignal),
            _ => Err(Error::Config(format!("unknown reference method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Spectral,
    Cepstral,
}

impl Domain {
    pub const ALL: [Domain; 2] = [Domain::Spectral, Domain::Cepstral];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Spectral => "spectral",
            Domain::Cepstral => "cepstral",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown analysis domain {s:?}")))
    }
}

fn frame_slice(frames: &FrameSet, i: usize) -> &[f64] {
    frames.frames().row(i).to_slice().expect("frame rows are contiguous")
}

/// Reference spectrum `S_T` of an ensemble, strictly positive.
///
/// Values are floored at `1e-8` times the largest value of the quantity being
/// formed: per frame for the log mean, and relative to the ensemble-average
/// periodogram for the spectrum of the mean signal (whose own maximum may be
/// zero).
pub fn reference_spectrum(frames: &FrameSet, method: ReferenceMethod, nfft: usize) -> Result<Vec<f64>> {
    let n = frames.len();
    if n < 2 {
        return Err(Error::InvalidData(format!("reference spectrum needs at least 2 frames, got {n}")));
    }
    let periodograms: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| periodogram(frame_slice(frames, i), nfft).map(|p| p.into_values()))
        .collect::<Result<_>>()?;
    let bins = nfft / 2 + 1;
    match method {
        ReferenceMethod::MeanLogSpectrum => {
            let mut acc = vec![0.0; bins];
            for p in &periodograms {
                let floored = positive_floor(p, NegativeHandling::Floor)
                    .map_err(|_| Error::numerical("an all-zero frame has no log spectrum"))?;
                for (a, v) in acc.iter_mut().zip(&floored) {
                    *a += v.ln();
                }
            }
            Ok(acc.into_iter().map(|a| (a / n as f64).exp()).collect())
        }
        ReferenceMethod::SpectrumOfMeanSignal => {
            let mut mean_power = vec![0.0; bins];
            for p in &periodograms {
                for (a, v) in mean_power.iter_mut().zip(p) {
                    *a += v / n as f64;
                }
            }
            let anchor = mean_power.iter().copied().fold(0.0, f64::max);
            if !(anchor > 0.0) {
                return Err(Error::numerical("ensemble is silent; reference spectrum undefined"));
            }
            let mean_frame = frames.frames().mean_axis(ndarray::Axis(0)).expect("non-empty ensemble");
            let p = periodogram(mean_frame.as_slice().expect("contiguous mean"), nfft)?;
            let floor = MAGNITUDE_FLOOR * anchor;
            Ok(p.into_values().into_iter().map(|v| v.max(floor)).collect())
        }
    }
}

/// Options of [`evaluate_estimator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateOptions {
    pub negative: NegativeHandling,
    /// Skip frames on which the estimator fails instead of aborting.
    pub skip_failures: bool,
    /// Cepstral coefficients kept; all of them when `None`.
    pub cepstral_coeffs: Option<usize>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            negative: NegativeHandling::Floor,
            skip_failures: false,
            cepstral_coeffs: None,
        }
    }
}

/// Running mean and sum of squared deviations per index.
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }
}

/// Bias, variance and MSE of `estimator` against `reference` over the
/// ensemble `frames`.
pub fn evaluate_estimator<E: Estimator + ?Sized>(
    frames: &FrameSet,
    estimator: &E,
    reference: &[f64],
    domain: Domain,
    options: &EvaluateOptions,
) -> Result<EnsembleReport> {
    let bins = estimator.bins();
    if reference.len() != bins {
        return Err(Error::invalid(format!(
            "reference has {} bins, estimator produces {bins}",
            reference.len()
        )));
    }
    if let Some(k) = reference.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("reference value at bin {k} is not strictly positive")));
    }
    if frames.len() < 2 {
        return Err(Error::InvalidData(format!("ensemble needs at least 2 frames, got {}", frames.len())));
    }
    let dct = match domain {
        Domain::Spectral => None,
        Domain::Cepstral => Some(Dct::new(bins, options.cepstral_coeffs.unwrap_or(bins))?),
    };
    let out_len = dct.as_ref().map_or(bins, Dct::n_coeff);

    let deviation = |i: usize| -> Result<Vec<f64>> {
        let est = estimator.estimate(frame_slice(frames, i))?;
        let floored = est.positive_floored(options.negative)?;
        let d: Vec<f64> = floored.iter().zip(reference).map(|(s, r)| (s / r).ln()).collect();
        match &dct {
            Some(t) => t.forward(&d),
            None => Ok(d),
        }
    };

    let mut acc = Welford::new(out_len);
    let mut skipped = Vec::new();
    for start in (0..frames.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(frames.len());
        let chunk: Vec<Result<Vec<f64>>> = (start..end).into_par_iter().map(deviation).collect();
        for (i, r) in (start..end).zip(chunk) {
            match r {
                Ok(d) => acc.push(&d),
                Err(e) if options.skip_failures => {
                    warn!("skipping frame {i}: {e}");
                    skipped.push(i);
                }
                Err(e) => {
                    return Err(Error::Frame {
                        index: i,
                        source: Box::new(e),
                    })
                }
            }
        }
    }
    if acc.n < 2 {
        return Err(Error::InvalidData(format!(
            "only {} of {} frames could be evaluated",
            acc.n,
            frames.len()
        )));
    }
    let variance: Vec<f64> = acc.m2.iter().map(|s| (s / acc.n as f64).max(0.0)).collect();
    let params = estimator.params();
    let axis = match domain {
        Domain::Spectral => crate::spectral::bin_frequencies(params.nfft, frames.sample_rate()),
        Domain::Cepstral => report::quefrency_axis(out_len, bins, params.nfft, frames.sample_rate()),
    };
    let meta = ReportMeta {
        estimator: estimator.kind(),
        params,
        reference_method: None,
        negative: options.negative,
        sample_rate: frames.sample_rate(),
        frame_len: frames.frame_len(),
        source_id: frames.source_id().to_string(),
        label: frames.label().map(str::to_string),
        skipped,
    };
    EnsembleReport::new(acc.mean, variance, reference.to_vec(), axis, acc.n, domain, meta)
}

#[cfg(test)]
mod tests;
