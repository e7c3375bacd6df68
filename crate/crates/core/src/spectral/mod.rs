//! Spectrum estimators over single analysis frames.
//!
//! Every estimator returns a [`SpectralEstimate`] over the `nfft/2 + 1`
//! non-negative frequency bins `omega_k = 2 pi k / nfft`.
//!
//! * [`periodogram`]: `|X|^2`, without `1/M` scaling.
//! * [`group_delay`]: `(X_R Y_R + X_I Y_I) / |X|^2` where `Y` is the DFT of
//!   the ramped frame `n x(n)`.
//! * [`mogdf`]: the modified group delay, with the denominator replaced by the
//!   cepstrally smoothed magnitude raised to `2 gamma` and the result
//!   compressed by `sign(tau) |tau|^alpha`.
//! * [`mt_mag`]: weighted sum of tapered periodograms.
//! * [`mt_mogdf`]: weighted sum of per-taper modified group delays.
//!
//! Magnitudes are floored at `1e-8 * max |X|` before every logarithm and
//! division, which keeps the estimators scale-invariant in their failure
//! behaviour.

mod estimator;
mod fft;

use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use estimator::{Estimator, EstimatorConfig, EstimatorKind};

use crate::error::{Error, Result};
use crate::export::{format_g17, write_csv, write_json};
use crate::tapers::{TaperFamily, TaperSet};

/// Relative magnitude floor applied before logs and divisions.
pub const MAGNITUDE_FLOOR: f64 = 1e-8;

/// Half spectrum (bins `0..=nfft/2`) of a real frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    nfft: usize,
}

impl ComplexSpectrum {
    fn from_full(full: &[Complex64]) -> Self {
        let bins = full.len() / 2 + 1;
        ComplexSpectrum {
            re: full[..bins].iter().map(|c| c.re).collect(),
            im: full[..bins].iter().map(|c| c.im).collect(),
            nfft: full.len(),
        }
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn bins(&self) -> usize {
        self.re.len()
    }

    pub fn power(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).collect()
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }
}

/// Parameters of the modified group delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MogdfParams {
    /// Compression exponent, `0 < alpha <= 1`.
    pub alpha: f64,
    /// Denominator exponent, `0 < gamma <= 1`.
    pub gamma: f64,
    /// Number of low-quefrency cepstral coefficients kept when smoothing.
    pub lifter_length: usize,
    pub nfft: usize,
}

impl Default for MogdfParams {
    fn default() -> Self {
        MogdfParams {
            alpha: 0.4,
            gamma: 0.9,
            lifter_length: 20,
            nfft: 512,
        }
    }
}

impl MogdfParams {
    /// Parameters that reduce the modified group delay to the plain one.
    pub fn identity(nfft: usize) -> Self {
        MogdfParams {
            alpha: 1.0,
            gamma: 1.0,
            lifter_length: nfft / 2 + 1,
            nfft,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        check_nfft(self.nfft)?;
        if self.lifter_length == 0 || self.lifter_length > self.nfft / 2 + 1 {
            return Err(Error::invalid(format!(
                "lifter length {} outside [1, {}]",
                self.lifter_length,
                self.nfft / 2 + 1
            )));
        }
        Ok(())
    }
}

/// Parameter record attached to every estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub nfft: usize,
    /// Power scaling convention; periodogram-type values are `|X|^2` with no
    /// `1/M` factor.
    pub scaling: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mogdf: Option<MogdfParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper_family: Option<TaperFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tapers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_bandwidth: Option<f64>,
}

impl EstimateParams {
    fn plain(nfft: usize) -> Self {
        EstimateParams {
            nfft,
            scaling: "unnormalized".into(),
            mogdf: None,
            taper_family: None,
            n_tapers: None,
            time_bandwidth: None,
        }
    }

    fn with_tapers(mut self, tapers: &TaperSet) -> Self {
        self.taper_family = Some(tapers.family());
        self.n_tapers = Some(tapers.count());
        self.time_bandwidth = tapers.time_bandwidth();
        self
    }
}

/// Real-valued half spectrum tagged with the estimator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    values: Vec<f64>,
    estimator: EstimatorKind,
    params: EstimateParams,
}

/// How non-positive values are made loggable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeHandling {
    /// `max(v, 1e-8 * max positive v)`.
    #[default]
    Floor,
    /// `|v|`, then the same relative floor for exact zeros.
    Abs,
}

impl SpectralEstimate {
    pub fn new(values: Vec<f64>, estimator: EstimatorKind, params: EstimateParams) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("{estimator} produced a non-finite value at bin {k}")));
        }
        Ok(SpectralEstimate {
            values,
            estimator,
            params,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn estimator(&self) -> EstimatorKind {
        self.estimator
    }

    pub fn params(&self) -> &EstimateParams {
        &self.params
    }

    pub fn bins(&self) -> usize {
        self.values.len()
    }

    /// Strictly positive copy of the values, ready for a logarithm.
    pub fn positive_floored(&self, handling: NegativeHandling) -> Result<Vec<f64>> {
        positive_floor(&self.values, handling)
    }

    /// Bin centre frequencies in Hz.
    pub fn bin_hz(&self, sample_rate: u32) -> Vec<f64> {
        bin_frequencies(self.params.nfft, sample_rate)
    }

    /// CSV with columns `bin_hz,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>, sample_rate: u32) -> Result<()> {
        let hz = self.bin_hz(sample_rate);
        write_csv(
            path,
            &["bin_hz", "value"],
            hz.iter().zip(&self.values).map(|(h, v)| [format_g17(*h), format_g17(*v)]),
        )
    }

    /// JSON document with the estimator, parameter record and values.
    pub fn write_json(&self, path: impl AsRef<Path>, sample_rate: u32) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            estimator: EstimatorKind,
            params: &'a EstimateParams,
            sample_rate: u32,
            bin_hz: Vec<f64>,
            values: &'a [f64],
        }
        write_json(
            path,
            &Doc {
                estimator: self.estimator,
                params: &self.params,
                sample_rate,
                bin_hz: self.bin_hz(sample_rate),
                values: &self.values,
            },
        )
    }
}

pub fn bin_frequencies(nfft: usize, sample_rate: u32) -> Vec<f64> {
    (0..=nfft / 2).map(|k| k as f64 * sample_rate as f64 / nfft as f64).collect()
}

/// Make every value strictly positive for log compression.
pub fn positive_floor(values: &[f64], handling: NegativeHandling) -> Result<Vec<f64>> {
    let mapped: Vec<f64> = match handling {
        NegativeHandling::Floor => values.to_vec(),
        NegativeHandling::Abs => values.iter().map(|v| v.abs()).collect(),
    };
    let max = mapped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::numerical("estimate has no positive value to anchor the log floor"));
    }
    let floor = MAGNITUDE_FLOOR * max;
    Ok(mapped.into_iter().map(|v| v.max(floor)).collect())
}

fn check_nfft(nfft: usize) -> Result<()> {
    if nfft < 2 || !nfft.is_power_of_two() {
        return Err(Error::invalid(format!("nfft {nfft} must be a power of two >= 2")));
    }
    Ok(())
}

fn check_frame(frame: &[f64], nfft: usize) -> Result<()> {
    check_nfft(nfft)?;
    if frame.is_empty() {
        return Err(Error::invalid("empty frame"));
    }
    if frame.len() > nfft {
        return Err(Error::invalid(format!("nfft {nfft} is shorter than the {}-sample frame", frame.len())));
    }
    if let Some(i) = frame.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("frame sample {i} is not finite")));
    }
    Ok(())
}

/// DFTs of the zero-padded frame `x(n)` and of the ramped frame `n x(n)`.
pub fn fft_pair(frame: &[f64], nfft: usize) -> Result<(ComplexSpectrum, ComplexSpectrum)> {
    check_frame(frame, nfft)?;
    let x = fft::forward_real(frame.iter().copied(), nfft);
    let y = fft::forward_real(frame.iter().enumerate().map(|(n, v)| n as f64 * v), nfft);
    Ok((ComplexSpectrum::from_full(&x), ComplexSpectrum::from_full(&y)))
}

pub fn periodogram(frame: &[f64], nfft: usize) -> Result<SpectralEstimate> {
    check_frame(frame, nfft)?;
    let x = fft::forward_real(frame.iter().copied(), nfft);
    let values = x[..=nfft / 2].iter().map(|c| c.norm_sqr()).collect();
    SpectralEstimate::new(values, EstimatorKind::Periodogram, EstimateParams::plain(nfft))
}

/// Group delay `-d theta / d omega` via the ramped-frame identity.
///
/// Fails when any bin magnitude falls below the relative floor; use
/// [`mogdf`] for frames with spectral zeros.
pub fn group_delay(frame: &[f64], nfft: usize) -> Result<SpectralEstimate> {
    let (x, y) = fft_pair(frame, nfft)?;
    let power = x.power();
    let max = power.iter().copied().fold(0.0, f64::max);
    let floor = MAGNITUDE_FLOOR * MAGNITUDE_FLOOR * max;
    let mut values = Vec::with_capacity(power.len());
    for k in 0..power.len() {
        if power[k] <= floor || power[k] == 0.0 {
            return Err(Error::numerical(format!("zero spectral magnitude at bin {k}; group delay undefined")));
        }
        values.push((x.re[k] * y.re[k] + x.im[k] * y.im[k]) / power[k]);
    }
    SpectralEstimate::new(values, EstimatorKind::Gdf, EstimateParams::plain(nfft))
}

/// Cepstrally smoothed magnitude spectrum.
///
/// `spec_mag` holds `nfft/2 + 1` strictly positive magnitudes. The log
/// spectrum is mirrored to full length, inverse transformed, all but the
/// first `lifter_length` quefrencies (and their mirror images) are zeroed,
/// and the result is transformed back and exponentiated.
pub fn cepstral_smooth(spec_mag: &[f64], lifter_length: usize, nfft: usize) -> Result<Vec<f64>> {
    check_nfft(nfft)?;
    let half = nfft / 2;
    if spec_mag.len() != half + 1 {
        return Err(Error::invalid(format!(
            "{} magnitudes supplied for nfft {nfft} (expected {})",
            spec_mag.len(),
            half + 1
        )));
    }
    if lifter_length == 0 || lifter_length > half + 1 {
        return Err(Error::invalid(format!("lifter length {lifter_length} outside [1, {}]", half + 1)));
    }
    if let Some(k) = spec_mag.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::numerical(format!("magnitude at bin {k} is not strictly positive")));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (k, m) in spec_mag.iter().enumerate() {
        let l = m.ln();
        buf[k].re = l;
        if k > 0 && k < half {
            buf[nfft - k].re = l;
        }
    }
    fft::inverse_in_place(&mut buf);
    let scale = 1.0 / nfft as f64;
    for (n, c) in buf.iter_mut().enumerate() {
        let keep = n < lifter_length || n > nfft - lifter_length;
        *c = if keep { Complex64::new(c.re * scale, 0.0) } else { Complex64::new(0.0, 0.0) };
    }
    fft::forward_in_place(&mut buf);
    Ok(buf[..=half].iter().map(|c| c.re.exp()).collect())
}

fn floored_magnitude(x: &ComplexSpectrum) -> Result<Vec<f64>> {
    let mag = x.magnitude();
    let max = mag.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::numerical("all-zero frame"));
    }
    let floor = MAGNITUDE_FLOOR * max;
    Ok(mag.into_iter().map(|m| m.max(floor)).collect())
}

fn mogdf_values(frame: &[f64], p: &MogdfParams) -> Result<Vec<f64>> {
    if frame.iter().all(|v| *v == 0.0) {
        return Err(Error::numerical("all-zero frame"));
    }
    let (x, y) = fft_pair(frame, p.nfft)?;
    let xi = cepstral_smooth(&floored_magnitude(&x)?, p.lifter_length, p.nfft)?;
    let mut out = Vec::with_capacity(xi.len());
    for k in 0..xi.len() {
        let tau = (x.re[k] * y.re[k] + x.im[k] * y.im[k]) / xi[k].powf(2.0 * p.gamma);
        let v = if tau == 0.0 { 0.0 } else { tau.signum() * tau.abs().powf(p.alpha) };
        if !v.is_finite() {
            return Err(Error::numerical(format!("modified group delay is not finite at bin {k}")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Modified group delay of one frame.
pub fn mogdf(frame: &[f64], p: &MogdfParams) -> Result<SpectralEstimate> {
    p.validate()?;
    let values = mogdf_values(frame, p)?;
    let params = EstimateParams {
        mogdf: Some(*p),
        ..EstimateParams::plain(p.nfft)
    };
    SpectralEstimate::new(values, EstimatorKind::Mogdf, params)
}

fn check_taper_len(frame: &[f64], tapers: &TaperSet) -> Result<()> {
    if tapers.len() != frame.len() {
        return Err(Error::invalid(format!(
            "taper length {} does not match frame length {}",
            tapers.len(),
            frame.len()
        )));
    }
    Ok(())
}

fn tapered(frame: &[f64], tapers: &TaperSet, j: usize) -> Vec<f64> {
    tapers.taper(j).iter().zip(frame).map(|(w, x)| w * x).collect()
}

/// Multitaper magnitude spectrum `sum_j lambda_j |DFT(w_j x)|^2`.
pub fn mt_mag(frame: &[f64], tapers: &TaperSet, nfft: usize) -> Result<SpectralEstimate> {
    check_frame(frame, nfft)?;
    check_taper_len(frame, tapers)?;
    let mut acc = vec![0.0; nfft / 2 + 1];
    for (j, &lambda) in tapers.weights().iter().enumerate() {
        if lambda == 0.0 {
            continue;
        }
        let spec = fft::forward_real(tapered(frame, tapers, j), nfft);
        for (a, c) in acc.iter_mut().zip(&spec) {
            *a += lambda * c.norm_sqr();
        }
    }
    SpectralEstimate::new(acc, EstimatorKind::MtMag, EstimateParams::plain(nfft).with_tapers(tapers))
}

/// Multitaper modified group delay `sum_j lambda_j mogdf(w_j x)`.
///
/// The cepstral smoothing denominator is computed per tapered frame.
pub fn mt_mogdf(frame: &[f64], tapers: &TaperSet, p: &MogdfParams) -> Result<SpectralEstimate> {
    p.validate()?;
    check_frame(frame, p.nfft)?;
    check_taper_len(frame, tapers)?;
    let mut acc = vec![0.0; p.nfft / 2 + 1];
    for (j, &lambda) in tapers.weights().iter().enumerate() {
        if lambda == 0.0 {
            continue;
        }
        let tau = mogdf_values(&tapered(frame, tapers, j), p).map_err(|e| Error::Taper {
            index: j,
            source: Box::new(e),
        })?;
        for (a, t) in acc.iter_mut().zip(&tau) {
            *a += lambda * t;
        }
    }
    let params = EstimateParams {
        mogdf: Some(*p),
        ..EstimateParams::plain(p.nfft).with_tapers(tapers)
    };
    SpectralEstimate::new(acc, EstimatorKind::MtMogdf, params)
}
