use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::bin_frequencies;

pub fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn hz_from_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Filterbank design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_filters: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Scale each filter to unit sum instead of unit peak.
    pub normalize: bool,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_filters: 26,
            fmin: 0.0,
            fmax: 8000.0,
            normalize: false,
        }
    }
}

/// Triangular filters over the `nfft/2 + 1` bins of a half spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    filters: Array2<f64>,
    centers_hz: Vec<f64>,
    fmin: f64,
    fmax: f64,
    sample_rate: u32,
    nfft: usize,
}

/// Unit-peak triangles whose peaks are equally spaced in mel between `fmin`
/// and `fmax`; each triangle reaches from its left to its right neighbour.
pub fn mel_filterbank(nfft: usize, sample_rate: u32, n_filters: usize, fmin: f64, fmax: f64) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if sample_rate == 0 || nfft < 2 {
        return Err(Error::invalid("filterbank needs a positive sample rate and nfft >= 2"));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(Error::invalid(format!("filterbank band ({fmin}, {fmax}) outside [0, {nyquist}]")));
    }
    if n_filters == 0 {
        return Err(Error::invalid("filterbank needs at least one filter"));
    }
    let (lo, hi) = (mel(fmin), mel(fmax));
    let mut edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| hz_from_mel(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
        .collect();
    // pin the outer edges against round-off in the mel round trip
    edges[0] = fmin;
    edges[n_filters + 1] = fmax;
    let freqs = bin_frequencies(nfft, sample_rate);
    let mut filters = Array2::zeros((n_filters, freqs.len()));
    for f in 0..n_filters {
        let (left, center, right) = (edges[f], edges[f + 1], edges[f + 2]);
        for (b, &hz) in freqs.iter().enumerate() {
            let w = if hz > left && hz <= center {
                (hz - left) / (center - left)
            } else if hz > center && hz < right {
                (right - hz) / (right - center)
            } else {
                0.0
            };
            filters[[f, b]] = w;
        }
        if !filters.row(f).iter().any(|&w| w > 0.0) {
            return Err(Error::invalid(format!(
                "mel filter {f} ({left:.1}-{right:.1} Hz) covers no bin at nfft {nfft}; use fewer filters or a larger nfft"
            )));
        }
    }
    Ok(MelFilterbank {
        filters,
        centers_hz: edges[1..=n_filters].to_vec(),
        fmin,
        fmax,
        sample_rate,
        nfft,
    })
}

impl MelFilterbank {
    pub fn from_config(nfft: usize, sample_rate: u32, cfg: &MelConfig) -> Result<Self> {
        let fb = mel_filterbank(nfft, sample_rate, cfg.n_filters, cfg.fmin, cfg.fmax)?;
        Ok(if cfg.normalize { fb.row_normalized() } else { fb })
    }

    /// Each filter rescaled to unit sum.
    pub fn row_normalized(mut self) -> Self {
        for mut row in self.filters.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        self
    }

    pub fn filters(&self) -> &Array2<f64> {
        &self.filters
    }

    pub fn filter(&self, f: usize) -> ArrayView1<'_, f64> {
        self.filters.row(f)
    }

    pub fn n_filters(&self) -> usize {
        self.filters.nrows()
    }

    pub fn bins(&self) -> usize {
        self.filters.ncols()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn fmin(&self) -> f64 {
        self.fmin
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    /// Bin of each filter's largest weight.
    pub fn peak_bins(&self) -> Vec<usize> {
        self.filters
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (b, &w)| if w > best.1 { (b, w) } else { best })
                    .0
            })
            .collect()
    }

    /// Filter energies `filters . spectrum`.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.filters.dot(&ArrayView1::from(spectrum)).to_vec()
    }
}
