//! Cepstral and mel-cepstral features from spectral estimates.
//!
//! [`dct_cepstrum`] is the plain orthonormal DCT-II of a log spectrum, used by
//! the ensemble study. [`mel_cepstra`] runs the recognition front end: mel
//! filter energies, log, DCT.
//!
//! ```
//! use mtgd::features::{dct_cepstrum, mel};
//!
//! let c = dct_cepstrum(&[2.0; 16], 4).unwrap();
//! assert!((c.coefficients()[0] - 8.0).abs() < 1e-12);
//! assert!((mel(700.0) - 781.17).abs() < 0.01);
//! ```

mod filterbank;
mod matrix;

use serde::{Deserialize, Serialize};

pub use filterbank::{hz_from_mel, mel, mel_filterbank, MelConfig, MelFilterbank};
pub use matrix::{extract_features, FeatureMatrix, FeatureMeta, FeatureOptions};

use crate::error::{Error, Result};
use crate::spectral::{EstimatorKind, NegativeHandling, SpectralEstimate, MAGNITUDE_FLOOR};

/// Cepstral coefficients of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cepstrum {
    coefficients: Vec<f64>,
    /// Index of the first stored coefficient (1 when `c0` was dropped).
    first_index: usize,
    source: Option<EstimatorKind>,
}

impl Cepstrum {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn first_index(&self) -> usize {
        self.first_index
    }

    pub fn source(&self) -> Option<EstimatorKind> {
        self.source
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Orthonormal DCT-II basis truncated to its first `n_coeff` rows.
#[derive(Debug, Clone)]
pub struct Dct {
    len: usize,
    n_coeff: usize,
    basis: Vec<f64>,
}

impl Dct {
    pub fn new(len: usize, n_coeff: usize) -> Result<Self> {
        if len == 0 || n_coeff == 0 || n_coeff > len {
            return Err(Error::invalid(format!("cepstral order {n_coeff} outside [1, {len}]")));
        }
        let b = len as f64;
        let mut basis = Vec::with_capacity(n_coeff * len);
        for k in 0..n_coeff {
            let s = if k == 0 { (1.0 / b).sqrt() } else { (2.0 / b).sqrt() };
            for n in 0..len {
                let arg = std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / (2.0 * b);
                basis.push(s * arg.cos());
            }
        }
        Ok(Dct { len, n_coeff, basis })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_coeff(&self) -> usize {
        self.n_coeff
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.basis[k * self.len..(k + 1) * self.len]
    }

    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len {
            return Err(Error::invalid(format!("DCT of length {} applied to {} values", self.len, v.len())));
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::numerical(format!("non-finite log spectrum value at bin {i}")));
        }
        Ok((0..self.n_coeff)
            .map(|k| self.row(k).iter().zip(v).map(|(g, x)| g * x).sum())
            .collect())
    }

    /// Transpose of [`Dct::forward`]; the exact inverse when `n_coeff == len`.
    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n_coeff {
            return Err(Error::invalid(format!("{} coefficients for a {}-row DCT", c.len(), self.n_coeff)));
        }
        let mut out = vec![0.0; self.len];
        for (k, ck) in c.iter().enumerate() {
            for (o, g) in out.iter_mut().zip(self.row(k)) {
                *o += ck * g;
            }
        }
        Ok(out)
    }
}

/// First `n_coeff` orthonormal DCT-II coefficients of a log spectrum.
pub fn dct_cepstrum(log_spectrum: &[f64], n_coeff: usize) -> Result<Cepstrum> {
    let coefficients = Dct::new(log_spectrum.len(), n_coeff)?.forward(log_spectrum)?;
    Ok(Cepstrum {
        coefficients,
        first_index: 0,
        source: None,
    })
}

/// `x(n) - coeff * x(n-1)`, with the first sample passed through.
pub fn pre_emphasis(frame: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(frame.len());
    let mut prev = 0.0;
    for &x in frame {
        out.push(x - coeff * prev);
        prev = x;
    }
    out
}

/// Mel-frequency cepstrum of one spectral estimate.
///
/// `n_coeff` DCT coefficients are computed from the log filter energies; when
/// `include_c0` is false the first of them is dropped.
pub fn mel_cepstra(
    est: &SpectralEstimate,
    fb: &MelFilterbank,
    n_coeff: usize,
    include_c0: bool,
    handling: NegativeHandling,
) -> Result<Cepstrum> {
    if est.bins() != fb.bins() {
        return Err(Error::invalid(format!(
            "estimate has {} bins, filterbank expects {}",
            est.bins(),
            fb.bins()
        )));
    }
    if !include_c0 && n_coeff < 2 {
        return Err(Error::invalid("dropping c0 from a single coefficient leaves nothing"));
    }
    let spectrum = est.positive_floored(handling)?;
    let energies = fb.apply(&spectrum);
    let max = energies.iter().copied().fold(0.0, f64::max);
    let floor = MAGNITUDE_FLOOR * max;
    let logs: Vec<f64> = energies.iter().map(|e| e.max(floor).ln()).collect();
    let mut coefficients = Dct::new(fb.n_filters(), n_coeff)?.forward(&logs)?;
    let first_index = if include_c0 {
        0
    } else {
        coefficients.remove(0);
        1
    };
    Ok(Cepstrum {
        coefficients,
        first_index,
        source: Some(est.estimator()),
    })
}
