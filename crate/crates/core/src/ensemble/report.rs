use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Domain, ReferenceMethod};
use crate::error::{Error, Result};
use crate::export::{format_g17, write_csv, write_json};
use crate::spectral::{EstimateParams, EstimatorKind, NegativeHandling};

const MSE_TOLERANCE: f64 = 1e-9;

/// Where an ensemble report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub estimator: EstimatorKind,
    pub params: EstimateParams,
    pub reference_method: Option<ReferenceMethod>,
    pub negative: NegativeHandling,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub source_id: String,
    pub label: Option<String>,
    /// Frames dropped because the estimator failed on them.
    pub skipped: Vec<usize>,
}

/// Per-index log-domain statistics of one estimator over one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    bias: Vec<f64>,
    variance: Vec<f64>,
    mse: Vec<f64>,
    reference: Vec<f64>,
    /// Bin frequency in Hz, or quefrency in seconds for cepstral reports.
    axis: Vec<f64>,
    n_realizations: usize,
    domain: Domain,
    meta: ReportMeta,
}

/// Means over a band of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_abs_bias: f64,
    pub mean_variance: f64,
    pub mean_mse: f64,
    pub n_indices: usize,
}

/// Quefrency in seconds of each DCT index over a `bins`-point half spectrum.
pub(crate) fn quefrency_axis(n_coeff: usize, bins: usize, nfft: usize, sample_rate: u32) -> Vec<f64> {
    let span = 2.0 * bins as f64 * sample_rate as f64 / nfft as f64;
    (0..n_coeff).map(|k| k as f64 / span).collect()
}

impl EnsembleReport {
    /// Assemble a report; `mse` is formed as `bias^2 + variance`.
    pub fn new(
        bias: Vec<f64>,
        variance: Vec<f64>,
        reference: Vec<f64>,
        axis: Vec<f64>,
        n_realizations: usize,
        domain: Domain,
        meta: ReportMeta,
    ) -> Result<Self> {
        let len = bias.len();
        if variance.len() != len || axis.len() != len {
            return Err(Error::invalid("bias, variance and axis lengths differ"));
        }
        if n_realizations < 2 {
            return Err(Error::invalid("a report needs at least 2 realizations"));
        }
        if let Some(k) = variance.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::numerical(format!("negative or undefined variance at index {k}")));
        }
        if let Some(k) = bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite bias at index {k}")));
        }
        let mse = bias.iter().zip(&variance).map(|(b, v)| b * b + v).collect();
        let report = EnsembleReport {
            bias,
            variance,
            mse,
            reference,
            axis,
            n_realizations,
            domain,
            meta,
        };
        report.check()?;
        Ok(report)
    }

    /// Re-assert `mse = bias^2 + variance` and `variance >= 0` per index.
    pub fn check(&self) -> Result<()> {
        for k in 0..self.len() {
            let want = self.bias[k] * self.bias[k] + self.variance[k];
            if (self.mse[k] - want).abs() > MSE_TOLERANCE * want.abs().max(1.0) || self.variance[k] < 0.0 {
                return Err(Error::numerical(format!("MSE decomposition broken at index {k}")));
            }
        }
        Ok(())
    }

    pub fn with_reference_method(mut self, method: ReferenceMethod) -> Self {
        self.meta.reference_method = Some(method);
        self
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn mse(&self) -> &[f64] {
        &self.mse
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn n_realizations(&self) -> usize {
        self.n_realizations
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn meta(&self) -> &ReportMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bias.is_empty()
    }

    /// CSV with columns `index,hz_or_quefrency,bias,variance,mse`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(
            path,
            &["index", "hz_or_quefrency", "bias", "variance", "mse"],
            (0..self.len()).map(|k| {
                [
                    k.to_string(),
                    format_g17(self.axis[k]),
                    format_g17(self.bias[k]),
                    format_g17(self.variance[k]),
                    format_g17(self.mse[k]),
                ]
            }),
        )
    }

    /// JSON sidecar with the metadata, reference and full-band summary.
    pub fn write_sidecar(&self, path: impl AsRef<Path>, extra: &serde_json::Value) -> Result<()> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            domain: Domain,
            n_realizations: usize,
            axis_unit: &'static str,
            meta: &'a ReportMeta,
            summary: Summary,
            reference: &'a [f64],
            config: &'a serde_json::Value,
        }
        write_json(
            path,
            &Sidecar {
                domain: self.domain,
                n_realizations: self.n_realizations,
                axis_unit: match self.domain {
                    Domain::Spectral => "hz",
                    Domain::Cepstral => "seconds",
                },
                meta: &self.meta,
                summary: aggregate(self, None)?,
                reference: &self.reference,
                config: extra,
            },
        )
    }
}

fn summarize(report: &EnsembleReport, indices: impl Iterator<Item = usize>) -> Result<Summary> {
    let (mut b, mut v, mut m, mut n) = (0.0, 0.0, 0.0, 0usize);
    for k in indices {
        b += report.bias[k].abs();
        v += report.variance[k];
        m += report.mse[k];
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("aggregation band contains no index"));
    }
    let n_f = n as f64;
    Ok(Summary {
        mean_abs_bias: b / n_f,
        mean_variance: v / n_f,
        mean_mse: m / n_f,
        n_indices: n,
    })
}

/// Means of `|bias|`, variance and MSE over the indices whose axis value lies
/// in `[lo, hi]`, or over every index when `band` is `None`.
///
/// For spectral reports the band is in Hz and must lie within Nyquist.
pub fn aggregate(report: &EnsembleReport, band: Option<(f64, f64)>) -> Result<Summary> {
    match band {
        None => summarize(report, 0..report.len()),
        Some((lo, hi)) => {
            if !(lo >= 0.0 && lo <= hi) {
                return Err(Error::invalid(format!("band ({lo}, {hi}) is not an interval")));
            }
            if report.domain == Domain::Spectral && hi > report.meta.sample_rate as f64 / 2.0 {
                return Err(Error::invalid(format!("band upper edge {hi} Hz exceeds Nyquist")));
            }
            summarize(report, (0..report.len()).filter(|&k| report.axis[k] >= lo && report.axis[k] <= hi))
        }
    }
}

/// Means over a contiguous index range.
pub fn aggregate_range(report: &EnsembleReport, range: std::ops::Range<usize>) -> Result<Summary> {
    if range.end > report.len() {
        return Err(Error::invalid(format!("index range {range:?} exceeds {} indices", report.len())));
    }
    summarize(report, range)
}
