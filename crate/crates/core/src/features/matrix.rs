use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mel_cepstra, pre_emphasis, MelConfig, MelFilterbank};
use crate::corpus::FrameSet;
use crate::error::{Error, Result};
use crate::export::{format_g17, read_json, write_csv, write_json};
use crate::spectral::{EstimateParams, Estimator, EstimatorKind, NegativeHandling};

/// Front-end settings shared by every frame of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureOptions {
    pub mel: MelConfig,
    /// DCT order before the optional `c0` drop.
    pub n_coeff: usize,
    pub include_c0: bool,
    pub pre_emphasis: Option<f64>,
    pub negative: NegativeHandling,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            mel: MelConfig::default(),
            n_coeff: 13,
            include_c0: false,
            pre_emphasis: None,
            negative: NegativeHandling::Floor,
        }
    }
}

/// Provenance of a feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub estimator: EstimatorKind,
    pub params: EstimateParams,
    pub options: FeatureOptions,
    pub sample_rate: u32,
    pub source_id: String,
    pub first_index: usize,
}

/// Mel-cepstral features, one frame per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub meta: FeatureMeta,
    rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(meta: FeatureMeta, rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let dim = first.len();
            if let Some(i) = rows.iter().position(|r| r.len() != dim) {
                return Err(Error::InvalidData(format!("feature row {i} has {} values, expected {dim}", rows[i].len())));
            }
        }
        if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::numerical(format!("feature row {i} is not finite")));
        }
        Ok(FeatureMatrix { meta, rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn to_array(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.len(), self.dim()));
        for (mut dst, src) in a.rows_mut().into_iter().zip(&self.rows) {
            dst.assign(&ArrayView1::from(src.as_slice()));
        }
        a
    }

    /// Append the rows of `other`; provenance of `self` is kept.
    pub fn extend(&mut self, other: &FeatureMatrix) -> Result<()> {
        if !self.is_empty() && !other.is_empty() && other.dim() != self.dim() {
            return Err(Error::InvalidData(format!(
                "cannot stack {}-dimensional features onto {}-dimensional ones",
                other.dim(),
                self.dim()
            )));
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|k| format!("c{}", k + self.meta.first_index)).collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(path, &header, self.rows.iter().map(|r| r.iter().map(|v| format_g17(*v)).collect::<Vec<_>>()))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let m: FeatureMatrix = read_json(path)?;
        FeatureMatrix::new(m.meta, m.rows)
    }
}

/// Mel-cepstral features of every frame, computed in parallel and returned
/// in frame order.
pub fn extract_features<E: Estimator + ?Sized>(
    frames: &FrameSet,
    estimator: &E,
    options: &FeatureOptions,
) -> Result<FeatureMatrix> {
    let fb = MelFilterbank::from_config(estimator.params().nfft, frames.sample_rate(), &options.mel)?;
    let rows = (0..frames.len())
        .into_par_iter()
        .map(|i| {
            let raw = frames.frame(i);
            let raw = raw.as_slice().expect("frame rows are contiguous");
            let frame = match options.pre_emphasis {
                Some(c) => pre_emphasis(raw, c),
                None => raw.to_vec(),
            };
            estimator
                .estimate(&frame)
                .and_then(|est| mel_cepstra(&est, &fb, options.n_coeff, options.include_c0, options.negative))
                .map(|c| c.into_coefficients())
                .map_err(|e| Error::Frame {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = FeatureMeta {
        estimator: estimator.kind(),
        params: estimator.params(),
        options: options.clone(),
        sample_rate: frames.sample_rate(),
        source_id: frames.source_id().to_string(),
        first_index: usize::from(!options.include_c0),
    };
    FeatureMatrix::new(meta, rows)
}
