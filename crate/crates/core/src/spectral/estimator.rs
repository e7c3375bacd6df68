use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{group_delay, mogdf, mt_mag, mt_mogdf, periodogram, EstimateParams, MogdfParams, SpectralEstimate};
use crate::error::{Error, Result};
use crate::tapers::TaperSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Periodogram,
    Gdf,
    Mogdf,
    MtMag,
    MtMogdf,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Periodogram,
        EstimatorKind::Gdf,
        EstimatorKind::Mogdf,
        EstimatorKind::MtMag,
        EstimatorKind::MtMogdf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Periodogram => "periodogram",
            EstimatorKind::Gdf => "gdf",
            EstimatorKind::Mogdf => "mogdf",
            EstimatorKind::MtMag => "mt_mag",
            EstimatorKind::MtMogdf => "mt_mogdf",
        }
    }

    pub fn uses_tapers(self) -> bool {
        matches!(self, EstimatorKind::MtMag | EstimatorKind::MtMogdf)
    }

    /// Estimators whose output is non-negative by construction.
    pub fn is_power(self) -> bool {
        matches!(self, EstimatorKind::Periodogram | EstimatorKind::MtMag)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

/// Anything that maps a frame to a spectral estimate.
pub trait Estimator: Sync {
    fn estimate(&self, frame: &[f64]) -> Result<SpectralEstimate>;

    /// Number of output bins.
    fn bins(&self) -> usize;

    fn kind(&self) -> EstimatorKind;

    fn params(&self) -> EstimateParams;
}

/// A fully parameterized estimator.
#[derive(Debug, Clone)]
pub enum EstimatorConfig {
    Periodogram { nfft: usize },
    Gdf { nfft: usize },
    Mogdf(MogdfParams),
    MtMag { tapers: Arc<TaperSet>, nfft: usize },
    MtMogdf { tapers: Arc<TaperSet>, params: MogdfParams },
}

impl EstimatorConfig {
    /// Build the configuration for `kind`; `tapers` is required by the
    /// multitaper estimators and ignored otherwise.
    pub fn build(kind: EstimatorKind, params: MogdfParams, tapers: Option<Arc<TaperSet>>) -> Result<Self> {
        let need = || Error::Config(format!("estimator {kind} needs a taper set"));
        Ok(match kind {
            EstimatorKind::Periodogram => EstimatorConfig::Periodogram { nfft: params.nfft },
            EstimatorKind::Gdf => EstimatorConfig::Gdf { nfft: params.nfft },
            EstimatorKind::Mogdf => EstimatorConfig::Mogdf(params),
            EstimatorKind::MtMag => EstimatorConfig::MtMag {
                tapers: tapers.ok_or_else(need)?,
                nfft: params.nfft,
            },
            EstimatorKind::MtMogdf => EstimatorConfig::MtMogdf {
                tapers: tapers.ok_or_else(need)?,
                params,
            },
        })
    }

    pub fn nfft(&self) -> usize {
        match self {
            EstimatorConfig::Periodogram { nfft } | EstimatorConfig::Gdf { nfft } => *nfft,
            EstimatorConfig::MtMag { nfft, .. } => *nfft,
            EstimatorConfig::Mogdf(p) | EstimatorConfig::MtMogdf { params: p, .. } => p.nfft,
        }
    }

    pub fn tapers(&self) -> Option<&TaperSet> {
        match self {
            EstimatorConfig::MtMag { tapers, .. } | EstimatorConfig::MtMogdf { tapers, .. } => Some(tapers),
            _ => None,
        }
    }
}

impl Estimator for EstimatorConfig {
    fn estimate(&self, frame: &[f64]) -> Result<SpectralEstimate> {
        match self {
            EstimatorConfig::Periodogram { nfft } => periodogram(frame, *nfft),
            EstimatorConfig::Gdf { nfft } => group_delay(frame, *nfft),
            EstimatorConfig::Mogdf(p) => mogdf(frame, p),
            EstimatorConfig::MtMag { tapers, nfft } => mt_mag(frame, tapers, *nfft),
            EstimatorConfig::MtMogdf { tapers, params } => mt_mogdf(frame, tapers, params),
        }
    }

    fn bins(&self) -> usize {
        self.nfft() / 2 + 1
    }

    fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorConfig::Periodogram { .. } => EstimatorKind::Periodogram,
            EstimatorConfig::Gdf { .. } => EstimatorKind::Gdf,
            EstimatorConfig::Mogdf(_) => EstimatorKind::Mogdf,
            EstimatorConfig::MtMag { .. } => EstimatorKind::MtMag,
            EstimatorConfig::MtMogdf { .. } => EstimatorKind::MtMogdf,
        }
    }

    fn params(&self) -> EstimateParams {
        let mut p = EstimateParams::plain(self.nfft());
        if let EstimatorConfig::Mogdf(m) | EstimatorConfig::MtMogdf { params: m, .. } = self {
            p.mogdf = Some(*m);
        }
        if let Some(t) = self.tapers() {
            p = p.with_tapers(t);
        }
        p
    }
}
