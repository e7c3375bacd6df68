//! GMM-UBM speaker verification: EM training of a background model,
//! means-only MAP enrolment, average log-likelihood-ratio scoring and
//! EER / minimum-DCF evaluation.
//!
//! ```
//! use mtgd::recognition::{compute_eer_dcf, CostModel, TrialScores};
//!
//! let trials = TrialScores::from_sets(&[0.8, 0.6, 0.4], &[0.7, 0.5, 0.3]).unwrap();
//! let m = compute_eer_dcf(&trials, &CostModel::default()).unwrap();
//! assert!((m.eer - 1.0 / 3.0).abs() < 1e-12);
//! ```

mod gmm;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gmm::{map_adapt, score_llr, train_gmm_em, GaussianMixture, TrainedGmm, VARIANCE_FLOOR};
pub use metrics::{compute_eer_dcf, det_curve, CostModel, DetPoint, DetectionMetrics, TrialScores};

use crate::error::{Error, Result};
use crate::export::{format_g17, read_json, write_csv, write_json};

/// Background-model and enrolment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub components: usize,
    pub iterations: usize,
    pub relevance: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            components: 64,
            iterations: 10,
            relevance: 16.0,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("recognition.components must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("recognition.iterations must be at least 1".into()));
        }
        if !(self.relevance > 0.0 && self.relevance.is_finite()) {
            return Err(Error::Config("recognition.relevance must be positive".into()));
        }
        Ok(())
    }
}

/// A mixture on disk together with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    /// `"ubm"` or the enrolled speaker id.
    pub id: String,
    pub model: GaussianMixture,
    pub config: GmmConfig,
    pub seed: u64,
    /// Whatever describes the features (estimator, options).
    #[serde(default)]
    pub features: serde_json::Value,
    /// EM log-likelihood trace for background models.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log_likelihoods: Vec<f64>,
}

impl ModelFile {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}

/// One verification trial: does `test_id` come from the speaker of
/// `model_id`?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub model_id: String,
    pub test_id: String,
    pub target: bool,
}

fn label_name(target: bool) -> &'static str {
    if target {
        "target"
    } else {
        "nontarget"
    }
}

pub fn write_trials(path: impl AsRef<Path>, trials: &[Trial]) -> Result<()> {
    write_csv(
        path,
        &["model_id", "test_id", "label"],
        trials
            .iter()
            .map(|t| [t.model_id.clone(), t.test_id.clone(), label_name(t.target).to_string()]),
    )
}

/// Read a `model_id,test_id,label` trial list; the header line is optional.
pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<Trial>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("model_id")) {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |m: String| Error::InvalidData(format!("{}:{}: {m}", path.display(), i + 1));
        if cells.len() < 3 {
            return Err(bad(format!("expected 3 fields, found {}", cells.len())));
        }
        let target = match cells[2] {
            "target" | "1" | "true" => true,
            "nontarget" | "0" | "false" => false,
            other => return Err(bad(format!("unknown label {other:?}"))),
        };
        out.push(Trial {
            model_id: cells[0].to_string(),
            test_id: cells[1].to_string(),
            target,
        });
    }
    Ok(out)
}

/// Write scored trials as `model_id,test_id,label,score`.
pub fn write_scores(path: impl AsRef<Path>, trials: &[Trial], scores: &[f64]) -> Result<()> {
    if trials.len() != scores.len() {
        return Err(Error::invalid("one score per trial required"));
    }
    write_csv(
        path,
        &["model_id", "test_id", "label", "score"],
        trials.iter().zip(scores).map(|(t, s)| {
            [
                t.model_id.clone(),
                t.test_id.clone(),
                label_name(t.target).to_string(),
                format_g17(*s),
            ]
        }),
    )
}

/// Read a file written by [`write_scores`].
pub fn read_scores(path: impl AsRef<Path>) -> Result<(Vec<Trial>, Vec<f64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut trials = Vec::new();
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |m: &str| Error::InvalidData(format!("{}:{}: {m}", path.display(), i + 1));
        if cells.len() != 4 {
            return Err(bad("expected model_id,test_id,label,score"));
        }
        let score: f64 = cells[3].parse().map_err(|_| bad("score is not a number"))?;
        trials.push(Trial {
            model_id: cells[0].into(),
            test_id: cells[1].into(),
            target: match cells[2] {
                "target" => true,
                "nontarget" => false,
                _ => return Err(bad("label must be target or nontarget")),
            },
        });
        scores.push(score);
    }
    Ok((trials, scores))
}
