use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection scores with their ground-truth labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialScores {
    scores: Vec<f64>,
    targets: Vec<bool>,
}

impl TrialScores {
    pub fn new(scores: Vec<f64>, targets: Vec<bool>) -> Result<Self> {
        if scores.len() != targets.len() {
            return Err(Error::invalid("one label per score required"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidData(format!("trial {i} has a non-finite score")));
        }
        Ok(TrialScores { scores, targets })
    }

    pub fn from_sets(target: &[f64], nontarget: &[f64]) -> Result<Self> {
        let scores = target.iter().chain(nontarget).copied().collect();
        let targets = std::iter::repeat_n(true, target.len()).chain(std::iter::repeat_n(false, nontarget.len())).collect();
        Self::new(scores, targets)
    }

    pub fn push(&mut self, score: f64, target: bool) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::InvalidData("non-finite trial score".into()));
        }
        self.scores.push(score);
        self.targets.push(target);
        Ok(())
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_target(&self) -> usize {
        self.targets.iter().filter(|t| **t).count()
    }

    pub fn n_nontarget(&self) -> usize {
        self.len() - self.n_target()
    }
}

/// Operating costs for the detection cost function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            p_target: 0.001,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::Config(format!("p_target {} must lie in (0, 1)", self.p_target)));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::Config("detection costs must be positive".into()));
        }
        Ok(())
    }

    fn default_cost(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }
}

/// One point of the miss / false-alarm trade-off. Trials scoring at or above
/// `threshold` are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    /// Equal error rate as a fraction.
    pub eer: f64,
    /// Minimum detection cost normalised by the cost of the best trivial
    /// system.
    pub min_dcf: f64,
    pub min_dcf_threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub det: Vec<DetPoint>,
}

/// Miss and false-alarm rates at every distinct score, plus both extremes.
pub fn det_curve(trials: &TrialScores) -> Result<Vec<DetPoint>> {
    let nt = trials.n_target();
    let nn = trials.n_nontarget();
    if nt == 0 || nn == 0 {
        return Err(Error::InvalidData(format!(
            "need target and non-target trials, got {nt} and {nn}"
        )));
    }
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials.scores[a].total_cmp(&trials.scores[b]));
    let mut points = vec![DetPoint {
        threshold: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_fa: 1.0,
    }];
    // rejected so far, by class
    let (mut miss, mut rejected_nontarget) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = trials.scores[order[i]];
        points.push(DetPoint {
            threshold: s,
            p_miss: miss as f64 / nt as f64,
            p_fa: (nn - rejected_nontarget) as f64 / nn as f64,
        });
        while i < order.len() && trials.scores[order[i]] == s {
            if trials.targets[order[i]] {
                miss += 1;
            } else {
                rejected_nontarget += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(points)
}

/// Equal error rate (linearly interpolated on the DET steps) and normalised
/// minimum detection cost.
pub fn compute_eer_dcf(trials: &TrialScores, cost: &CostModel) -> Result<DetectionMetrics> {
    cost.validate()?;
    let det = det_curve(trials)?;
    let mut eer = f64::NAN;
    for w in det.windows(2) {
        let (a, b) = (w[0], w[1]);
        let da = a.p_miss - a.p_fa;
        let db = b.p_miss - b.p_fa;
        if da == 0.0 {
            eer = a.p_miss;
            break;
        }
        if da < 0.0 && db >= 0.0 {
            let t = -da / (db - da);
            eer = a.p_miss + t * (b.p_miss - a.p_miss);
            break;
        }
    }
    let norm = cost.default_cost();
    let (mut min_dcf, mut min_dcf_threshold) = (f64::INFINITY, f64::NAN);
    for p in &det {
        let c = (cost.c_miss * cost.p_target * p.p_miss + cost.c_fa * (1.0 - cost.p_target) * p.p_fa) / norm;
        if c < min_dcf {
            min_dcf = c;
            min_dcf_threshold = p.threshold;
        }
    }
    Ok(DetectionMetrics {
        eer,
        min_dcf,
        min_dcf_threshold,
        n_target: trials.n_target(),
        n_nontarget: trials.n_nontarget(),
        det,
    })
}
