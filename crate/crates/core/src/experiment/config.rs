use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::AudioFormat;
use crate::ensemble::{Domain, EvaluateOptions, ReferenceMethod};
use crate::error::{Error, Result};
use crate::features::FeatureOptions;
use crate::recognition::{CostModel, GmmConfig};
use crate::spectral::{EstimatorKind, MogdfParams, NegativeHandling};
use crate::synth::{SynthConfig, VowelEnsembleConfig};
use crate::tapers::Weighting;

/// Where the analysed speech comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    /// Generate a synthetic corpus from `[synth]` into `corpus.root`.
    #[default]
    Synthetic,
    /// An existing directory of audio files with `.PHN` alignments.
    Files,
    /// A single seeded vowel ensemble from `[vowel_ensemble]` (ensemble
    /// experiments only).
    VowelEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub source: CorpusSource,
    /// Corpus directory; defaults to `<out>/corpus` for synthetic corpora.
    pub root: Option<PathBuf>,
    pub format: AudioFormat,
    /// Phone labels whose segments form the ensembles.
    pub labels: Vec<String>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            source: CorpusSource::Synthetic,
            root: None,
            format: AudioFormat::Auto,
            labels: vec!["aa".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub frame_ms: f64,
    pub overlap: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        FrameSection {
            frame_ms: 10.0,
            overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaperChoice {
    #[default]
    Thomson,
    Sine,
    /// Read from `tapers.path` (and optionally `tapers.weights_path`).
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaperSection {
    pub family: TaperChoice,
    pub nw: f64,
    /// Taper count for single-configuration commands and recognition.
    pub n: usize,
    pub weighting: Weighting,
    pub path: Option<PathBuf>,
    pub weights_path: Option<PathBuf>,
}

impl Default for TaperSection {
    fn default() -> Self {
        TaperSection {
            family: TaperChoice::Thomson,
            nw: 4.0,
            n: 8,
            weighting: Weighting::Uniform,
            path: None,
            weights_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub names: Vec<EstimatorKind>,
    pub alpha: f64,
    pub gamma: f64,
    pub lifter_length: usize,
    pub nfft: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let p = MogdfParams::default();
        EstimatorSection {
            names: vec![EstimatorKind::MtMag, EstimatorKind::MtMogdf],
            alpha: p.alpha,
            gamma: p.gamma,
            lifter_length: p.lifter_length,
            nfft: p.nfft,
        }
    }
}

impl EstimatorSection {
    pub fn mogdf_params(&self) -> MogdfParams {
        MogdfParams {
            alpha: self.alpha,
            gamma: self.gamma,
            lifter_length: self.lifter_length,
            nfft: self.nfft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub domains: Vec<Domain>,
    pub reference: ReferenceMethod,
    /// Taper counts swept by the ensemble experiment.
    pub n_tapers: Vec<usize>,
    pub negative: NegativeHandling,
    pub skip_failures: bool,
    pub cepstral_coeffs: Option<usize>,
    /// Extra frequency bands summarised for spectral reports.
    pub bands_hz: Vec<(f64, f64)>,
    /// Extra index ranges `[lo, hi)` summarised for cepstral reports.
    pub cepstral_ranges: Vec<(usize, usize)>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            domains: Domain::ALL.to_vec(),
            reference: ReferenceMethod::MeanLogSpectrum,
            n_tapers: vec![2, 4, 8],
            negative: NegativeHandling::Floor,
            skip_failures: false,
            cepstral_coeffs: None,
            bands_hz: Vec::new(),
            cepstral_ranges: vec![(0, 13)],
        }
    }
}

impl EnsembleSection {
    pub fn evaluate_options(&self) -> EvaluateOptions {
        EvaluateOptions {
            negative: self.negative,
            skip_failures: self.skip_failures,
            cepstral_coeffs: self.cepstral_coeffs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionSection {
    /// Estimators used as feature front ends, one table column each.
    pub features: Vec<EstimatorKind>,
    pub speaker_counts: Vec<usize>,
    /// Leading utterances (by id) of each speaker used for enrolment; the
    /// rest are test utterances.
    pub enroll_utterances: usize,
    pub gmm: GmmConfig,
    pub cost: CostModel,
}

impl Default for RecognitionSection {
    fn default() -> Self {
        RecognitionSection {
            features: vec![EstimatorKind::Periodogram, EstimatorKind::MtMag, EstimatorKind::MtMogdf],
            speaker_counts: vec![10],
            enroll_utterances: 3,
            gmm: GmmConfig::default(),
            cost: CostModel::default(),
        }
    }
}

/// Everything one experiment run needs. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub vowel_ensemble: VowelEnsembleConfig,
    #[serde(default)]
    pub frames: FrameSection,
    #[serde(default)]
    pub tapers: TaperSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub features: FeatureOptions,
    #[serde(default)]
    pub recognition: RecognitionSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parse the right-hand side of an override as a TOML value, falling back to
/// a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `dotted.key` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_error(format!("malformed override key {key:?}")));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for (i, p) in path.iter().enumerate() {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(config_error(format!("{}: not a section", parts[..=i].join(".")))),
        };
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Parse TOML text, apply `key=value` overrides, validate. Relative
    /// paths are resolved against `base`.
    pub fn from_toml(text: &str, overrides: &[(String, String)], base: Option<&Path>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let merged = toml::to_string(&table).map_err(|e| config_error(e.to_string()))?;
        let mut cfg: ExperimentConfig = toml::from_str(&merged).map_err(|e| config_error(e.to_string().trim_end().to_string()))?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from a file (or defaults when `path` is `None`) with overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text, overrides, p.parent())
            }
            None => Self::from_toml("", overrides, None),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !base.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [&mut self.corpus.root, &mut self.tapers.path, &mut self.tapers.weights_path]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Corpus directory after defaults.
    pub fn corpus_root(&self) -> PathBuf {
        self.corpus.root.clone().unwrap_or_else(|| self.out.join("corpus"))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: &str| Err(config_error(format!("{field}: {msg}")));
        match self.corpus.source {
            CorpusSource::Files => match &self.corpus.root {
                None => return fail("corpus.root", "required when corpus.source = \"files\""),
                Some(p) if !p.is_dir() => {
                    return Err(config_error(format!("corpus.root: {} does not exist", p.display())))
                }
                _ => {}
            },
            CorpusSource::Synthetic => self.synth.validate().map_err(|e| config_error(format!("synth: {e}")))?,
            CorpusSource::VowelEnsemble => {}
        }
        if self.corpus.source != CorpusSource::VowelEnsemble && self.corpus.labels.is_empty() {
            return fail("corpus.labels", "at least one phone label is required");
        }
        if !(self.frames.frame_ms > 0.0) {
            return fail("frames.frame_ms", "must be positive");
        }
        if !(0.0..1.0).contains(&self.frames.overlap) {
            return fail("frames.overlap", "must lie in [0, 1)");
        }
        if !(self.tapers.nw > 0.0) {
            return fail("tapers.nw", "must be positive");
        }
        if self.tapers.n == 0 {
            return fail("tapers.n", "must be at least 1");
        }
        if self.tapers.family == TaperChoice::File {
            match &self.tapers.path {
                None => return fail("tapers.path", "required when tapers.family = \"file\""),
                Some(p) if !p.is_file() => return Err(config_error(format!("tapers.path: {} does not exist", p.display()))),
                _ => {}
            }
        }
        if let Some(p) = self.tapers.weights_path.as_ref().filter(|p| !p.is_file()) {
            return Err(config_error(format!("tapers.weights_path: {} does not exist", p.display())));
        }
        if self.estimators.names.is_empty() {
            return fail("estimators.names", "at least one estimator is required");
        }
        self.estimators
            .mogdf_params()
            .validate()
            .map_err(|e| config_error(format!("estimators: {e}")))?;
        if self.ensemble.domains.is_empty() {
            return fail("ensemble.domains", "at least one domain is required");
        }
        if self.ensemble.n_tapers.is_empty() || self.ensemble.n_tapers.contains(&0) {
            return fail("ensemble.n_tapers", "needs at least one positive taper count");
        }
        if self.ensemble.cepstral_coeffs == Some(0) {
            return fail("ensemble.cepstral_coeffs", "must be at least 1");
        }
        if self.ensemble.bands_hz.iter().any(|(lo, hi)| !(lo < hi)) {
            return fail("ensemble.bands_hz", "every band needs lo < hi");
        }
        if self.ensemble.cepstral_ranges.iter().any(|(lo, hi)| lo >= hi) {
            return fail("ensemble.cepstral_ranges", "every range needs lo < hi");
        }
        if self.features.n_coeff == 0 || (!self.features.include_c0 && self.features.n_coeff < 2) {
            return fail("features.n_coeff", "too small to leave a coefficient");
        }
        if self.features.mel.n_filters == 0 {
            return fail("features.mel.n_filters", "must be at least 1");
        }
        if self.recognition.features.is_empty() {
            return fail("recognition.features", "at least one feature type is required");
        }
        if self.recognition.speaker_counts.is_empty() || self.recognition.speaker_counts.contains(&0) {
            return fail("recognition.speaker_counts", "needs at least one positive speaker count");
        }
        if self.recognition.enroll_utterances == 0 {
            return fail("recognition.enroll_utterances", "must be at least 1");
        }
        self.recognition.gmm.validate()?;
        self.recognition
            .cost
            .validate()
            .map_err(|e| config_error(format!("recognition.cost: {e}")))?;
        Ok(())
    }
}
