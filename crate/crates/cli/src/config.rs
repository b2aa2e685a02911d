//! Experiment configuration.
//!
//! A run is described by one TOML file. Every field has a default, so a
//! file only needs the keys it changes; `--preset` picks the base that the
//! file is merged onto. Unknown keys are rejected with their full path.
//!
//! ```toml
//! experiment = "deconv"        # deconv | dereverb | custom
//! seed = 1
//! optimal = ["lmmse", "lav", "quad", "tikh-weighted"]
//! learned = ["aff", "lav", "quad", "tikh"]
//!
//! [deconv]
//! n = 200
//! halfwidth = 30
//! sigma_first = 1e-2
//! sigma_last = 5e-4
//! train_size = 50000
//! test_size = 20000
//!
//! [dereverb]
//! n = 500
//! etas = [0.1, 0.2, 0.3, 0.4, 0.5]
//! train_size = 21147
//! test_size = 4601
//! cutoff_hz = 3000.0
//! sample_rate_hz = 8000.0
//! # wav_train_dir = "corpus/train"   # optional: real frames instead of
//! # wav_test_dir = "corpus/test"     # synthetic speech-like signals
//!
//! [custom]
//! n = 40
//! signal = "plateau"           # plateau | speech-like
//! kernel = "hat"               # hat | reverb
//! halfwidth = 5
//! noise = "white"              # white | linear-decay | wind
//! sigma = 0.05                 # white
//! sigma_first = 1e-2           # linear-decay
//! sigma_last = 5e-4
//! etas = [0.1]                 # wind
//! train_size = 5000
//! test_size = 2000
//!
//! [fit]
//! jitter_rel = 1e-10
//! quad_pd_rel_tol = 0.0
//! known_noise = true           # use the generator's Σ_ε when it has one
//!
//! [train]
//! initial_lr = 1e-4
//! batch_size = 32
//! epochs = 200
//! adam_beta1 = 0.9
//! adam_beta2 = 0.999
//! adam_eps = 1e-8
//! normalization = "per-dimension"   # per-dimension | sum-of-squares
//! divergence_factor = 1e6
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use regopt::datagen::SpeechLikeParams;
use regopt::estimators::Normalization;
use regopt::experiment::{DeconvSetup, DereverbSetup, FitOptions, OptimalMethod};
use regopt::trainer::{TrainConfig, Variant};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Deconv,
    Dereverb,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Deconv => "deconv",
            ExperimentKind::Dereverb => "dereverb",
            ExperimentKind::Custom => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub optimal: Vec<String>,
    pub learned: Vec<String>,
    pub deconv: DeconvSection,
    pub dereverb: DereverbSection,
    pub custom: CustomSection,
    pub fit: FitSection,
    pub train: TrainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeconvSection {
    pub n: usize,
    pub halfwidth: usize,
    pub sigma_first: f64,
    pub sigma_last: f64,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DereverbSection {
    pub n: usize,
    pub etas: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wav_train_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wav_test_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Plateau,
    SpeechLike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Hat,
    Reverb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    LinearDecay,
    Wind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomSection {
    pub n: usize,
    pub signal: SignalKind,
    pub kernel: KernelKind,
    pub halfwidth: usize,
    pub noise: NoiseKind,
    pub sigma: f64,
    pub sigma_first: f64,
    pub sigma_last: f64,
    pub etas: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub jitter_rel: f64,
    pub quad_pd_rel_tol: f64,
    pub known_noise: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationName {
    PerDimension,
    SumOfSquares,
}

impl From<NormalizationName> for Normalization {
    fn from(n: NormalizationName) -> Self {
        match n {
            NormalizationName::PerDimension => Normalization::PerDimension,
            NormalizationName::SumOfSquares => Normalization::SumOfSquares,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub initial_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub normalization: NormalizationName,
    pub divergence_factor: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Deconv,
            seed: 1,
            optimal: OptimalMethod::ALL.iter().map(|m| m.name().to_string()).collect(),
            learned: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
            deconv: DeconvSection::default(),
            dereverb: DereverbSection::default(),
            custom: CustomSection::default(),
            fit: FitSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl Default for DeconvSection {
    fn default() -> Self {
        let d = DeconvSetup::default();
        Self {
            n: d.n,
            halfwidth: d.halfwidth,
            sigma_first: d.sigma_first,
            sigma_last: d.sigma_last,
            train_size: d.train_size,
            test_size: d.test_size,
        }
    }
}

impl Default for DereverbSection {
    fn default() -> Self {
        let d = DereverbSetup::default();
        Self {
            n: d.n,
            etas: d.etas,
            train_size: d.train_size,
            test_size: d.test_size,
            cutoff_hz: d.cutoff_hz,
            sample_rate_hz: d.sample_rate_hz,
            wav_train_dir: None,
            wav_test_dir: None,
        }
    }
}

impl Default for CustomSection {
    fn default() -> Self {
        Self {
            n: 40,
            signal: SignalKind::Plateau,
            kernel: KernelKind::Hat,
            halfwidth: 5,
            noise: NoiseKind::White,
            sigma: 0.05,
            sigma_first: 1e-2,
            sigma_last: 5e-4,
            etas: vec![0.1],
            train_size: 5000,
            test_size: 2000,
        }
    }
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            jitter_rel: FitOptions::default().jitter_rel,
            // B is numerically semidefinite for the blur operators here
            quad_pd_rel_tol: 0.0,
            known_noise: true,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            initial_lr: t.initial_lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            adam_beta1: t.adam_betas.0,
            adam_beta2: t.adam_betas.1,
            adam_eps: t.adam_eps,
            normalization: NormalizationName::PerDimension,
            divergence_factor: t.divergence_factor,
        }
    }
}

pub const PRESETS: [&str; 4] = ["deconv", "deconv-small", "dereverb", "dereverb-small"];

/// Built-in configurations.
pub fn preset(name: &str) -> Result<Config, CliError> {
    let mut c = Config::default();
    match name {
        "deconv" => {}
        "deconv-small" => {
            let s = DeconvSetup::small();
            c.deconv.train_size = s.train_size;
            c.deconv.test_size = s.test_size;
        }
        "dereverb" | "dereverb-small" => {
            c.experiment = ExperimentKind::Dereverb;
            if name == "dereverb-small" {
                let s = DereverbSetup::small();
                c.dereverb.train_size = s.train_size;
                c.dereverb.test_size = s.test_size;
                c.dereverb.etas = vec![0.1, 0.3, 0.5];
                c.train.epochs = 20;
                // 20 epochs of 63 steps leave lr 1e-4 far from convergence
                c.train.initial_lr = 5e-4;
            }
            c.fit.known_noise = false;
        }
        other => {
            return Err(CliError::Config(format!(
                "--preset: unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(c)
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses TOML text on top of `base`, reporting the offending key path.
pub fn parse_onto(base: &Config, text: &str, origin: &str) -> Result<Config, CliError> {
    let over: toml::Value = text
        .parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| CliError::Config(format!("{origin}: {}", e.message())))?;
    let mut value = toml::Value::try_from(base).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    merge(&mut value, over);
    let cfg: Config = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{origin}: {path}: {}", e.into_inner().message()))
    })?;
    cfg.validate().map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{origin}: {msg}")),
        other => other,
    })?;
    Ok(cfg)
}

/// Resolves `--preset` and `--config`; at least one is required.
pub fn load(config: Option<&Path>, preset_name: Option<&str>) -> Result<Config, CliError> {
    let base = match preset_name {
        Some(p) => preset(p)?,
        None if config.is_none() => {
            return Err(CliError::Config("no configuration: pass --config PATH or --preset NAME".into()))
        }
        None => Config::default(),
    };
    match config {
        None => Ok(base),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
            parse_onto(&base, &text, &path.display().to_string())
        }
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{path}: must be a positive number, got {v}")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<(), CliError> {
    if v > 0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{path}: must be at least 1")))
    }
}

fn etas_ok(path: &str, etas: &[f64]) -> Result<(), CliError> {
    if etas.is_empty() {
        return Err(CliError::Config(format!("{path}: needs at least one noise level")));
    }
    for (i, &e) in etas.iter().enumerate() {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(CliError::Config(format!("{path}[{i}]: noise level must be >= 0, got {e}")));
        }
    }
    Ok(())
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        for (i, m) in self.optimal.iter().enumerate() {
            if OptimalMethod::parse(m).is_none() {
                return Err(CliError::Config(format!(
                    "optimal[{i}]: unknown method `{m}` (expected lmmse, lav, quad or tikh-weighted)"
                )));
            }
        }
        for (i, m) in self.learned.iter().enumerate() {
            if Variant::parse(m).is_none() {
                return Err(CliError::Config(format!(
                    "learned[{i}]: unknown method `{m}` (expected aff, lav, quad or tikh)"
                )));
            }
        }
        match self.experiment {
            ExperimentKind::Deconv => {
                let d = &self.deconv;
                nonzero("deconv.n", d.n)?;
                nonzero("deconv.halfwidth", d.halfwidth)?;
                positive("deconv.sigma_first", d.sigma_first)?;
                positive("deconv.sigma_last", d.sigma_last)?;
                nonzero("deconv.train_size", d.train_size)?;
                nonzero("deconv.test_size", d.test_size)?;
            }
            ExperimentKind::Dereverb => {
                let d = &self.dereverb;
                if d.n < 500 {
                    return Err(CliError::Config(format!("dereverb.n: must be >= 500, got {}", d.n)));
                }
                etas_ok("dereverb.etas", &d.etas)?;
                nonzero("dereverb.train_size", d.train_size)?;
                nonzero("dereverb.test_size", d.test_size)?;
                positive("dereverb.cutoff_hz", d.cutoff_hz)?;
                positive("dereverb.sample_rate_hz", d.sample_rate_hz)?;
                if d.wav_train_dir.is_some() != d.wav_test_dir.is_some() {
                    return Err(CliError::Config(
                        "dereverb.wav_train_dir: wav_train_dir and wav_test_dir must be given together".into(),
                    ));
                }
            }
            ExperimentKind::Custom => {
                let c = &self.custom;
                nonzero("custom.n", c.n)?;
                nonzero("custom.halfwidth", c.halfwidth)?;
                nonzero("custom.train_size", c.train_size)?;
                nonzero("custom.test_size", c.test_size)?;
                if c.kernel == KernelKind::Reverb && c.n < 500 {
                    return Err(CliError::Config(format!("custom.n: the reverb kernel needs n >= 500, got {}", c.n)));
                }
                match c.noise {
                    NoiseKind::White => positive("custom.sigma", c.sigma)?,
                    NoiseKind::LinearDecay => {
                        positive("custom.sigma_first", c.sigma_first)?;
                        positive("custom.sigma_last", c.sigma_last)?;
                    }
                    NoiseKind::Wind => etas_ok("custom.etas", &c.etas)?,
                }
            }
        }
        if !(self.fit.jitter_rel >= 0.0 && self.fit.jitter_rel.is_finite()) {
            return Err(CliError::Config(format!("fit.jitter_rel: must be >= 0, got {}", self.fit.jitter_rel)));
        }
        if !(self.fit.quad_pd_rel_tol >= 0.0) {
            return Err(CliError::Config("fit.quad_pd_rel_tol: must be >= 0".into()));
        }
        let t = &self.train;
        positive("train.initial_lr", t.initial_lr)?;
        nonzero("train.batch_size", t.batch_size)?;
        nonzero("train.epochs", t.epochs)?;
        for (path, b) in [("train.adam_beta1", t.adam_beta1), ("train.adam_beta2", t.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CliError::Config(format!("{path}: must lie in [0, 1), got {b}")));
            }
        }
        positive("train.adam_eps", t.adam_eps)?;
        if !(t.divergence_factor > 1.0) {
            return Err(CliError::Config(format!(
                "train.divergence_factor: must exceed 1, got {}",
                t.divergence_factor
            )));
        }
        if t.batch_size > self.train_size() {
            return Err(CliError::Config(format!(
                "train.batch_size: {} exceeds the training set size {}",
                t.batch_size,
                self.train_size()
            )));
        }
        Ok(())
    }

    pub fn train_size(&self) -> usize {
        match self.experiment {
            ExperimentKind::Deconv => self.deconv.train_size,
            ExperimentKind::Dereverb => self.dereverb.train_size,
            ExperimentKind::Custom => self.custom.train_size,
        }
    }

    /// Noise levels to run; a single `None` for experiments without `η`.
    pub fn noise_levels(&self) -> Vec<Option<f64>> {
        match self.experiment {
            ExperimentKind::Dereverb => self.dereverb.etas.iter().map(|&e| Some(e)).collect(),
            ExperimentKind::Custom if self.custom.noise == NoiseKind::Wind => {
                self.custom.etas.iter().map(|&e| Some(e)).collect()
            }
            _ => vec![None],
        }
    }

    pub fn optimal_methods(&self) -> Vec<OptimalMethod> {
        self.optimal.iter().filter_map(|m| OptimalMethod::parse(m)).collect()
    }

    pub fn learned_variants(&self) -> Vec<Variant> {
        self.learned.iter().filter_map(|m| Variant::parse(m)).collect()
    }

    pub fn deconv_setup(&self) -> DeconvSetup {
        let d = &self.deconv;
        DeconvSetup {
            n: d.n,
            halfwidth: d.halfwidth,
            sigma_first: d.sigma_first,
            sigma_last: d.sigma_last,
            train_size: d.train_size,
            test_size: d.test_size,
            seed: self.seed,
        }
    }

    pub fn dereverb_setup(&self) -> DereverbSetup {
        let d = &self.dereverb;
        DereverbSetup {
            n: d.n,
            etas: d.etas.clone(),
            train_size: d.train_size,
            test_size: d.test_size,
            seed: self.seed,
            cutoff_hz: d.cutoff_hz,
            sample_rate_hz: d.sample_rate_hz,
            speech: SpeechLikeParams {
                sample_rate_hz: d.sample_rate_hz,
                ..SpeechLikeParams::default()
            },
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            jitter_rel: self.fit.jitter_rel,
            quad_pd_rel_tol: self.fit.quad_pd_rel_tol,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            initial_lr: t.initial_lr,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seed,
            adam_betas: (t.adam_beta1, t.adam_beta2),
            adam_eps: t.adam_eps,
            loss_normalization: t.normalization.into(),
            divergence_factor: t.divergence_factor,
        }
    }

    /// Canonical TOML text of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Config::to_toml`], hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
