//! Experiment-specific generation, operators and file locations.

use std::path::{Path, PathBuf};

use regopt::datagen::{
    gen_signals, hat_kernel, ingest_wav, load_dataset, make_dataset, reverb_kernel, save_dataset, ConvolutionOperator,
    NoiseModel, SignalModel, SpeechLikeParams, Split, Streams, WavOptions,
};
use regopt::linalg::SymmetricMatrix;
use regopt::moments::{empirical_moments, empirical_moments_parallel, noise_moments_from_pairs};
use regopt::{Dataset, Matrix, Moments};

use crate::config::{Config, CustomSection, ExperimentKind, KernelKind, NoiseKind, SignalKind};
use crate::error::{CliError, CliResult};

/// Sample rate of ingested recordings; frames of `2n` samples are
/// downsampled by two.
pub const WAV_SAMPLE_RATE_HZ: u32 = 16_000;

/// Output directory layout.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn level(base: PathBuf, eta: Option<f64>) -> PathBuf {
        match eta {
            Some(e) => base.join(level_name(Some(e))),
            None => base,
        }
    }

    pub fn dataset(&self, eta: Option<f64>, split: Split) -> PathBuf {
        let file = match split {
            Split::Train => "train.rgds",
            Split::Test => "test.rgds",
        };
        Self::level(self.root.join("data"), eta).join(file)
    }

    pub fn map(&self, eta: Option<f64>, method: &str) -> PathBuf {
        Self::level(self.root.join("maps"), eta).join(format!("{method}.rgmp"))
    }

    pub fn checkpoint(&self, eta: Option<f64>, variant: &str) -> PathBuf {
        Self::level(self.root.join("checkpoints"), eta).join(format!("{variant}.rgck"))
    }

    pub fn trace(&self, eta: Option<f64>) -> PathBuf {
        Self::level(self.root.join("traces"), eta).join("trace.csv")
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

/// `eta-0.1`, or `all` for experiments without a noise level grid.
pub fn level_name(eta: Option<f64>) -> String {
    match eta {
        Some(e) => format!("eta-{e}"),
        None => "all".into(),
    }
}

fn count(c: &CustomSection, split: Split) -> usize {
    match split {
        Split::Train => c.train_size,
        Split::Test => c.test_size,
    }
}

fn custom_noise(c: &CustomSection, eta: Option<f64>) -> NoiseModel {
    match c.noise {
        NoiseKind::White => NoiseModel::WhiteGaussian { sigma: c.sigma },
        NoiseKind::LinearDecay => NoiseModel::DiagonalLinearDecay {
            sigma_first: c.sigma_first,
            sigma_last: c.sigma_last,
        },
        NoiseKind::Wind => NoiseModel::WindNoise {
            eta: eta.unwrap_or(0.0),
            cutoff_hz: 3000.0,
            sample_rate_hz: 8000.0,
        },
    }
}

fn custom_signal(c: &CustomSection) -> SignalModel {
    match c.signal {
        SignalKind::Plateau => SignalModel::Plateau,
        SignalKind::SpeechLike => SignalModel::SpeechLike(SpeechLikeParams::default()),
    }
}

pub fn operator(cfg: &Config) -> CliResult<Matrix> {
    Ok(match cfg.experiment {
        ExperimentKind::Deconv => cfg.deconv_setup().operator()?,
        ExperimentKind::Dereverb => cfg.dereverb_setup().operator()?,
        ExperimentKind::Custom => {
            let c = &cfg.custom;
            let kernel = match c.kernel {
                KernelKind::Hat => hat_kernel(c.halfwidth)?,
                KernelKind::Reverb => reverb_kernel(c.n)?,
            };
            ConvolutionOperator::new(kernel, c.n)?.matrix()
        }
    })
}

/// The generator's noise covariance, when it is known in closed form and
/// the configuration asks for it.
pub fn known_noise(cfg: &Config, eta: Option<f64>, m: usize) -> CliResult<Option<SymmetricMatrix<f64>>> {
    if !cfg.fit.known_noise {
        return Ok(None);
    }
    Ok(match cfg.experiment {
        ExperimentKind::Deconv => Some(cfg.deconv_setup().noise_covariance()?),
        ExperimentKind::Dereverb => None,
        ExperimentKind::Custom => custom_noise(&cfg.custom, eta).covariance(m).transpose()?,
    })
}

fn wav_frames(dir: &Path, n: usize) -> CliResult<Matrix> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: cannot list WAV directory: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .wav files found", dir.display())));
    }
    let opts = WavOptions {
        frame_len: 2 * n,
        downsample: 2,
        sample_rate_hz: WAV_SAMPLE_RATE_HZ,
    };
    let mut parts = Vec::with_capacity(files.len());
    for f in &files {
        parts.push(ingest_wav(f, &opts)?);
    }
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    if total == 0 {
        return Err(CliError::Data(format!(
            "{}: recordings are shorter than one frame of {} samples",
            dir.display(),
            2 * n
        )));
    }
    let mut out = Matrix::zeros(n, total);
    let mut col = 0;
    for p in parts {
        out.columns_mut(col, p.ncols()).copy_from(&p);
        col += p.ncols();
    }
    log::info!("{}: {} frames from {} files", dir.display(), total, files.len());
    Ok(out)
}

/// Train and test datasets for every noise level, in `noise_levels` order.
pub fn generate(cfg: &Config) -> CliResult<Vec<(Option<f64>, Dataset, Dataset)>> {
    let levels = cfg.noise_levels();
    let mut out = Vec::with_capacity(levels.len());
    match cfg.experiment {
        ExperimentKind::Deconv => {
            let s = cfg.deconv_setup();
            out.push((None, s.generate(Split::Train)?, s.generate(Split::Test)?));
        }
        ExperimentKind::Dereverb => {
            let s = cfg.dereverb_setup();
            let d = &cfg.dereverb;
            let (xtr, xte, label) = match (&d.wav_train_dir, &d.wav_test_dir) {
                (Some(tr), Some(te)) => (wav_frames(tr, s.n)?, wav_frames(te, s.n)?, "wav"),
                _ => (s.signals(Split::Train), s.signals(Split::Test), "speech-like"),
            };
            for eta in levels {
                let e = eta.expect("dereverb levels carry eta");
                let train = s.measure(xtr.clone(), label, e, Split::Train)?;
                let test = s.measure(xte.clone(), label, e, Split::Test)?;
                out.push((eta, train, test));
            }
        }
        ExperimentKind::Custom => {
            let c = &cfg.custom;
            let a = operator(cfg)?;
            let signal = custom_signal(c);
            let signals = |split| gen_signals(&signal, c.n, count(c, split), Streams::new(cfg.seed, split));
            let (xtr, xte) = (signals(Split::Train), signals(Split::Test));
            for eta in levels {
                let noise = custom_noise(c, eta);
                let make = |x: &Matrix, split| {
                    make_dataset(x.clone(), signal.label(), &a, &noise, Streams::new(cfg.seed, split))
                };
                out.push((eta, make(&xtr, Split::Train)?, make(&xte, Split::Test)?));
            }
        }
    }
    Ok(out)
}

pub fn save(layout: &Layout, eta: Option<f64>, train: &Dataset, test: &Dataset) -> CliResult<()> {
    save_dataset(&layout.dataset(eta, Split::Train), train)?;
    save_dataset(&layout.dataset(eta, Split::Test), test)?;
    Ok(())
}

/// Loads the datasets of every level, reporting all missing files at once.
pub fn load_all(cfg: &Config, layout: &Layout, a: &Matrix) -> CliResult<Vec<(Option<f64>, Dataset, Dataset)>> {
    let levels = cfg.noise_levels();
    let missing: Vec<String> = levels
        .iter()
        .flat_map(|&eta| [layout.dataset(eta, Split::Train), layout.dataset(eta, Split::Test)])
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "missing dataset files (run `regopt generate` with the same configuration): {}",
            missing.join(", ")
        )));
    }
    let mut out = Vec::with_capacity(levels.len());
    for eta in levels {
        let mut pair = Vec::with_capacity(2);
        for split in [Split::Train, Split::Test] {
            let path = layout.dataset(eta, split);
            let data = load_dataset(&path)?;
            let mismatch = |what: String| {
                CliError::Data(format!(
                    "{}: {what}; regenerate it with the current configuration",
                    path.display()
                ))
            };
            if data.meta.seed != cfg.seed {
                return Err(mismatch(format!("generated with seed {}, config has {}", data.meta.seed, cfg.seed)));
            }
            if let Some(e) = eta {
                if data.meta.noise_level != e {
                    return Err(mismatch(format!("noise level {} differs from {e}", data.meta.noise_level)));
                }
            }
            data.check_operator(a).map_err(|e| mismatch(e.to_string()))?;
            pair.push(data);
        }
        let test = pair.pop().expect("test split");
        let train = pair.pop().expect("train split");
        out.push((eta, train, test));
    }
    Ok(out)
}

/// Moments of the training split. With `deterministic` the accumulation is
/// serial; otherwise signal moments are reduced in parallel.
pub fn moments(
    train: &Dataset,
    a: &Matrix,
    known: Option<&SymmetricMatrix<f64>>,
    deterministic: bool,
) -> CliResult<Moments> {
    train.check_operator(a)?;
    let (mu, sigma_x) = if deterministic {
        empirical_moments(train.x())?
    } else {
        empirical_moments_parallel(train.x())?
    };
    let sigma_eps = match known {
        Some(s) => s.clone(),
        None => {
            let nm = noise_moments_from_pairs(train, a)?;
            log::debug!("residual mean norm {:.3e}", nm.residual_mean.norm());
            nm.covariance
        }
    };
    Ok(Moments::from_estimates(a.clone(), mu, sigma_x, sigma_eps)?)
}
