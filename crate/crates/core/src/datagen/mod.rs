//! Synthetic data for the deconvolution and dereverberation experiments.
//!
//! Every generator draws from a [`Streams`] substream keyed by sample index,
//! so serial and parallel generation produce the same bits.

mod io;
mod signals;
mod wav;
mod wind;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC};
pub use signals::{
    gen_plateau_signal, gen_speech_like, plateau_from_parts, plateau_grid, SpeechLikeParams,
};
pub use wav::{ingest_wav, WavOptions};
pub use wind::{bursty_envelope, envelope_from_bursts, Burst, WindNoise, WindStages};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::moments::{DatasetMeta, PairedDataset};

/// Full convolution with zero extension, realized as an `m × n` matrix with
/// `m = n + len(kernel) − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionOperator {
    kernel: Vec<f64>,
    n: usize,
}

impl ConvolutionOperator {
    pub fn new(kernel: Vec<f64>, n: usize) -> Result<Self> {
        if kernel.is_empty() || n == 0 {
            return Err(Error::InvalidArgument(
                "convolution needs a nonempty kernel and n >= 1".into(),
            ));
        }
        if let Some(i) = kernel.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "convolution kernel".into(),
                index: i,
            });
        }
        Ok(Self { kernel, n })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.n + self.kernel.len() - 1
    }

    /// `A[i][j] = kernel[i − j]` where defined.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.m(), self.n);
        for j in 0..self.n {
            for (k, &v) in self.kernel.iter().enumerate() {
                a[(j + k, j)] = v;
            }
        }
        a
    }
}

/// Triangular kernel `(1, 2, …, h, h, …, 2, 1)` normalized to sum to one.
///
/// `halfwidth = 30` gives the 60-tap kernel of the deconvolution experiment
/// (`m = 200 + 60 − 1 = 259`).
pub fn hat_kernel(halfwidth: usize) -> Result<Vec<f64>> {
    if halfwidth == 0 {
        return Err(Error::InvalidArgument("hat kernel halfwidth must be >= 1".into()));
    }
    let h = halfwidth as f64;
    let total = h * (h + 1.0);
    let mut k: Vec<f64> = (1..=halfwidth)
        .chain((1..=halfwidth).rev())
        .map(|i| i as f64 / total)
        .collect();
    let last = k.len() - 1;
    k[last] = 1.0 - k[..last].iter().sum::<f64>();
    Ok(k)
}

/// Reverberation kernel: `v₁ = 1`, `v₅₀ᵢ = 0.8ⁱ` for `i = 1..10`, zero
/// elsewhere (1-based).
pub fn reverb_kernel(n: usize) -> Result<Vec<f64>> {
    if n < 500 {
        return Err(Error::InvalidArgument(format!(
            "reverb kernel needs n >= 500, got {n}"
        )));
    }
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    let mut p = 1.0;
    for i in 1..=10 {
        p *= 0.8;
        v[50 * i - 1] = p;
    }
    Ok(v)
}

/// `σᵢ` decaying linearly from `sigma_first` to `sigma_last` over `m` entries.
pub fn linear_decay_sigmas(m: usize, sigma_first: f64, sigma_last: f64) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "linear decay needs m >= 2, got {m}"
        )));
    }
    if !(sigma_first > 0.0 && sigma_last > 0.0) {
        return Err(Error::InvalidArgument("noise scales must be positive".into()));
    }
    let step = (sigma_last - sigma_first) / (m - 1) as f64;
    Ok((0..m).map(|i| sigma_first + i as f64 * step).collect())
}

/// `diag(σᵢ²)` for [`linear_decay_sigmas`].
pub fn linear_decay_noise_cov(m: usize, sigma_first: f64, sigma_last: f64) -> Result<SymmetricMatrix<f64>> {
    let s = linear_decay_sigmas(m, sigma_first, sigma_last)?;
    Ok(SymmetricMatrix::from_diagonal(
        &s.iter().map(|v| v * v).collect::<Vec<_>>(),
    ))
}

/// Which half of an experiment a stream belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// Counter-based random streams: one independent ChaCha8 stream per
/// `(seed, split, purpose, sample index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    pub seed: u64,
    pub split: Split,
}

const SIGNAL: u64 = 1;
const NOISE: u64 = 2;

impl Streams {
    pub fn new(seed: u64, split: Split) -> Self {
        Self { seed, split }
    }

    fn stream(&self, purpose: u64, index: usize) -> ChaCha8Rng {
        let split = match self.split {
            Split::Train => 0u64,
            Split::Test => 1,
        };
        let domain = (split << 8) | purpose;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(index as u64);
        rng
    }

    pub fn signal(&self, index: usize) -> ChaCha8Rng {
        self.stream(SIGNAL, index)
    }

    pub fn noise(&self, index: usize) -> ChaCha8Rng {
        self.stream(NOISE, index)
    }

    /// A stream for purposes outside dataset generation (shuffling, probes).
    pub fn auxiliary(&self, purpose: u8, index: usize) -> ChaCha8Rng {
        self.stream(16 + purpose as u64, index)
    }
}

/// Signal family for [`gen_signals`].
#[derive(Clone, Debug, PartialEq)]
pub enum SignalModel {
    Plateau,
    SpeechLike(SpeechLikeParams),
}

impl SignalModel {
    pub fn label(&self) -> &'static str {
        match self {
            SignalModel::Plateau => "plateau",
            SignalModel::SpeechLike(_) => "speech-like",
        }
    }
}

/// `count` signals of length `n`, one per column.
pub fn gen_signals(model: &SignalModel, n: usize, count: usize, streams: Streams) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.signal(i);
            match model {
                SignalModel::Plateau => gen_plateau_signal(&mut rng, n),
                SignalModel::SpeechLike(p) => gen_speech_like(&mut rng, n, p),
            }
        })
        .collect();
    columns_to_matrix(n, &cols)
}

fn columns_to_matrix(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Additive measurement noise.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    /// `ε ~ N(0, diag(σᵢ²))`, `σᵢ` linear from first to last.
    DiagonalLinearDecay { sigma_first: f64, sigma_last: f64 },
    /// `η w` with `w` structured wind noise.
    WindNoise {
        eta: f64,
        cutoff_hz: f64,
        sample_rate_hz: f64,
    },
    WhiteGaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseModel::DiagonalLinearDecay { .. } => "linear-decay",
            NoiseModel::WindNoise { .. } => "wind",
            NoiseModel::WhiteGaussian { .. } => "white",
        }
    }

    /// `η` for wind noise, 1 otherwise.
    pub fn noise_level(&self) -> f64 {
        match self {
            NoiseModel::WindNoise { eta, .. } => *eta,
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseModel::DiagonalLinearDecay {
                sigma_first,
                sigma_last,
            } => sigma_first > 0.0 && sigma_last > 0.0,
            NoiseModel::WindNoise {
                eta,
                cutoff_hz,
                sample_rate_hz,
            } => eta >= 0.0 && cutoff_hz > 0.0 && sample_rate_hz > 0.0,
            NoiseModel::WhiteGaussian { sigma } => sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "noise model {} has a non-positive scale: {self:?}",
                self.label()
            )))
        }
    }

    /// Known covariance where the model has one in closed form.
    pub fn covariance(&self, m: usize) -> Option<Result<SymmetricMatrix<f64>>> {
        match *self {
            NoiseModel::DiagonalLinearDecay {
                sigma_first,
                sigma_last,
            } => Some(linear_decay_noise_cov(m, sigma_first, sigma_last)),
            NoiseModel::WhiteGaussian { sigma } => Some(Ok(SymmetricMatrix::identity(m).scaled(sigma * sigma))),
            NoiseModel::WindNoise { .. } => None,
        }
    }
}

/// Pairs `y = A x + noise` for every column of `signals`.
pub fn make_dataset(
    signals: DMatrix<f64>,
    signal_label: &str,
    a: &DMatrix<f64>,
    noise: &NoiseModel,
    streams: Streams,
) -> Result<PairedDataset<f64>> {
    noise.validate()?;
    if a.ncols() != signals.nrows() {
        return Err(Error::dim("operator columns vs signal length", signals.nrows(), a.ncols()));
    }
    let m = a.nrows();
    let mut y = a * &signals;
    match *noise {
        NoiseModel::DiagonalLinearDecay {
            sigma_first,
            sigma_last,
        } => {
            let sig = linear_decay_sigmas(m, sigma_first, sigma_last)?;
            add_noise(&mut y, |i| {
                let mut rng = streams.noise(i);
                DVector::from_iterator(m, sig.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)))
            });
        }
        NoiseModel::WhiteGaussian { sigma } => add_noise(&mut y, |i| {
            let mut rng = streams.noise(i);
            DVector::from_fn(m, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
        }),
        NoiseModel::WindNoise {
            eta,
            cutoff_hz,
            sample_rate_hz,
        } => {
            if eta > 0.0 {
                let gen = WindNoise::new(m, cutoff_hz, sample_rate_hz)?;
                add_noise(&mut y, |i| gen.sample(&mut streams.noise(i)) * eta);
            }
        }
    }
    PairedDataset::new(
        signals,
        y,
        DatasetMeta {
            seed: streams.seed,
            noise_level: noise.noise_level(),
            generator: format!("{signal_label}+{}", noise.label()),
        },
    )
}

fn add_noise(y: &mut DMatrix<f64>, draw: impl Fn(usize) -> DVector<f64> + Sync + Send) {
    let noise: Vec<DVector<f64>> = (0..y.ncols()).into_par_iter().map(draw).collect();
    for (mut col, e) in y.column_iter_mut().zip(noise) {
        col += e;
    }
}

#[cfg(test)]
mod tests;
