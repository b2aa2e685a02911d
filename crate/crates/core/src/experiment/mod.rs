//! The two experiment pipelines and closed-form fitting with diagnostics.

mod maps;

pub use maps::{load_map, read_map, save_map, write_map, MAP_MAGIC};

use std::time::Instant;

use nalgebra::DMatrix;

use crate::datagen::{
    gen_signals, hat_kernel, make_dataset, reverb_kernel, ConvolutionOperator, NoiseModel, SignalModel, SpeechLikeParams,
    Split, Streams,
};
use crate::error::{Error, Result};
use crate::estimators::{
    asymmetry_fraction, assemble_map, lavrentiev_gap_condition, lmmse, optimal_lavrentiev_with, optimal_quadratic_with,
    optimal_tikhonov_weighted_with, risk_empirical, AffineMap, EmpiricalRisk, RegularizerParams, DEFAULT_GAP_TOL,
};
use crate::linalg::SymmetricMatrix;
use crate::moments::{moments_from_dataset, PairedDataset, ProblemMoments, DEFAULT_JITTER_REL};

/// Plateau signals blurred by a hat kernel, Gaussian noise with linearly
/// decaying standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct DeconvSetup {
    pub n: usize,
    pub halfwidth: usize,
    pub sigma_first: f64,
    pub sigma_last: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for DeconvSetup {
    fn default() -> Self {
        Self {
            n: 200,
            halfwidth: 30,
            sigma_first: 1e-2,
            sigma_last: 5e-4,
            train_size: 50_000,
            test_size: 20_000,
            seed: 1,
        }
    }
}

impl DeconvSetup {
    pub fn small() -> Self {
        Self {
            train_size: 5_000,
            test_size: 2_000,
            ..Self::default()
        }
    }

    pub fn operator(&self) -> Result<DMatrix<f64>> {
        Ok(ConvolutionOperator::new(hat_kernel(self.halfwidth)?, self.n)?.matrix())
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::DiagonalLinearDecay {
            sigma_first: self.sigma_first,
            sigma_last: self.sigma_last,
        }
    }

    /// The known noise covariance `diag(σᵢ²)`.
    pub fn noise_covariance(&self) -> Result<SymmetricMatrix<f64>> {
        let m = self.n + 2 * self.halfwidth - 1;
        self.noise().covariance(m).expect("diagonal model has a covariance")
    }

    pub fn generate(&self, split: Split) -> Result<PairedDataset<f64>> {
        let a = self.operator()?;
        let count = match split {
            Split::Train => self.train_size,
            Split::Test => self.test_size,
        };
        let streams = Streams::new(self.seed, split);
        let x = gen_signals(&SignalModel::Plateau, self.n, count, streams);
        make_dataset(x, SignalModel::Plateau.label(), &a, &self.noise(), streams)
    }
}

/// Reverberation of speech-like frames plus scaled wind noise.
#[derive(Clone, Debug, PartialEq)]
pub struct DereverbSetup {
    pub n: usize,
    pub etas: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
    pub speech: SpeechLikeParams,
}

impl Default for DereverbSetup {
    fn default() -> Self {
        Self {
            n: 500,
            etas: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            train_size: 21_147,
            test_size: 4_601,
            seed: 1,
            cutoff_hz: 3000.0,
            sample_rate_hz: 8000.0,
            speech: SpeechLikeParams::default(),
        }
    }
}

impl DereverbSetup {
    pub fn small() -> Self {
        Self {
            train_size: 2_000,
            test_size: 500,
            ..Self::default()
        }
    }

    pub fn operator(&self) -> Result<DMatrix<f64>> {
        Ok(ConvolutionOperator::new(reverb_kernel(self.n)?, self.n)?.matrix())
    }

    pub fn noise(&self, eta: f64) -> NoiseModel {
        NoiseModel::WindNoise {
            eta,
            cutoff_hz: self.cutoff_hz,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Synthetic speech-like frames, one per column.
    pub fn signals(&self, split: Split) -> DMatrix<f64> {
        let count = match split {
            Split::Train => self.train_size,
            Split::Test => self.test_size,
        };
        gen_signals(&SignalModel::SpeechLike(self.speech.clone()), self.n, count, Streams::new(self.seed, split))
    }

    /// Measurements for given frames. The wind-noise draws depend only on
    /// the seed and split, so the noise levels share them up to `η`.
    pub fn measure(&self, signals: DMatrix<f64>, label: &str, eta: f64, split: Split) -> Result<PairedDataset<f64>> {
        if signals.nrows() != self.n {
            return Err(Error::dim("dereverberation frame length", self.n, signals.nrows()));
        }
        let a = self.operator()?;
        make_dataset(signals, label, &a, &self.noise(eta), Streams::new(self.seed, split))
    }

    pub fn generate(&self, eta: f64, split: Split) -> Result<PairedDataset<f64>> {
        self.measure(self.signals(split), "speech-like", eta, split)
    }
}

/// Closed-form reconstruction maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimalMethod {
    Lmmse,
    Lav,
    Quad,
    TikhWeighted,
}

impl OptimalMethod {
    pub const ALL: [OptimalMethod; 4] = [
        OptimalMethod::Lmmse,
        OptimalMethod::Lav,
        OptimalMethod::Quad,
        OptimalMethod::TikhWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimalMethod::Lmmse => "lmmse",
            OptimalMethod::Lav => "lav",
            OptimalMethod::Quad => "quad",
            OptimalMethod::TikhWeighted => "tikh-weighted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Relative diagonal jitter added to `Σₓ` and `Σ_ε` before inversion.
    pub jitter_rel: f64,
    /// Positive-definiteness threshold for `B` in the quadratic solve.
    pub quad_pd_rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            jitter_rel: DEFAULT_JITTER_REL,
            quad_pd_rel_tol: crate::linalg::DEFAULT_PD_REL_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// `½‖M − Mᵀ‖/‖M‖` of the Lavrentiev `M`.
    pub asymmetry: Option<f64>,
    /// Smallest eigenvalue of the quadratic `M`.
    pub min_eigenvalue: Option<f64>,
    /// `‖AᵀΣ_ε P_ker(Aᵀ)‖ / ‖AᵀΣ_ε‖`.
    pub gap_residual: Option<f64>,
    pub lyapunov_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OptimalFit {
    pub method: OptimalMethod,
    pub map: AffineMap<f64>,
    pub params: Option<RegularizerParams<f64>>,
    pub diagnostics: Diagnostics,
    pub seconds: f64,
}

/// Computes one closed-form map from estimated moments.
pub fn fit_optimal(p: &ProblemMoments<f64>, method: OptimalMethod, opts: &FitOptions) -> Result<OptimalFit> {
    let start = Instant::now();
    let mut diagnostics = Diagnostics::default();
    let (map, params) = match method {
        OptimalMethod::Lmmse => (lmmse(&p.jittered(opts.jitter_rel))?, None),
        OptimalMethod::Lav => {
            let params = optimal_lavrentiev_with(p, opts.jitter_rel)?;
            if let RegularizerParams::Lav { m, .. } = &params {
                diagnostics.asymmetry = Some(asymmetry_fraction(m)?);
            }
            let gap = lavrentiev_gap_condition(p.a(), p.sigma_eps(), DEFAULT_GAP_TOL)?;
            diagnostics.gap_residual = Some(gap.relative);
            (assemble_map(&params, p.a())?, Some(params))
        }
        OptimalMethod::Quad => {
            let sol = optimal_quadratic_with(&p.jittered(opts.jitter_rel), opts.quad_pd_rel_tol)?;
            diagnostics.min_eigenvalue = Some(sol.min_eigenvalue);
            diagnostics.lyapunov_residual = Some(sol.lyapunov_residual);
            (assemble_map(&sol.params, p.a())?, Some(sol.params))
        }
        OptimalMethod::TikhWeighted => {
            let params = optimal_tikhonov_weighted_with(p, opts.jitter_rel)?;
            (assemble_map(&params, p.a())?, Some(params))
        }
    };
    Ok(OptimalFit {
        method,
        map,
        params,
        diagnostics,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Train and test risks of a fitted map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub train: EmpiricalRisk,
    pub test: EmpiricalRisk,
}

pub fn evaluate_map(
    map: &AffineMap<f64>,
    train: &PairedDataset<f64>,
    test: &PairedDataset<f64>,
) -> Result<Evaluation> {
    Ok(Evaluation {
        train: risk_empirical(train, map)?,
        test: risk_empirical(test, map)?,
    })
}

/// Moments from the training split; `known_noise` replaces the residual
/// estimate of `Σ_ε`.
pub fn estimate_moments(
    train: &PairedDataset<f64>,
    a: &DMatrix<f64>,
    known_noise: Option<&SymmetricMatrix<f64>>,
) -> Result<ProblemMoments<f64>> {
    moments_from_dataset(train, a, known_noise)
}
