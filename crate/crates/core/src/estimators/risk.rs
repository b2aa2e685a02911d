use nalgebra::DMatrix;

use super::AffineMap;
use crate::error::{Error, Result};
use crate::moments::{PairedDataset, ProblemMoments};
use crate::scalar::Real;

/// Population risk split into its three nonnegative parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskBreakdown<T: Real> {
    /// `⟨(WA − I)Σₓ, WA − I⟩`
    pub operator_bias: T,
    /// `⟨WΣ_ε, W⟩`
    pub variance: T,
    /// `‖(WA − I)μₓ + b‖²`
    pub offset_bias: T,
}

impl<T: Real> RiskBreakdown<T> {
    pub fn total(&self) -> T {
        self.operator_bias + self.variance + self.offset_bias
    }
}

/// Expected squared reconstruction error of `map` under `p`.
pub fn risk_closed_form<T: Real>(p: &ProblemMoments<T>, map: &AffineMap<T>) -> Result<RiskBreakdown<T>> {
    let (m, n) = p.a().shape();
    map.check_shape(n, m)?;
    let mut e = &map.w * p.a();
    for i in 0..n {
        e[(i, i)] -= T::one();
    }
    let operator_bias = (&e * p.sigma_x().as_matrix()).dot(&e);
    let variance = (&map.w * p.sigma_eps().as_matrix()).dot(&map.w);
    let offset = &e * p.mu_x() + &map.b;
    // both quadratic forms are ≥ 0 for PSD covariances; clip rounding
    Ok(RiskBreakdown {
        operator_bias: operator_bias.max(T::zero()),
        variance: variance.max(T::zero()),
        offset_bias: offset.norm_squared(),
    })
}

/// Which mean a reported empirical risk uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Normalization {
    /// `(1/N) Σ ‖x̂ᵢ − xᵢ‖²`, comparable with [`risk_closed_form`].
    SumOfSquares,
    /// `(1/(N n)) Σ ‖x̂ᵢ − xᵢ‖²`, the per-entry mean squared error.
    PerDimension,
}

impl Normalization {
    pub fn label(self) -> &'static str {
        match self {
            Normalization::SumOfSquares => "sum-of-squares",
            Normalization::PerDimension => "per-dimension",
        }
    }
}

/// Mean squared reconstruction error over a dataset, in both conventions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalRisk {
    pub sum_of_squares: f64,
    pub per_dimension: f64,
    /// Standard error of `sum_of_squares` across samples.
    pub std_error: f64,
    pub samples: usize,
}

impl EmpiricalRisk {
    pub fn get(&self, norm: Normalization) -> f64 {
        match norm {
            Normalization::SumOfSquares => self.sum_of_squares,
            Normalization::PerDimension => self.per_dimension,
        }
    }
}

const EVAL_CHUNK: usize = 512;

/// Empirical risk of an arbitrary reconstruction rule applied to column
/// chunks of `y`.
pub fn empirical_risk_with<T: Real>(
    data: &PairedDataset<T>,
    mut reconstruct: impl FnMut(&DMatrix<T>) -> Result<DMatrix<T>>,
) -> Result<EmpiricalRisk> {
    let n_samples = data.len();
    if n_samples == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let n = data.signal_dim();
    let (mut count, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    let mut start = 0;
    while start < n_samples {
        let len = EVAL_CHUNK.min(n_samples - start);
        let y = data.y().columns(start, len).into_owned();
        let xhat = reconstruct(&y)?;
        if xhat.shape() != (n, len) {
            return Err(Error::dim(
                "reconstruction shape",
                format!("{n}x{len}"),
                format!("{}x{}", xhat.nrows(), xhat.ncols()),
            ));
        }
        let diff = xhat - data.x().columns(start, len);
        for col in diff.column_iter() {
            let e = col.iter().map(|v| v.as_f64().powi(2)).sum::<f64>();
            count += 1.0;
            let delta = e - mean;
            mean += delta / count;
            m2 += delta * (e - mean);
        }
        start += len;
    }
    let nf = n_samples as f64;
    let var = if n_samples > 1 { m2 / (nf - 1.0) } else { 0.0 };
    Ok(EmpiricalRisk {
        sum_of_squares: mean,
        per_dimension: mean / n as f64,
        std_error: (var / nf).sqrt(),
        samples: n_samples,
    })
}

pub fn risk_empirical<T: Real>(data: &PairedDataset<T>, map: &AffineMap<T>) -> Result<EmpiricalRisk> {
    map.check_shape(data.signal_dim(), data.measurement_dim())?;
    empirical_risk_with(data, |y| Ok(map.apply(y)))
}
