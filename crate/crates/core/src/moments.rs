//! First and second moments of signals and noise, estimated from samples.
//!
//! Samples are stored one per column throughout the crate: a set of `N`
//! signals in `Rⁿ` is an `n × N` matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};
use crate::scalar::Real;

/// Relative jitter applied to covariances before they are inverted.
pub const DEFAULT_JITTER_REL: f64 = 1e-10;

/// Relative tolerance for the PSD check on covariances.
pub const PSD_REL_TOL: f64 = 1e-10;

const CHUNK: usize = 256;

/// Forward operator together with the signal and noise moments that define a
/// population risk.
#[derive(Clone, Debug)]
pub struct ProblemMoments<T: Real> {
    a: DMatrix<T>,
    mu_x: DVector<T>,
    sigma_x: SymmetricMatrix<T>,
    sigma_eps: SymmetricMatrix<T>,
}

impl<T: Real> ProblemMoments<T> {
    /// Validates shapes, finiteness and positive semidefiniteness.
    pub fn new(
        a: DMatrix<T>,
        mu_x: DVector<T>,
        sigma_x: SymmetricMatrix<T>,
        sigma_eps: SymmetricMatrix<T>,
    ) -> Result<Self> {
        let p = Self::from_estimates(a, mu_x, sigma_x, sigma_eps)?;
        check_psd(&p.sigma_x, "sigma_x")?;
        check_psd(&p.sigma_eps, "sigma_eps")?;
        Ok(p)
    }

    /// Like [`ProblemMoments::new`] but skips the eigenvalue-based PSD check.
    /// Intended for covariances that are PSD by construction (sample
    /// covariances), where the check would cost a full eigendecomposition.
    pub fn from_estimates(
        a: DMatrix<T>,
        mu_x: DVector<T>,
        sigma_x: SymmetricMatrix<T>,
        sigma_eps: SymmetricMatrix<T>,
    ) -> Result<Self> {
        let (m, n) = a.shape();
        if mu_x.len() != n {
            return Err(Error::dim("mu_x length", n, mu_x.len()));
        }
        if sigma_x.dim() != n {
            return Err(Error::dim("sigma_x dimension", n, sigma_x.dim()));
        }
        if sigma_eps.dim() != m {
            return Err(Error::dim("sigma_eps dimension", m, sigma_eps.dim()));
        }
        linalg::ensure_finite(&a, "forward operator")?;
        linalg::ensure_finite(&DMatrix::from_column_slice(n, 1, mu_x.as_slice()), "mu_x")?;
        Ok(Self {
            a,
            mu_x,
            sigma_x,
            sigma_eps,
        })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn mu_x(&self) -> &DVector<T> {
        &self.mu_x
    }

    pub fn sigma_x(&self) -> &SymmetricMatrix<T> {
        &self.sigma_x
    }

    pub fn sigma_eps(&self) -> &SymmetricMatrix<T> {
        &self.sigma_eps
    }

    /// Signal dimension `n`.
    pub fn signal_dim(&self) -> usize {
        self.a.ncols()
    }

    /// Measurement dimension `m`.
    pub fn measurement_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Same problem with both covariances passed through
    /// [`jitter_regularize`].
    pub fn jittered(&self, lambda_rel: f64) -> Self {
        Self {
            a: self.a.clone(),
            mu_x: self.mu_x.clone(),
            sigma_x: jitter_regularize(&self.sigma_x, lambda_rel),
            sigma_eps: jitter_regularize(&self.sigma_eps, lambda_rel),
        }
    }

    pub fn cast<U: Real>(&self) -> ProblemMoments<U> {
        ProblemMoments {
            a: self.a.map(|v| U::lit(v.as_f64())),
            mu_x: self.mu_x.map(|v| U::lit(v.as_f64())),
            sigma_x: self.sigma_x.cast(),
            sigma_eps: self.sigma_eps.cast(),
        }
    }
}

fn check_psd<T: Real>(s: &SymmetricMatrix<T>, what: &str) -> Result<()> {
    let eig = linalg::sym_eig(s)?;
    let max = eig.max().as_f64().max(0.0);
    let min = eig.min().as_f64();
    if min < -PSD_REL_TOL * max {
        return Err(Error::NotPositiveDefinite {
            what: format!("{what} (PSD check)"),
            eigenvalue: min,
            threshold: -PSD_REL_TOL * max,
        });
    }
    Ok(())
}

/// Provenance of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub noise_level: f64,
    pub generator: String,
}

/// Matched ground truths and measurements, one pair per column.
#[derive(Clone, Debug)]
pub struct PairedDataset<T: Real> {
    x: DMatrix<T>,
    y: DMatrix<T>,
    pub meta: DatasetMeta,
}

impl<T: Real> PairedDataset<T> {
    /// `x` is `n × N`, `y` is `m × N`.
    pub fn new(x: DMatrix<T>, y: DMatrix<T>, meta: DatasetMeta) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::dim("paired sample count", x.ncols(), y.ncols()));
        }
        Ok(Self { x, y, meta })
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn signal_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.y.nrows()
    }

    /// Ground truths, `n × N`.
    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }

    /// Measurements, `m × N`.
    pub fn y(&self) -> &DMatrix<T> {
        &self.y
    }

    pub fn check_operator(&self, a: &DMatrix<T>) -> Result<()> {
        if a.shape() != (self.measurement_dim(), self.signal_dim()) {
            return Err(Error::dim(
                "operator shape for dataset",
                format!("{}x{}", self.measurement_dim(), self.signal_dim()),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        Ok(())
    }

    /// Columns `start..start+len` as a new dataset with the same metadata.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            x: self.x.columns(start, len).into_owned(),
            y: self.y.columns(start, len).into_owned(),
            meta: self.meta.clone(),
        }
    }

    /// Selects the given columns in order.
    pub fn select(&self, idx: &[usize]) -> (DMatrix<T>, DMatrix<T>) {
        (self.x.select_columns(idx), self.y.select_columns(idx))
    }

    pub fn cast<U: Real>(&self) -> PairedDataset<U> {
        PairedDataset {
            x: self.x.map(|v| U::lit(v.as_f64())),
            y: self.y.map(|v| U::lit(v.as_f64())),
            meta: self.meta.clone(),
        }
    }
}

/// One-pass mean/covariance accumulator with 64-bit state.
///
/// Rows are buffered into fixed-size chunks and merged with the pairwise
/// update of Chan et al., so the result depends only on the sample order.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    dim: usize,
    count: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    buffer: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            buffer: Vec::with_capacity(dim * CHUNK),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Samples seen so far, including buffered ones.
    pub fn count(&self) -> usize {
        self.count + self.buffer.len() / self.dim.max(1)
    }

    pub fn push<T: Real>(&mut self, sample: &[T]) -> Result<()> {
        if sample.len() != self.dim {
            return Err(Error::dim("sample length", self.dim, sample.len()));
        }
        let row = self.count();
        if sample.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite {
                what: "sample row".into(),
                index: row,
            });
        }
        self.buffer.extend(sample.iter().map(|v| v.as_f64()));
        if self.buffer.len() == self.dim * CHUNK {
            self.flush();
        }
        Ok(())
    }

    /// Pushes every column of `samples`.
    pub fn push_columns<T: Real>(&mut self, samples: &DMatrix<T>) -> Result<()> {
        for col in samples.column_iter() {
            self.push(col.as_slice())?;
        }
        Ok(())
    }

    fn flush(&mut self) {
        if self.buffer.is_empty() {
            return;
        }
        let k = self.buffer.len() / self.dim;
        let chunk = DMatrix::from_column_slice(self.dim, k, &self.buffer);
        self.buffer.clear();
        let other = Self::from_chunk(self.dim, chunk);
        self.merge_flushed(other);
    }

    fn from_chunk(dim: usize, mut chunk: DMatrix<f64>) -> Self {
        let k = chunk.ncols();
        let mean = chunk.column_mean();
        for mut col in chunk.column_iter_mut() {
            col -= &mean;
        }
        let scatter = &chunk * chunk.transpose();
        Self {
            dim,
            count: k,
            mean,
            scatter,
            buffer: Vec::new(),
        }
    }

    fn merge_flushed(&mut self, other: Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            self.count = other.count;
            self.mean = other.mean;
            self.scatter = other.scatter;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean += &delta * (nb / total);
        self.scatter += other.scatter;
        self.scatter += &delta * delta.transpose() * (na * nb / total);
        self.count += other.count;
    }

    /// Combines two accumulators; the result depends on merge order only
    /// through rounding.
    pub fn merge(&mut self, mut other: Self) {
        self.flush();
        other.flush();
        self.merge_flushed(other);
    }

    /// Mean and unbiased (`N − 1`) covariance.
    pub fn finish<T: Real>(mut self) -> Result<(DVector<T>, SymmetricMatrix<T>)> {
        self.flush();
        if self.count < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.count,
            });
        }
        let cov = &self.scatter / (self.count as f64 - 1.0);
        let mean = self.mean.map(T::lit);
        let cov = SymmetricMatrix::new(cov.map(T::lit))?;
        Ok((mean, cov))
    }
}

/// Mean and unbiased covariance of the columns of `samples` (`d × N`).
pub fn empirical_moments<T: Real>(samples: &DMatrix<T>) -> Result<(DVector<T>, SymmetricMatrix<T>)> {
    let mut acc = MomentAccumulator::new(samples.nrows());
    acc.push_columns(samples)?;
    acc.finish()
}

/// Parallel variant of [`empirical_moments`]. Chunks are reduced in a
/// work-stealing order, so the last bits can differ between runs.
pub fn empirical_moments_parallel<T: Real>(
    samples: &DMatrix<T>,
) -> Result<(DVector<T>, SymmetricMatrix<T>)> {
    use rayon::prelude::*;
    let d = samples.nrows();
    let n = samples.ncols();
    if let Some(index) = samples.iter().position(|v| !v.finite()) {
        return Err(Error::NonFinite {
            what: "sample row".into(),
            index: index / d.max(1),
        });
    }
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let acc = starts
        .par_iter()
        .map(|&s| {
            let len = CHUNK.min(n - s);
            let chunk = samples.columns(s, len).map(|v| v.as_f64());
            MomentAccumulator::from_chunk(d, chunk)
        })
        .reduce(
            || MomentAccumulator::new(d),
            |mut a, b| {
                a.merge_flushed(b);
                a
            },
        );
    acc.finish()
}

/// `S + λI` with `λ = lambda_rel · trace(S) / dim`.
///
/// A zero matrix stays zero; callers that need a strictly positive definite
/// result must reject that case.
pub fn jitter_regularize<T: Real>(s: &SymmetricMatrix<T>, lambda_rel: f64) -> SymmetricMatrix<T> {
    let dim = s.dim();
    let lambda = T::lit(lambda_rel) * s.trace() / T::from_count(dim);
    let mut out = s.as_matrix().clone();
    for i in 0..dim {
        out[(i, i)] += lambda;
    }
    SymmetricMatrix::from_symmetric_unchecked(out)
}

/// Sample covariance of `y − A x` over a dataset.
#[derive(Clone, Debug)]
pub struct NoiseMoments<T: Real> {
    pub covariance: SymmetricMatrix<T>,
    /// Mean residual; should be near zero for zero-mean noise.
    pub residual_mean: DVector<T>,
}

pub fn noise_moments_from_pairs<T: Real>(
    data: &PairedDataset<T>,
    a: &DMatrix<T>,
) -> Result<NoiseMoments<T>> {
    data.check_operator(a)?;
    let mut acc = MomentAccumulator::new(data.measurement_dim());
    let n = data.len();
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let residual = data.y().columns(start, len) - a * data.x().columns(start, len);
        acc.push_columns(&residual)?;
        start += len;
    }
    let (residual_mean, covariance) = acc.finish()?;
    Ok(NoiseMoments {
        covariance,
        residual_mean,
    })
}

/// Estimates `ProblemMoments` from training pairs: empirical signal moments
/// and either the supplied noise covariance or the residual covariance.
pub fn moments_from_dataset<T: Real>(
    data: &PairedDataset<T>,
    a: &DMatrix<T>,
    known_noise: Option<&SymmetricMatrix<T>>,
) -> Result<ProblemMoments<T>> {
    data.check_operator(a)?;
    let (mu_x, sigma_x) = empirical_moments(data.x())?;
    let sigma_eps = match known_noise {
        Some(s) => s.clone(),
        None => noise_moments_from_pairs(data, a)?.covariance,
    };
    ProblemMoments::from_estimates(a.clone(), mu_x, sigma_x, sigma_eps)
}
