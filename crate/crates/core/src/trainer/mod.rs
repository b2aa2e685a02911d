//! Gradient-based learning of the unweighted reconstruction maps:
//!
//! | variant | map                                   |
//! |---------|---------------------------------------|
//! | Aff     | `W y + b`                             |
//! | Lav     | `(AᵀA + M)⁻¹(Aᵀy + c)`                |
//! | Quad    | `(AᵀA + ½(L + Lᵀ))⁻¹(Aᵀy + c)`        |
//! | Tikh    | `(AᵀA + RᵀR)⁻¹(Aᵀy + c)`              |
//!
//! The offset `c` is additive inside the solve. It corresponds to `M x₀` in
//! the closed-form parameterization; see [`TrainableParams::lavrentiev_x0`].

mod adam;
mod chain;
mod checkpoint;

pub use adam::{Adam, AdamState};
pub use chain::{handoff, initial_tikhonov, warm_start_chain, WarmStartResult};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{AffineMap, Normalization};
use crate::linalg::{self, LuFactor};
use crate::moments::PairedDataset;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Aff,
    Lav,
    Quad,
    Tikh,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Aff, Variant::Lav, Variant::Quad, Variant::Tikh];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Aff => "aff",
            Variant::Lav => "lav",
            Variant::Quad => "quad",
            Variant::Tikh => "tikh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Variant::Aff => 0,
            Variant::Lav => 1,
            Variant::Quad => 2,
            Variant::Tikh => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub loss_normalization: Normalization,
    /// Divergence threshold as a multiple of the initial loss.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-4,
            batch_size: 32,
            epochs: 200,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            loss_normalization: Normalization::PerDimension,
            divergence_factor: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, samples: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 || self.batch_size > samples {
            return bad(format!(
                "batch size {} must be in 1..={samples} (dataset size)",
                self.batch_size
            ));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad(format!("initial learning rate must be positive, got {}", self.initial_lr));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("Adam betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.adam_eps > 0.0) {
            return bad("Adam epsilon must be positive".into());
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence factor must exceed 1".into());
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, samples: usize) -> usize {
        self.epochs * self.steps_per_epoch(samples)
    }
}

/// One matrix and one vector per variant.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainableParams<T: Real> {
    Aff { w: DMatrix<T>, b: DVector<T> },
    Lav { m: DMatrix<T>, c: DVector<T> },
    Quad { l: DMatrix<T>, c: DVector<T> },
    Tikh { r: DMatrix<T>, c: DVector<T> },
}

impl<T: Real> TrainableParams<T> {
    pub fn variant(&self) -> Variant {
        match self {
            TrainableParams::Aff { .. } => Variant::Aff,
            TrainableParams::Lav { .. } => Variant::Lav,
            TrainableParams::Quad { .. } => Variant::Quad,
            TrainableParams::Tikh { .. } => Variant::Tikh,
        }
    }

    pub fn from_parts(variant: Variant, mat: DMatrix<T>, vec: DVector<T>) -> Self {
        match variant {
            Variant::Aff => TrainableParams::Aff { w: mat, b: vec },
            Variant::Lav => TrainableParams::Lav { m: mat, c: vec },
            Variant::Quad => TrainableParams::Quad { l: mat, c: vec },
            Variant::Tikh => TrainableParams::Tikh { r: mat, c: vec },
        }
    }

    /// All zeros, shaped for signal length `n` and measurement length `m`.
    pub fn zeros(variant: Variant, n: usize, m: usize) -> Self {
        let cols = if variant == Variant::Aff { m } else { n };
        Self::from_parts(variant, DMatrix::zeros(n, cols), DVector::zeros(n))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        match self {
            TrainableParams::Aff { w, .. } => w,
            TrainableParams::Lav { m, .. } => m,
            TrainableParams::Quad { l, .. } => l,
            TrainableParams::Tikh { r, .. } => r,
        }
    }

    pub fn vector(&self) -> &DVector<T> {
        match self {
            TrainableParams::Aff { b, .. } => b,
            TrainableParams::Lav { c, .. } | TrainableParams::Quad { c, .. } | TrainableParams::Tikh { c, .. } => c,
        }
    }

    pub fn parts_mut(&mut self) -> (&mut DMatrix<T>, &mut DVector<T>) {
        match self {
            TrainableParams::Aff { w, b } => (w, b),
            TrainableParams::Lav { m, c } => (m, c),
            TrainableParams::Quad { l, c } => (l, c),
            TrainableParams::Tikh { r, c } => (r, c),
        }
    }

    pub fn into_parts(self) -> (DMatrix<T>, DVector<T>) {
        match self {
            TrainableParams::Aff { w, b } => (w, b),
            TrainableParams::Lav { m, c } => (m, c),
            TrainableParams::Quad { l, c } => (l, c),
            TrainableParams::Tikh { r, c } => (r, c),
        }
    }

    pub fn param_count(&self) -> usize {
        self.matrix().len() + self.vector().len()
    }

    /// Checks shapes against `a` (`m × n`) and finiteness.
    pub fn validate(&self, a: &DMatrix<T>) -> Result<()> {
        let (m, n) = a.shape();
        let cols = if self.variant() == Variant::Aff { m } else { n };
        if self.matrix().shape() != (n, cols) {
            return Err(Error::dim(
                &format!("{} parameter matrix", self.variant()),
                format!("{n}x{cols}"),
                format!("{}x{}", self.matrix().nrows(), self.matrix().ncols()),
            ));
        }
        if self.vector().len() != n {
            return Err(Error::dim(&format!("{} offset", self.variant()), n, self.vector().len()));
        }
        linalg::ensure_finite(self.matrix(), "parameter matrix")?;
        if let Some(i) = self.vector().iter().position(|v| !v.finite()) {
            return Err(Error::NonFinite {
                what: "parameter offset".into(),
                index: i,
            });
        }
        Ok(())
    }

    /// The regularizing matrix added to `AᵀA`; `None` for Aff.
    pub fn penalty(&self) -> Option<DMatrix<T>> {
        match self {
            TrainableParams::Aff { .. } => None,
            TrainableParams::Lav { m, .. } => Some(m.clone()),
            TrainableParams::Quad { l, .. } => Some(linalg::symmetrize(l)),
            TrainableParams::Tikh { r, .. } => Some(r.transpose() * r),
        }
    }

    /// System matrix `AᵀA + P`; `None` for Aff.
    pub fn system_matrix(&self, ata: &DMatrix<T>) -> Option<DMatrix<T>> {
        self.penalty().map(|p| ata + p)
    }

    /// The equivalent explicit affine map.
    pub fn to_affine(&self, a: &DMatrix<T>) -> Result<AffineMap<T>> {
        self.validate(a)?;
        match self {
            TrainableParams::Aff { w, b } => AffineMap::new(w.clone(), b.clone()),
            _ => {
                let s = self.system_matrix(&(a.transpose() * a)).expect("non-affine variant");
                let lu = LuFactor::new(&s)?;
                let w = lu.solve(&a.transpose());
                let b = lu.solve(&DMatrix::from_column_slice(self.vector().len(), 1, self.vector().as_slice()));
                AffineMap::new(w, b.column(0).into_owned())
            }
        }
    }

    /// `x₀ = P⁻¹ c`, which turns the additive offset into the `P x₀` form;
    /// `None` for Aff or when `P` is singular.
    pub fn lavrentiev_x0(&self) -> Option<DVector<T>> {
        let p = self.penalty()?;
        let lu = LuFactor::new(&p).ok()?;
        let c = DMatrix::from_column_slice(self.vector().len(), 1, self.vector().as_slice());
        Some(lu.solve(&c).column(0).into_owned())
    }

    pub fn cast<U: Real>(&self) -> TrainableParams<U> {
        let f = |v: &T| U::lit(v.as_f64());
        TrainableParams::from_parts(self.variant(), self.matrix().map(|v| f(&v)), self.vector().map(|v| f(&v)))
    }
}

/// `lr0 · ½(1 + cos(π·step/total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Factorized system for one parameter setting.
enum Solver<T: Real> {
    Affine,
    System { lu: LuFactor<T>, guarded: bool },
}

fn factor<T: Real>(params: &TrainableParams<T>, ata: &DMatrix<T>, step: usize) -> Result<Solver<T>> {
    let Some(mut s) = params.system_matrix(ata) else {
        return Ok(Solver::Affine);
    };
    match LuFactor::new(&s) {
        Ok(lu) => Ok(Solver::System { lu, guarded: false }),
        Err(_) => {
            let n = s.nrows();
            let shift = T::lit(1e-12 * ata.trace().as_f64() / n as f64);
            for i in 0..n {
                s[(i, i)] += shift;
            }
            log::warn!(
                "{} system singular at step {step}; retrying with diagonal shift {:e}",
                params.variant(),
                shift.as_f64()
            );
            LuFactor::new(&s)
                .map(|lu| Solver::System { lu, guarded: true })
                .map_err(|_| Error::TrainingSingular {
                    step,
                    variant: params.variant().name().into(),
                })
        }
    }
}

fn add_offset<T: Real>(q: &mut DMatrix<T>, c: &DVector<T>) {
    for mut col in q.column_iter_mut() {
        col += c;
    }
}

/// Reconstructions for every column of `y`, with one factorization for the
/// whole batch.
pub fn forward<T: Real>(params: &TrainableParams<T>, a: &DMatrix<T>, y: &DMatrix<T>) -> Result<DMatrix<T>> {
    params.validate(a)?;
    if y.nrows() != a.nrows() {
        return Err(Error::dim("measurement length", a.nrows(), y.nrows()));
    }
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    forward_pre(params, &ata, &aty, y, 0).map(|(xh, _)| xh)
}

fn forward_pre<T: Real>(
    params: &TrainableParams<T>,
    ata: &DMatrix<T>,
    aty: &DMatrix<T>,
    y: &DMatrix<T>,
    step: usize,
) -> Result<(DMatrix<T>, Solver<T>)> {
    let solver = factor(params, ata, step)?;
    let xh = match (&solver, params) {
        (Solver::Affine, TrainableParams::Aff { w, b }) => {
            let mut out = w * y;
            add_offset(&mut out, b);
            out
        }
        (Solver::System { lu, .. }, p) => {
            let mut q = aty.clone();
            add_offset(&mut q, p.vector());
            lu.solve(&q)
        }
        _ => unreachable!("solver matches variant"),
    };
    Ok((xh, solver))
}

fn loss_scale(norm: Normalization, batch: usize, n: usize) -> f64 {
    match norm {
        Normalization::SumOfSquares => 1.0 / batch as f64,
        Normalization::PerDimension => 1.0 / (batch * n) as f64,
    }
}

/// A training batch with `Aᵀy` precomputed.
pub struct Batch<'a, T: Real> {
    pub x: &'a DMatrix<T>,
    pub y: &'a DMatrix<T>,
    pub aty: &'a DMatrix<T>,
}

/// Minibatch loss and its gradient, shaped like `params`.
pub fn loss_and_grad<T: Real>(
    params: &TrainableParams<T>,
    a: &DMatrix<T>,
    x: &DMatrix<T>,
    y: &DMatrix<T>,
    norm: Normalization,
) -> Result<(f64, TrainableParams<T>)> {
    params.validate(a)?;
    if x.ncols() != y.ncols() || x.nrows() != a.ncols() || y.nrows() != a.nrows() {
        return Err(Error::dim(
            "training batch",
            format!("{}xB and {}xB", a.ncols(), a.nrows()),
            format!("{}x{} and {}x{}", x.nrows(), x.ncols(), y.nrows(), y.ncols()),
        ));
    }
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    let (loss, grad, _) = loss_and_grad_pre(params, &ata, &Batch { x, y, aty: &aty }, norm, 0)?;
    Ok((loss, grad))
}

fn loss_and_grad_pre<T: Real>(
    params: &TrainableParams<T>,
    ata: &DMatrix<T>,
    batch: &Batch<'_, T>,
    norm: Normalization,
    step: usize,
) -> Result<(f64, TrainableParams<T>, bool)> {
    let (xh, solver) = forward_pre(params, ata, batch.aty, batch.y, step)?;
    let resid = &xh - batch.x;
    let n = resid.nrows();
    let k = loss_scale(norm, resid.ncols(), n);
    let loss = resid.norm_squared().as_f64() * k;
    // dL/dx̂ = 2k (x̂ − x)
    let dxh = resid * T::lit(2.0 * k);
    let row_sums = |g: &DMatrix<T>| DVector::from_iterator(n, g.row_iter().map(|r| r.sum()));
    match (solver, params) {
        (Solver::Affine, _) => {
            let gw = &dxh * batch.y.transpose();
            Ok((loss, TrainableParams::Aff { w: gw, b: row_sums(&dxh) }, false))
        }
        (Solver::System { lu, guarded }, p) => {
            // x̂ = S⁻¹q: dL/dq = S⁻ᵀ dL/dx̂, dL/dS = −(dL/dq) x̂ᵀ
            let g = lu.solve_transpose(&dxh);
            let gc = row_sums(&g);
            let gs = -(&g * xh.transpose());
            let grad = match p {
                TrainableParams::Lav { .. } => TrainableParams::Lav { m: gs, c: gc },
                TrainableParams::Quad { .. } => TrainableParams::Quad {
                    l: (&gs + gs.transpose()) * T::lit(0.5),
                    c: gc,
                },
                TrainableParams::Tikh { r, .. } => TrainableParams::Tikh {
                    r: r * (&gs + gs.transpose()),
                    c: gc,
                },
                TrainableParams::Aff { .. } => unreachable!("affine has no system"),
            };
            Ok((loss, grad, guarded))
        }
    }
}

/// Dataset and operator with `AᵀA` and `AᵀY` cached for repeated use.
pub struct TrainingProblem<'a, T: Real> {
    a: &'a DMatrix<T>,
    data: &'a PairedDataset<T>,
    ata: DMatrix<T>,
    aty: DMatrix<T>,
}

impl<'a, T: Real> TrainingProblem<'a, T> {
    pub fn new(data: &'a PairedDataset<T>, a: &'a DMatrix<T>) -> Result<Self> {
        data.check_operator(a)?;
        Ok(Self {
            a,
            data,
            ata: a.transpose() * a,
            aty: a.transpose() * data.y(),
        })
    }

    pub fn operator(&self) -> &DMatrix<T> {
        self.a
    }

    pub fn data(&self) -> &PairedDataset<T> {
        self.data
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.ata
    }

    /// Loss over the full dataset.
    pub fn loss(&self, params: &TrainableParams<T>, norm: Normalization) -> Result<f64> {
        params.validate(self.a)?;
        let (xh, _) = forward_pre(params, &self.ata, &self.aty, self.data.y(), 0)?;
        let sq = (xh - self.data.x()).norm_squared().as_f64();
        Ok(sq * loss_scale(norm, self.data.len(), self.data.signal_dim()))
    }

    fn batch_loss_and_grad(
        &self,
        params: &TrainableParams<T>,
        idx: &[usize],
        norm: Normalization,
        step: usize,
    ) -> Result<(f64, TrainableParams<T>, bool)> {
        let x = self.data.x().select_columns(idx);
        let y = self.data.y().select_columns(idx);
        let aty = self.aty.select_columns(idx);
        loss_and_grad_pre(params, &self.ata, &Batch { x: &x, y: &y, aty: &aty }, norm, step)
    }
}

/// Minibatch losses of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTrace {
    pub variant: Variant,
    /// Loss of each minibatch, before the update it drives.
    pub steps: Vec<f64>,
    /// Mean minibatch loss of each completed epoch.
    pub epochs: Vec<f64>,
    pub steps_per_epoch: usize,
    /// Moving-average window: 5% of the steps per epoch, at least 1.
    pub window: usize,
    /// Full-dataset loss at the initial parameters.
    pub initial_loss: f64,
    /// Full-dataset loss at the returned parameters.
    pub final_loss: f64,
    pub normalization: Normalization,
    /// Steps where the singular-system shift was applied.
    pub guarded_steps: Vec<usize>,
}

impl LossTrace {
    fn new(variant: Variant, steps_per_epoch: usize, initial_loss: f64, normalization: Normalization) -> Self {
        Self {
            variant,
            steps: Vec::new(),
            epochs: Vec::new(),
            steps_per_epoch,
            window: smoothing_window(steps_per_epoch),
            initial_loss,
            final_loss: f64::NAN,
            normalization,
            guarded_steps: Vec::new(),
        }
    }

    /// Trailing moving average of the step losses; the first `window − 1`
    /// entries average over what is available.
    pub fn smoothed(&self) -> Vec<f64> {
        moving_average(&self.steps, self.window)
    }
}

pub fn smoothing_window(steps_per_epoch: usize) -> usize {
    ((steps_per_epoch as f64 * 0.05).round() as usize).max(1)
}

pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// Successful training: final parameters, the trace and the Adam state.
#[derive(Clone, Debug)]
pub struct TrainRun<T: Real> {
    pub params: TrainableParams<T>,
    pub trace: LossTrace,
    pub adam: AdamState<T>,
}

/// Aborted training with the trace recorded up to the failure.
#[derive(Debug)]
pub struct TrainFailure<T: Real> {
    pub error: Error,
    pub trace: LossTrace,
    pub last_params: TrainableParams<T>,
}

impl<T: Real> From<TrainFailure<T>> for Error {
    fn from(f: TrainFailure<T>) -> Self {
        f.error
    }
}

/// Permutation of `0..len` for one epoch, from a stream keyed by
/// `(seed, epoch)`.
pub fn epoch_permutation(seed: u64, epoch: usize, len: usize) -> Vec<usize> {
    const SHUFFLE_DOMAIN: u64 = 0x5348_5546_464C_4531;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_DOMAIN);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Adam with a per-step cosine schedule over `epochs × ⌈N/batch⌉` steps.
///
/// The computation is sequential and bitwise reproducible for a fixed
/// config.
pub fn train<T: Real>(
    problem: &TrainingProblem<'_, T>,
    config: &TrainConfig,
    init: TrainableParams<T>,
) -> std::result::Result<TrainRun<T>, TrainFailure<T>> {
    let variant = init.variant();
    let norm = config.loss_normalization;
    let samples = problem.data.len();
    let steps_per_epoch = config.steps_per_epoch(samples.max(1));
    let early = |error: Error, init: TrainableParams<T>| TrainFailure {
        error,
        trace: LossTrace::new(variant, steps_per_epoch, f64::NAN, norm),
        last_params: init,
    };
    if let Err(e) = config.validate(samples).and_then(|_| init.validate(problem.a)) {
        return Err(early(e, init));
    }
    let initial_loss = match problem.loss(&init, norm) {
        Ok(l) => l,
        Err(e) => return Err(early(e, init)),
    };
    let mut trace = LossTrace::new(variant, steps_per_epoch, initial_loss, norm);
    let total = config.total_steps(samples);
    let limit = config.divergence_factor * initial_loss.max(f64::MIN_POSITIVE);
    let mut params = init;
    let mut adam = Adam::new(config, &params);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let perm = epoch_permutation(config.seed, epoch, samples);
        let mut epoch_sum = 0.0;
        for idx in perm.chunks(config.batch_size) {
            let (loss, grad, guarded) = match problem.batch_loss_and_grad(&params, idx, norm, step) {
                Ok(v) => v,
                Err(error) => {
                    return Err(TrainFailure {
                        error,
                        trace,
                        last_params: params,
                    })
                }
            };
            if guarded {
                trace.guarded_steps.push(step);
            }
            trace.steps.push(loss);
            if !loss.is_finite() || loss > limit {
                return Err(TrainFailure {
                    error: Error::Divergence { step, loss, limit },
                    trace,
                    last_params: params,
                });
            }
            epoch_sum += loss;
            adam.update(&mut params, &grad, cosine_lr(step, total, config.initial_lr));
            step += 1;
        }
        trace.epochs.push(epoch_sum / steps_per_epoch as f64);
    }
    match problem.loss(&params, norm) {
        Ok(l) => trace.final_loss = l,
        Err(error) => {
            return Err(TrainFailure {
                error,
                trace,
                last_params: params,
            })
        }
    }
    Ok(TrainRun {
        params,
        trace,
        adam: adam.into_state(),
    })
}

/// Per-dimension loss over `data` for already trained parameters.
pub fn evaluate<T: Real>(
    params: &TrainableParams<T>,
    data: &PairedDataset<T>,
    a: &DMatrix<T>,
    norm: Normalization,
) -> Result<f64> {
    TrainingProblem::new(data, a)?.loss(params, norm)
}
