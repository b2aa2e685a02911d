use nalgebra::{DMatrix, DVector};

use super::{train, LossTrace, TrainConfig, TrainFailure, TrainableParams, TrainingProblem, Variant};
use crate::error::Result;
use crate::linalg::{self, LuFactor};
use crate::scalar::Real;

/// Final parameters and traces of the four stages, in training order.
#[derive(Clone, Debug)]
pub struct WarmStartResult<T: Real> {
    pub tikh: TrainableParams<T>,
    pub quad: TrainableParams<T>,
    pub lav: TrainableParams<T>,
    pub aff: TrainableParams<T>,
    pub traces: Vec<LossTrace>,
}

impl<T: Real> WarmStartResult<T> {
    pub fn get(&self, v: Variant) -> &TrainableParams<T> {
        match v {
            Variant::Aff => &self.aff,
            Variant::Lav => &self.lav,
            Variant::Quad => &self.quad,
            Variant::Tikh => &self.tikh,
        }
    }

    pub fn trace(&self, v: Variant) -> Option<&LossTrace> {
        self.traces.iter().find(|t| t.variant == v)
    }
}

/// `R = αI` with `‖RᵀR‖_F = 0.1 ‖AᵀA‖_F`, `c = 0`.
pub fn initial_tikhonov<T: Real>(ata: &DMatrix<T>) -> TrainableParams<T> {
    let n = ata.nrows();
    let alpha = (0.1 * linalg::frobenius(ata).as_f64() / (n as f64).sqrt()).sqrt();
    TrainableParams::Tikh {
        r: DMatrix::identity(n, n) * T::lit(alpha),
        c: DVector::zeros(n),
    }
}

/// The parameters of the next stage that reproduce the current map.
pub fn handoff<T: Real>(params: &TrainableParams<T>, ata: &DMatrix<T>, a: &DMatrix<T>) -> Result<TrainableParams<T>> {
    Ok(match params {
        TrainableParams::Tikh { r, c } => TrainableParams::Quad {
            l: r.transpose() * r,
            c: c.clone(),
        },
        TrainableParams::Quad { l, c } => TrainableParams::Lav {
            m: linalg::symmetrize(l),
            c: c.clone(),
        },
        TrainableParams::Lav { m, c } => {
            let lu = LuFactor::new(&(ata + m))?;
            let b = lu.solve(&DMatrix::from_column_slice(c.len(), 1, c.as_slice()));
            TrainableParams::Aff {
                w: lu.solve(&a.transpose()),
                b: b.column(0).into_owned(),
            }
        }
        TrainableParams::Aff { .. } => params.clone(),
    })
}

/// Trains Tikh, then Quad, Lav and Aff, each initialized from the previous
/// stage's equivalent parameters. `init` overrides the first Tikh iterate.
pub fn warm_start_chain<T: Real>(
    problem: &TrainingProblem<'_, T>,
    config: &TrainConfig,
    init: Option<TrainableParams<T>>,
) -> std::result::Result<WarmStartResult<T>, TrainFailure<T>> {
    let mut current = init.unwrap_or_else(|| initial_tikhonov(problem.gram()));
    let mut traces = Vec::with_capacity(4);
    let mut done = Vec::with_capacity(4);
    for stage in [Variant::Tikh, Variant::Quad, Variant::Lav, Variant::Aff] {
        if stage != Variant::Tikh {
            current = handoff(&current, problem.gram(), problem.operator()).map_err(|error| TrainFailure {
                error,
                trace: traces.last().cloned().expect("previous stage trace"),
                last_params: current.clone(),
            })?;
        }
        debug_assert_eq!(current.variant(), stage);
        let run = train(problem, config, current)?;
        log::info!(
            "{stage}: loss {:.6e} -> {:.6e} over {} steps",
            run.trace.initial_loss,
            run.trace.final_loss,
            run.trace.steps.len()
        );
        traces.push(run.trace);
        done.push(run.params.clone());
        current = run.params;
    }
    let mut it = done.into_iter();
    let (tikh, quad, lav, aff) = (
        it.next().expect("tikh"),
        it.next().expect("quad"),
        it.next().expect("lav"),
        it.next().expect("aff"),
    );
    Ok(WarmStartResult {
        tikh,
        quad,
        lav,
        aff,
        traces,
    })
}
