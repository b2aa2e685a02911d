use nalgebra::{DMatrix, DVector};

use super::{TrainConfig, TrainableParams};
use crate::scalar::Real;

/// First and second moment estimates, shaped like a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real> {
    /// Number of updates applied so far.
    pub t: u64,
    pub m_mat: DMatrix<T>,
    pub v_mat: DMatrix<T>,
    pub m_vec: DVector<T>,
    pub v_vec: DVector<T>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros_like(params: &TrainableParams<T>) -> Self {
        let (r, c) = params.matrix().shape();
        let n = params.vector().len();
        Self {
            t: 0,
            m_mat: DMatrix::zeros(r, c),
            v_mat: DMatrix::zeros(r, c),
            m_vec: DVector::zeros(n),
            v_vec: DVector::zeros(n),
        }
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: &TrainConfig, params: &TrainableParams<T>) -> Self {
        Self::with_state(config, AdamState::zeros_like(params))
    }

    pub fn with_state(config: &TrainConfig, state: AdamState<T>) -> Self {
        Self {
            beta1: config.adam_betas.0,
            beta2: config.adam_betas.1,
            eps: config.adam_eps,
            state,
        }
    }

    pub fn state(&self) -> &AdamState<T> {
        &self.state
    }

    pub fn into_state(self) -> AdamState<T> {
        self.state
    }

    pub fn update(&mut self, params: &mut TrainableParams<T>, grad: &TrainableParams<T>, lr: f64) {
        self.state.t += 1;
        let t = self.state.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (eps, lr) = (self.eps, lr);
        let step = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            let g = g.as_f64();
            let mf = b1 * m.as_f64() + (1.0 - b1) * g;
            let vf = b2 * v.as_f64() + (1.0 - b2) * g * g;
            *m = T::lit(mf);
            *v = T::lit(vf);
            let mhat = mf / c1;
            let vhat = vf / c2;
            *p -= T::lit(lr * mhat / (vhat.sqrt() + eps));
        };
        let (pm, pv) = params.parts_mut();
        let s = &mut self.state;
        for (((p, g), m), v) in pm
            .iter_mut()
            .zip(grad.matrix().iter())
            .zip(s.m_mat.iter_mut())
            .zip(s.v_mat.iter_mut())
        {
            step(p, *g, m, v);
        }
        for (((p, g), m), v) in pv
            .iter_mut()
            .zip(grad.vector().iter())
            .zip(s.m_vec.iter_mut())
            .zip(s.v_vec.iter_mut())
        {
            step(p, *g, m, v);
        }
    }
}
