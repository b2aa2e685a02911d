//! Independent oracles and random instances for the validation suite.
//!
//! The oracles avoid the code paths they check: dense Kronecker solves for
//! the Lyapunov equation, per-sample linear solves for the training loss.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use regopt::linalg::SymmetricMatrix;
use regopt::trainer::TrainableParams;

pub fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `G Gᵀ / d + floor · I` for a Gaussian `G`.
pub fn spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> SymmetricMatrix<f64> {
    let g = gauss(rng, d, d);
    let s = &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * floor;
    SymmetricMatrix::new((&s + s.transpose()) * 0.5).unwrap()
}

/// Solves `N B + B N = D` through the `n² × n²` Kronecker system.
pub fn lyapunov_oracle(b: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut k = DMatrix::zeros(n * n, n * n);
    // column-major vec: vec(NB) = (Bᵀ ⊗ I) vec N, vec(BN) = (I ⊗ B) vec N
    for i in 0..n {
        for j in 0..n {
            for r in 0..n {
                k[(i * n + r, j * n + r)] += b[(j, i)];
                k[(i * n + r, i * n + j)] += b[(r, j)];
            }
        }
    }
    let rhs = DVector::from_column_slice(d.as_slice());
    let v = k.lu().solve(&rhs).expect("nonsingular Kronecker system");
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Per-dimension loss from explicit per-sample solves.
pub fn oracle_loss(params: &TrainableParams<f64>, a: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (n, count) = x.shape();
    let mut total = 0.0;
    for i in 0..count {
        let yi = y.column(i).into_owned();
        let xhat = match params {
            TrainableParams::Aff { w, b } => w * &yi + b,
            other => {
                let pen = match other {
                    TrainableParams::Lav { m, .. } => m.clone(),
                    TrainableParams::Quad { l, .. } => (l + l.transpose()) * 0.5,
                    TrainableParams::Tikh { r, .. } => r.transpose() * r,
                    TrainableParams::Aff { .. } => unreachable!(),
                };
                let s = a.transpose() * a + pen;
                let rhs = a.transpose() * &yi + other.vector();
                s.lu().solve(&rhs).expect("nonsingular system")
            }
        };
        total += (xhat - x.column(i)).norm_squared();
    }
    total / (count * n) as f64
}
