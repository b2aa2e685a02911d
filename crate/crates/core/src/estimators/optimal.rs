use nalgebra::{DMatrix, DVector};

use super::{AffineMap, RegularizerParams};
use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor, SymmetricMatrix};
use crate::moments::{jitter_regularize, ProblemMoments, DEFAULT_JITTER_REL};
use crate::scalar::Real;

/// Relative tolerance of [`lavrentiev_gap_condition`].
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// `b = (I − WA) μₓ`, the risk-minimizing offset for a fixed `W`.
pub fn optimal_offset<T: Real>(p: &ProblemMoments<T>, w: &DMatrix<T>) -> Result<DVector<T>> {
    let (m, n) = p.a().shape();
    if w.shape() != (n, m) {
        return Err(Error::dim(
            "W shape",
            format!("{n}x{m}"),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    Ok(p.mu_x() - w * (p.a() * p.mu_x()))
}

/// The best affine map: `W = Σₓ Aᵀ (AΣₓAᵀ + Σ_ε)⁻¹`, `b = (I − WA) μₓ`.
pub fn lmmse<T: Real>(p: &ProblemMoments<T>) -> Result<AffineMap<T>> {
    let a = p.a();
    let a_sigma = a * p.sigma_x().as_matrix();
    let k = SymmetricMatrix::new(&a_sigma * a.transpose() + p.sigma_eps().as_matrix())?;
    // W = (K⁻¹ A Σₓ)ᵀ since K and Σₓ are symmetric
    let z = match linalg::solve_spd(&k, &a_sigma) {
        Ok(z) => z,
        Err(_) => LuFactor::new(k.as_matrix())
            .map_err(|e| match e {
                Error::Singular { condition, .. } => Error::Singular {
                    what: "AΣₓAᵀ + Σ_ε".into(),
                    condition,
                },
                other => other,
            })?
            .solve(&a_sigma),
    };
    let w = z.transpose();
    let b = optimal_offset(p, &w)?;
    AffineMap::new(w, b)
}

/// `Ω = Σ_ε⁻¹`, `R` with `RᵀR = Σₓ⁻¹`, `x₀ = μₓ`; assembles to the LMMSE map.
pub fn optimal_tikhonov_weighted<T: Real>(p: &ProblemMoments<T>) -> Result<RegularizerParams<T>> {
    optimal_tikhonov_weighted_with(p, DEFAULT_JITTER_REL)
}

pub fn optimal_tikhonov_weighted_with<T: Real>(
    p: &ProblemMoments<T>,
    jitter_rel: f64,
) -> Result<RegularizerParams<T>> {
    let omega = inverse_covariance(p.sigma_eps(), "sigma_eps", jitter_rel)?;
    let precision = inverse_covariance(p.sigma_x(), "sigma_x", jitter_rel)?;
    let r = linalg::spd_factor(&precision)?;
    Ok(RegularizerParams::TikhWeighted {
        omega,
        r,
        x0: p.mu_x().clone(),
    })
}

fn inverse_covariance<T: Real>(
    s: &SymmetricMatrix<T>,
    what: &str,
    jitter_rel: f64,
) -> Result<SymmetricMatrix<T>> {
    let jittered = jitter_regularize(s, jitter_rel);
    linalg::inverse_spd(&jittered).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            what: format!("{what} (jitter {jitter_rel:e})"),
            condition,
        },
        other => other,
    })
}

/// Optimal unweighted Lavrentiev regularizer
/// `M = AᵀΣ_εA (AᵀA)⁻¹ Σₓ⁻¹` with `x₀ = μₓ`.
pub fn optimal_lavrentiev<T: Real>(p: &ProblemMoments<T>) -> Result<RegularizerParams<T>> {
    optimal_lavrentiev_with(p, DEFAULT_JITTER_REL)
}

pub fn optimal_lavrentiev_with<T: Real>(
    p: &ProblemMoments<T>,
    jitter_rel: f64,
) -> Result<RegularizerParams<T>> {
    let a = p.a();
    let gram = SymmetricMatrix::new(a.transpose() * a)?;
    let noise_gram = a.transpose() * p.sigma_eps().as_matrix() * a;
    let sigma_x = jitter_regularize(p.sigma_x(), jitter_rel);

    let y = linalg::solve_spd(&gram, &noise_gram).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            what: "AᵀA".into(),
            condition,
        },
        other => other,
    })?;
    let z = linalg::solve_spd(&sigma_x, &y).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            what: format!("sigma_x (jitter {jitter_rel:e})"),
            condition,
        },
        other => other,
    })?;
    let m = z.transpose();

    LuFactor::new(&(gram.as_matrix() + &m)).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            what: "AᵀA + M (Lavrentiev)".into(),
            condition,
        },
        other => other,
    })?;
    Ok(RegularizerParams::Lav {
        m,
        x0: p.mu_x().clone(),
    })
}

/// Optimal symmetric (quadratic) regularizer with its diagnostics.
#[derive(Clone, Debug)]
pub struct QuadraticSolution<T: Real> {
    /// Always [`RegularizerParams::Quad`].
    pub params: RegularizerParams<T>,
    /// Solution of `N B + B N = D`; `M = N⁻¹ − AᵀA`.
    pub n: SymmetricMatrix<T>,
    /// Smallest eigenvalue of `M`; negative values are legitimate.
    pub min_eigenvalue: T,
    /// `‖NB + BN − D‖ / ‖D‖`.
    pub lyapunov_residual: T,
    /// `|ν|max / |ν|min` over the eigenvalues of `N`.
    pub n_condition: T,
}

impl<T: Real> QuadraticSolution<T> {
    pub fn m(&self) -> &SymmetricMatrix<T> {
        match &self.params {
            RegularizerParams::Quad { m, .. } => m,
            _ => unreachable!("quadratic solution always holds Quad params"),
        }
    }
}

/// Inverse-condition threshold below which `N` counts as singular.
const N_RCOND_TOL: f64 = 1e-13;

/// Optimal unweighted quadratic regularizer via the Lyapunov equation
/// `AᵀAΣₓ + ΣₓAᵀA = N B + B N` with `B = Aᵀ(AΣₓAᵀ + Σ_ε)A`.
pub fn optimal_quadratic<T: Real>(p: &ProblemMoments<T>) -> Result<QuadraticSolution<T>> {
    optimal_quadratic_with(p, linalg::DEFAULT_PD_REL_TOL)
}

/// [`optimal_quadratic`] with an explicit positive-definiteness threshold
/// for `B` (relative to its largest eigenvalue).
pub fn optimal_quadratic_with<T: Real>(p: &ProblemMoments<T>, pd_rel_tol: f64) -> Result<QuadraticSolution<T>> {
    let a = p.a();
    let sigma_x = p.sigma_x().as_matrix();
    let k = a * sigma_x * a.transpose() + p.sigma_eps().as_matrix();
    let b = SymmetricMatrix::new(a.transpose() * k * a)?;
    let gram = a.transpose() * a;
    let gs = &gram * sigma_x;
    let d = SymmetricMatrix::new(&gs + gs.transpose())?;

    let n = linalg::lyapunov_solve_tol(&b, &d, pd_rel_tol)?;
    let residual = (n.as_matrix() * b.as_matrix() + b.as_matrix() * n.as_matrix() - d.as_matrix()).norm()
        / d.as_matrix().norm().max(T::lit(f64::MIN_POSITIVE));

    let eig_n = linalg::sym_eig(&n)?;
    let abs_max = eig_n.values.iter().map(|v| v.abs()).fold(T::zero(), |a, b| a.max(b));
    let abs_min = eig_n
        .values
        .iter()
        .map(|v| v.abs())
        .fold(T::lit(f64::INFINITY), |a, b| a.min(b));
    let condition = if abs_min > T::zero() {
        abs_max / abs_min
    } else {
        T::lit(f64::INFINITY)
    };
    if !(abs_min.as_f64() > N_RCOND_TOL * abs_max.as_f64()) {
        return Err(Error::Singular {
            what: "Lyapunov solution N".into(),
            condition: condition.as_f64(),
        });
    }
    let n_inv = eig_n.reconstruct_with(|v| T::one() / v);
    let m = SymmetricMatrix::new(n_inv - gram)?;
    let min_eigenvalue = linalg::sym_eig(&m)?.min();
    Ok(QuadraticSolution {
        params: RegularizerParams::Quad {
            m,
            x0: p.mu_x().clone(),
        },
        n,
        min_eigenvalue,
        lyapunov_residual: residual,
        n_condition: condition,
    })
}

/// Outcome of testing `AᵀΣ_ε P_ker(Aᵀ) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapCondition {
    pub holds: bool,
    /// `‖AᵀΣ_ε P_ker(Aᵀ)‖_F`
    pub residual: f64,
    /// `residual / ‖AᵀΣ_ε‖_F`
    pub relative: f64,
}

/// Whether unweighted optimal Lavrentiev regularization reaches the LMMSE
/// risk: holds iff `‖AᵀΣ_ε P‖ ≤ tol ‖AᵀΣ_ε‖`.
pub fn lavrentiev_gap_condition<T: Real>(
    a: &DMatrix<T>,
    sigma_eps: &SymmetricMatrix<T>,
    tol: f64,
) -> Result<GapCondition> {
    if sigma_eps.dim() != a.nrows() {
        return Err(Error::dim("sigma_eps dimension", a.nrows(), sigma_eps.dim()));
    }
    let p = linalg::kernel_projector(a)?;
    let at_sigma = a.transpose() * sigma_eps.as_matrix();
    let residual = (&at_sigma * p.as_matrix()).norm().as_f64();
    let scale = at_sigma.norm().as_f64();
    let relative = if scale > 0.0 { residual / scale } else { 0.0 };
    Ok(GapCondition {
        holds: residual <= tol * scale,
        residual,
        relative,
    })
}

/// `½‖M − Mᵀ‖_F / ‖M‖_F`.
pub fn asymmetry_fraction<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if !m.is_square() {
        return Err(Error::dim(
            "asymmetry_fraction",
            "square",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let norm = m.norm();
    if norm == T::zero() {
        return Err(Error::InvalidArgument("asymmetry of the zero matrix".into()));
    }
    Ok((m - m.transpose()).norm() * T::lit(0.5) / norm)
}
