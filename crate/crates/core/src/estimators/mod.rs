//! Affine reconstruction maps, their risks, and the closed-form optimal
//! regularizers.

mod optimal;
mod risk;

pub use optimal::{
    asymmetry_fraction, lavrentiev_gap_condition, lmmse, optimal_lavrentiev,
    optimal_lavrentiev_with, optimal_offset, optimal_quadratic, optimal_quadratic_with, optimal_tikhonov_weighted,
    optimal_tikhonov_weighted_with, GapCondition, QuadraticSolution, DEFAULT_GAP_TOL,
};
pub use risk::{
    empirical_risk_with, risk_closed_form, risk_empirical, EmpiricalRisk, Normalization,
    RiskBreakdown,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, LuFactor, SymmetricMatrix};
use crate::scalar::Real;

/// `x̂(y) = W y + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T: Real> {
    /// `n × m`.
    pub w: DMatrix<T>,
    /// Length `n`.
    pub b: DVector<T>,
}

impl<T: Real> AffineMap<T> {
    pub fn new(w: DMatrix<T>, b: DVector<T>) -> Result<Self> {
        if w.nrows() != b.len() {
            return Err(Error::dim("affine offset length", w.nrows(), b.len()));
        }
        linalg::ensure_finite(&w, "W")?;
        if b.iter().any(|v| !v.finite()) {
            return Err(Error::NonFinite {
                what: "b".into(),
                index: b.iter().position(|v| !v.finite()).unwrap_or(0),
            });
        }
        Ok(Self { w, b })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, m),
            b: DVector::zeros(n),
        }
    }

    pub fn signal_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Applies the map to every column of `y`.
    pub fn apply(&self, y: &DMatrix<T>) -> DMatrix<T> {
        let mut out = &self.w * y;
        for mut col in out.column_iter_mut() {
            col += &self.b;
        }
        out
    }

    pub(crate) fn check_shape(&self, n: usize, m: usize) -> Result<()> {
        if self.w.shape() != (n, m) {
            return Err(Error::dim(
                "affine map shape",
                format!("{n}x{m}"),
                format!("{}x{}", self.w.nrows(), self.w.ncols()),
            ));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> AffineMap<U> {
        AffineMap {
            w: self.w.map(|v| U::lit(v.as_f64())),
            b: self.b.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Parameters of the six variational / Lavrentiev families.
///
/// The offset always enters the normal equations as `M x₀` (or `RᵀR x₀`):
/// `x̂(y) = (AᵀΩA + M)⁻¹(AᵀΩy + M x₀)`. Unweighted variants use `Ω = I`.
#[derive(Clone, Debug, PartialEq)]
pub enum RegularizerParams<T: Real> {
    TikhWeighted {
        omega: SymmetricMatrix<T>,
        r: DMatrix<T>,
        x0: DVector<T>,
    },
    Tikh {
        r: DMatrix<T>,
        x0: DVector<T>,
    },
    QuadWeighted {
        omega: SymmetricMatrix<T>,
        m: SymmetricMatrix<T>,
        x0: DVector<T>,
    },
    Quad {
        m: SymmetricMatrix<T>,
        x0: DVector<T>,
    },
    LavWeighted {
        omega: SymmetricMatrix<T>,
        m: DMatrix<T>,
        x0: DVector<T>,
    },
    Lav {
        m: DMatrix<T>,
        x0: DVector<T>,
    },
}

impl<T: Real> RegularizerParams<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TikhWeighted { .. } => "tikh-weighted",
            Self::Tikh { .. } => "tikh",
            Self::QuadWeighted { .. } => "quad-weighted",
            Self::Quad { .. } => "quad",
            Self::LavWeighted { .. } => "lav-weighted",
            Self::Lav { .. } => "lav",
        }
    }

    pub fn x0(&self) -> &DVector<T> {
        match self {
            Self::TikhWeighted { x0, .. }
            | Self::Tikh { x0, .. }
            | Self::QuadWeighted { x0, .. }
            | Self::Quad { x0, .. }
            | Self::LavWeighted { x0, .. }
            | Self::Lav { x0, .. } => x0,
        }
    }

    pub fn omega(&self) -> Option<&SymmetricMatrix<T>> {
        match self {
            Self::TikhWeighted { omega, .. }
            | Self::QuadWeighted { omega, .. }
            | Self::LavWeighted { omega, .. } => Some(omega),
            _ => None,
        }
    }

    /// The matrix added to `AᵀΩA`: `RᵀR` for Tikhonov, `M` otherwise.
    pub fn penalty(&self) -> DMatrix<T> {
        match self {
            Self::TikhWeighted { r, .. } | Self::Tikh { r, .. } => r.transpose() * r,
            Self::QuadWeighted { m, .. } | Self::Quad { m, .. } => m.as_matrix().clone(),
            Self::LavWeighted { m, .. } | Self::Lav { m, .. } => m.clone(),
        }
    }

    fn validate(&self, n: usize, m_dim: usize) -> Result<()> {
        if self.x0().len() != n {
            return Err(Error::dim("x0 length", n, self.x0().len()));
        }
        if let Some(omega) = self.omega() {
            if omega.dim() != m_dim {
                return Err(Error::dim("omega dimension", m_dim, omega.dim()));
            }
            let chol = omega.as_matrix().clone().cholesky();
            if chol.is_none() {
                return Err(Error::NotPositiveDefinite {
                    what: "noise weight omega".into(),
                    eigenvalue: linalg::sym_eig(omega).map(|e| e.min().as_f64()).unwrap_or(f64::NAN),
                    threshold: 0.0,
                });
            }
        }
        match self {
            Self::TikhWeighted { r, .. } | Self::Tikh { r, .. } if r.ncols() != n => {
                Err(Error::dim("R columns", n, r.ncols()))
            }
            Self::QuadWeighted { m, .. } | Self::Quad { m, .. } if m.dim() != n => {
                Err(Error::dim("M dimension", n, m.dim()))
            }
            Self::LavWeighted { m, .. } | Self::Lav { m, .. } if m.shape() != (n, n) => Err(
                Error::dim("M shape", format!("{n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())),
            ),
            _ => Ok(()),
        }
    }
}

/// Builds the affine map `W = (AᵀΩA + M)⁻¹AᵀΩ`, `b = (AᵀΩA + M)⁻¹M x₀`.
pub fn assemble_map<T: Real>(params: &RegularizerParams<T>, a: &DMatrix<T>) -> Result<AffineMap<T>> {
    let (m_dim, n) = a.shape();
    params.validate(n, m_dim)?;
    let at_omega = match params.omega() {
        Some(omega) => a.transpose() * omega.as_matrix(),
        None => a.transpose(),
    };
    let penalty = params.penalty();
    let system = &at_omega * a + &penalty;
    let lu = LuFactor::new(&system).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            what: format!("{} system matrix", params.name()),
            condition,
        },
        other => other,
    })?;
    let w = lu.solve(&at_omega);
    let rhs = &penalty * params.x0();
    let b = lu.solve(&DMatrix::from_column_slice(n, 1, rhs.as_slice()));
    AffineMap::new(w, b.column(0).into_owned())
}
