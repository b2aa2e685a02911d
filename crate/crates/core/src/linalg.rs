//! Dense kernels: symmetric eigendecomposition, Lyapunov solves, kernel
//! projectors and factorizations.
//!
//! Everything here is a pure function of its inputs.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// An eigenvalue counts as positive when it exceeds this fraction of the
/// largest eigenvalue.
pub const DEFAULT_PD_REL_TOL: f64 = 1e-12;

/// Above this condition number of `AᵀA` the kernel projector switches from
/// the normal equations to a singular vector basis.
pub const PROJECTOR_COND_LIMIT: f64 = 1e8;

/// Relative residual accepted from the eigensolver.
pub(crate) fn eig_residual_tol<T: Real>() -> f64 {
    (T::epsilon().as_f64() * 1e3).max(1e-10)
}

pub fn frobenius<T: Real>(m: &DMatrix<T>) -> T {
    m.norm()
}

/// `(X + Xᵀ)/2`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)]) * half)
}

pub fn ensure_finite<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    match m.iter().position(|v| !v.finite()) {
        Some(index) => Err(Error::NonFinite {
            what: what.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Square matrix that is exactly symmetric. Construction symmetrizes.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix<T: Real>(DMatrix<T>);

impl<T: Real> SymmetricMatrix<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dim(
                "symmetric matrix",
                "square",
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        ensure_finite(&m, "symmetric matrix")?;
        Ok(Self(symmetrize(&m)))
    }

    /// Wraps a matrix the caller has already made exactly symmetric.
    pub(crate) fn from_symmetric_unchecked(m: DMatrix<T>) -> Self {
        debug_assert!(m.is_square());
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    pub fn scaled(&self, s: T) -> Self {
        Self(&self.0 * s)
    }

    /// Converts between scalar types.
    pub fn cast<U: Real>(&self) -> SymmetricMatrix<U> {
        SymmetricMatrix(self.0.map(|v| U::lit(v.as_f64())))
    }
}

impl<T: Real> Deref for SymmetricMatrix<T> {
    type Target = DMatrix<T>;
    fn deref(&self) -> &DMatrix<T> {
        &self.0
    }
}

impl<T: Real> AsRef<DMatrix<T>> for SymmetricMatrix<T> {
    fn as_ref(&self) -> &DMatrix<T> {
        &self.0
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymEig<T: Real> {
    pub values: DVector<T>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: DMatrix<T>,
}

impl<T: Real> SymEig<T> {
    pub fn min(&self) -> T {
        self.values[0]
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// `U f(Λ) Uᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> DMatrix<T> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        self.reconstruct_with(|v| v)
    }
}

pub fn sym_eig<T: Real>(s: &SymmetricMatrix<T>) -> Result<SymEig<T>> {
    let n = s.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let raw = s
        .as_matrix()
        .clone()
        .try_symmetric_eigen(T::default_epsilon(), 1000 * n.max(10))
        .ok_or(Error::NoConvergence {
            residual: f64::INFINITY,
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        raw.eigenvalues[a]
            .partial_cmp(&raw.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| raw.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw.eigenvectors.column(src));
    }

    let mut lambda_u = vectors.clone();
    for (j, mut col) in lambda_u.column_iter_mut().enumerate() {
        col *= values[j];
    }
    let residual = (s.as_matrix() * &vectors - lambda_u).norm().as_f64();
    let scale = s.as_matrix().norm().as_f64().max(f64::MIN_POSITIVE);
    if residual > eig_residual_tol::<T>() * scale {
        return Err(Error::NoConvergence {
            residual: residual / scale,
        });
    }
    Ok(SymEig { values, vectors })
}

/// Fails unless every eigenvalue exceeds `rel_tol · λ_max`.
pub fn check_positive_definite<T: Real>(eig: &SymEig<T>, what: &str, rel_tol: f64) -> Result<()> {
    let max = eig.max().as_f64();
    let threshold = rel_tol * max.max(0.0);
    let min = eig.min().as_f64();
    if max <= 0.0 || min <= threshold {
        return Err(Error::NotPositiveDefinite {
            what: what.to_string(),
            eigenvalue: min,
            threshold,
        });
    }
    Ok(())
}

/// Symmetric solution `N` of `N B + B N = D` for positive definite `B`.
pub fn lyapunov_solve<T: Real>(
    b: &SymmetricMatrix<T>,
    d: &SymmetricMatrix<T>,
) -> Result<SymmetricMatrix<T>> {
    lyapunov_solve_tol(b, d, DEFAULT_PD_REL_TOL)
}

pub fn lyapunov_solve_tol<T: Real>(
    b: &SymmetricMatrix<T>,
    d: &SymmetricMatrix<T>,
    pd_rel_tol: f64,
) -> Result<SymmetricMatrix<T>> {
    if b.dim() != d.dim() {
        return Err(Error::dim("lyapunov_solve", b.dim(), d.dim()));
    }
    let eig = sym_eig(b)?;
    check_positive_definite(&eig, "Lyapunov coefficient B", pd_rel_tol)?;
    let n = lyapunov_from_eig(&eig, d);

    let residual = (n.as_matrix() * b.as_matrix() + b.as_matrix() * n.as_matrix() - d.as_matrix())
        .norm()
        .as_f64();
    let scale = d.as_matrix().norm().as_f64();
    if residual > 1e-8 * scale.max(f64::MIN_POSITIVE) && T::epsilon().as_f64() < 1e-10 {
        return Err(Error::Singular {
            what: "Lyapunov operator".into(),
            condition: (eig.max() / eig.min()).as_f64(),
        });
    }
    Ok(n)
}

/// `N = U (⟨uᵢ, D uⱼ⟩ / (βᵢ + βⱼ))ᵢⱼ Uᵀ` given `B = U diag(β) Uᵀ`.
pub fn lyapunov_from_eig<T: Real>(eig: &SymEig<T>, d: &SymmetricMatrix<T>) -> SymmetricMatrix<T> {
    let u = &eig.vectors;
    let mut core = u.transpose() * d.as_matrix() * u;
    let beta = &eig.values;
    for j in 0..core.ncols() {
        for i in 0..core.nrows() {
            core[(i, j)] /= beta[i] + beta[j];
        }
    }
    SymmetricMatrix::from_symmetric_unchecked(symmetrize(&(u * core * u.transpose())))
}

/// Orthogonal projector onto `ker(Aᵀ)`, i.e. `I − A(AᵀA)⁻¹Aᵀ`.
pub fn kernel_projector<T: Real>(a: &DMatrix<T>) -> Result<SymmetricMatrix<T>> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    if n > m {
        return Err(Error::RankDeficient { rank: m, cols: n });
    }
    let gram = SymmetricMatrix::new(a.transpose() * a)?;
    let eig = sym_eig(&gram)?;
    let (lo, hi) = (eig.min().as_f64(), eig.max().as_f64());
    let rank_tol = (m.max(n) as f64) * T::epsilon().as_f64();

    let range = if lo > 0.0 && hi / lo < PROJECTOR_COND_LIMIT {
        let chol = gram
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                what: "AᵀA".into(),
                eigenvalue: lo,
                threshold: 0.0,
            })?;
        a * chol.solve(&a.transpose())
    } else {
        let svd = a.clone().svd(true, false);
        let sigma_max = svd.singular_values.max().as_f64();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| s.as_f64() > rank_tol * sigma_max)
            .count();
        if rank < n {
            return Err(Error::RankDeficient { rank, cols: n });
        }
        let u = svd.u.expect("left singular vectors requested");
        &u * u.transpose()
    };
    let p = DMatrix::<T>::identity(m, m) - range;
    Ok(SymmetricMatrix::from_symmetric_unchecked(symmetrize(&p)))
}

/// Upper triangular `R` with `RᵀR = S`, the transpose of the lower Cholesky
/// factor.
pub fn spd_factor<T: Real>(s: &SymmetricMatrix<T>) -> Result<DMatrix<T>> {
    match s.as_matrix().clone().cholesky() {
        Some(chol) => Ok(chol.l().transpose()),
        None => Err(not_pd_error(s, "spd_factor input")),
    }
}

fn not_pd_error<T: Real>(s: &SymmetricMatrix<T>, what: &str) -> Error {
    let eigenvalue = sym_eig(s).map(|e| e.min().as_f64()).unwrap_or(f64::NAN);
    Error::NotPositiveDefinite {
        what: what.to_string(),
        eigenvalue,
        threshold: 0.0,
    }
}

fn condition_estimate<T: Real>(s: &SymmetricMatrix<T>) -> f64 {
    match sym_eig(s) {
        Ok(e) => {
            let lo = e.values.iter().map(|v| v.as_f64().abs()).fold(f64::INFINITY, f64::min);
            let hi = e.values.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
            if lo == 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Solves `S X = rhs` for positive definite `S` by Cholesky.
pub fn solve_spd<T: Real>(s: &SymmetricMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    if rhs.nrows() != s.dim() {
        return Err(Error::dim("solve_spd rhs rows", s.dim(), rhs.nrows()));
    }
    match s.as_matrix().clone().cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Err(Error::Singular {
            what: "SPD system".into(),
            condition: condition_estimate(s),
        }),
    }
}

/// Inverse of a positive definite matrix, symmetrized.
pub fn inverse_spd<T: Real>(s: &SymmetricMatrix<T>) -> Result<SymmetricMatrix<T>> {
    let inv = solve_spd(s, &DMatrix::identity(s.dim(), s.dim()))?;
    Ok(SymmetricMatrix::from_symmetric_unchecked(symmetrize(&inv)))
}

/// LU factorization with partial pivoting, reusable for `S x = b` and
/// `Sᵀ x = b`.
pub struct LuFactor<T: Real> {
    lu: LU<T, Dyn, Dyn>,
    lower: DMatrix<T>,
    upper: DMatrix<T>,
}

/// Pivots below this fraction of the largest pivot mark the matrix singular.
const LU_PIVOT_REL_TOL: f64 = 1e-14;

impl<T: Real> LuFactor<T> {
    pub fn new(s: &DMatrix<T>) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::dim(
                "LU factorization",
                "square",
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        let lu = s.clone().lu();
        let upper = lu.u();
        let pivots = upper.diagonal().map(|v| v.as_f64().abs());
        let hi = pivots.max();
        let lo = pivots.min();
        if !(lo > LU_PIVOT_REL_TOL * hi) || !lo.is_finite() {
            return Err(Error::Singular {
                what: "general system".into(),
                condition: if lo == 0.0 { f64::INFINITY } else { hi / lo },
            });
        }
        let lower = lu.l();
        Ok(Self { lu, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.upper.nrows()
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap lower bound on
    /// the condition number.
    pub fn pivot_condition(&self) -> f64 {
        let pivots = self.upper.diagonal().map(|v| v.as_f64().abs());
        pivots.max() / pivots.min()
    }

    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(rhs).expect("nonsingular by construction")
    }

    /// Solves `Sᵀ X = rhs` with the same factors (`PS = LU`).
    pub fn solve_transpose(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        let y = self
            .upper
            .tr_solve_upper_triangular(rhs)
            .expect("nonsingular by construction");
        let mut z = self
            .lower
            .tr_solve_lower_triangular(&y)
            .expect("unit diagonal");
        self.lu.p().inv_permute_rows(&mut z);
        z
    }
}

/// Solves a general square system by LU.
pub fn solve_general<T: Real>(s: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    if rhs.nrows() != s.nrows() {
        return Err(Error::dim("solve_general rhs rows", s.nrows(), rhs.nrows()));
    }
    Ok(LuFactor::new(s)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(n: usize, seed: u64) -> SymmetricMatrix<f64> {
        let g = random_matrix(n, n, seed);
        SymmetricMatrix::new(&g * g.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
    }

    fn random_sym(n: usize, seed: u64) -> SymmetricMatrix<f64> {
        SymmetricMatrix::new(random_matrix(n, n, seed)).unwrap()
    }

    #[test]
    fn symmetrizes_on_construction() {
        let s = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0])).unwrap();
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 0)], 3.0);
        assert!(SymmetricMatrix::new(DMatrix::<f64>::zeros(2, 3)).is_err());
        assert!(SymmetricMatrix::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn eig_of_diagonal_is_sorted() {
        let e = sym_eig(&SymmetricMatrix::<f64>::from_diagonal(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 3.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_of_identity() {
        let e = sym_eig(&SymmetricMatrix::<f64>::identity(3)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn eig_round_trip_random() {
        let s = random_sym(5, 7);
        let e = sym_eig(&s).unwrap();
        assert!((e.reconstruct() - s.as_matrix()).norm() <= 1e-10 * s.norm());
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-10);
        for i in 1..5 {
            assert!(e.values[i - 1] <= e.values[i]);
        }
    }

    #[test]
    fn lyapunov_identity_halves() {
        let d = random_sym(4, 1);
        let n = lyapunov_solve(&SymmetricMatrix::identity(4), &d).unwrap();
        assert!((n.as_matrix() - d.as_matrix() * 0.5).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_diagonal() {
        let b = SymmetricMatrix::from_diagonal(&[1.0, 3.0]);
        let d = SymmetricMatrix::from_diagonal(&[2.0, 8.0]);
        let n = lyapunov_solve(&b, &d).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 4.0 / 3.0]));
        assert!((n.as_matrix() - expected).norm() < 1e-12);
    }

    /// Solves `(I⊗B + Bᵀ⊗I) vec(N) = vec(D)` densely.
    fn kronecker_lyapunov(b: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
        let n = b.nrows();
        let mut big = DMatrix::<f64>::zeros(n * n, n * n);
        // column-major vec: index (i, j) -> i + n j
        for j in 0..n {
            for i in 0..n {
                let row = i + n * j;
                for k in 0..n {
                    // (N B)_{ij} = Σ_k N_{ik} B_{kj}
                    big[(row, i + n * k)] += b[(k, j)];
                    // (B N)_{ij} = Σ_k B_{ik} N_{kj}
                    big[(row, k + n * j)] += b[(i, k)];
                }
            }
        }
        let rhs = DVector::from_column_slice(d.as_slice());
        let sol = big.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(n, n, sol.as_slice())
    }

    #[test]
    fn lyapunov_matches_kronecker_oracle() {
        let b = random_spd(4, 11);
        let d = random_sym(4, 12);
        let n = lyapunov_solve(&b, &d).unwrap();
        let oracle = kronecker_lyapunov(b.as_matrix(), d.as_matrix());
        assert!((n.as_matrix() - oracle).norm() < 1e-9);
    }

    #[test]
    fn lyapunov_rejects_indefinite_b() {
        let b = SymmetricMatrix::from_diagonal(&[1.0, -0.5]);
        let d = SymmetricMatrix::identity(2);
        match lyapunov_solve(&b, &d) {
            Err(Error::NotPositiveDefinite { eigenvalue, .. }) => assert_eq!(eigenvalue, -0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projector_of_single_column() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let p = kernel_projector(&a).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 1.0]));
        assert!((p.as_matrix() - expected).norm() < 1e-15);
    }

    #[test]
    fn projector_of_square_invertible_is_zero() {
        let a = random_matrix(4, 4, 2) + DMatrix::identity(4, 4) * 3.0;
        let p = kernel_projector(&a).unwrap();
        assert!(p.norm() < 1e-10);
    }

    #[test]
    fn projector_random_tall() {
        let a = random_matrix(6, 3, 3);
        let p = kernel_projector(&a).unwrap();
        assert!((p.as_matrix() * p.as_matrix() - p.as_matrix()).norm() < 1e-10);
        assert!((p.as_matrix() * &a).norm() < 1e-10);
        assert!((p.trace() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn projector_ill_conditioned_uses_svd_path() {
        let mut a = random_matrix(6, 3, 4);
        let w = random_matrix(6, 1, 40).column(0).clone_owned();
        a.set_column(2, &(a.column(1) + w * 1e-6));
        let p = kernel_projector(&a).unwrap();
        assert!((p.as_matrix() * &a).norm() < 1e-9);
        assert!((p.trace() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn projector_rank_deficient_errors() {
        let mut a = random_matrix(5, 3, 5);
        let c = a.column(0).clone_owned();
        a.set_column(1, &c);
        match kernel_projector(&a) {
            Err(Error::RankDeficient { rank, cols }) => {
                assert_eq!((rank, cols), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spd_factor_examples() {
        let r = spd_factor(&SymmetricMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(r, DMatrix::identity(3, 3));
        let r = spd_factor(&SymmetricMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((r - DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0]))).norm() < 1e-15);
        let s = random_spd(6, 5);
        let r = spd_factor(&s).unwrap();
        assert!((r.transpose() * &r - s.as_matrix()).norm() < 1e-10 * s.norm());
        assert!(matches!(
            spd_factor(&SymmetricMatrix::from_diagonal(&[1.0, -2.0])),
            Err(Error::NotPositiveDefinite { eigenvalue, .. }) if eigenvalue == -2.0
        ));
    }

    #[test]
    fn solve_spd_examples() {
        let b = DMatrix::from_column_slice(2, 1, &[3.0, -1.0]);
        assert_eq!(solve_spd(&SymmetricMatrix::identity(2), &b).unwrap(), b);
        let x = solve_spd(
            &SymmetricMatrix::from_diagonal(&[2.0, 4.0]),
            &DMatrix::from_column_slice(2, 1, &[2.0, 8.0]),
        )
        .unwrap();
        assert!((x - DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).norm() < 1e-15);
        let s = random_spd(7, 9);
        let rhs = random_matrix(7, 3, 10);
        let x = solve_spd(&s, &rhs).unwrap();
        assert!((s.as_matrix() * x - &rhs).norm() < 1e-10 * rhs.norm());
        assert!(matches!(
            solve_spd(&SymmetricMatrix::from_diagonal(&[1.0, 0.0]), &rhs.rows(0, 2).into_owned()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn lu_solves_both_orientations() {
        let s = random_matrix(6, 6, 21) + DMatrix::identity(6, 6);
        let rhs = random_matrix(6, 4, 22);
        let lu = LuFactor::new(&s).unwrap();
        let x = lu.solve(&rhs);
        assert!((&s * x - &rhs).norm() < 1e-10 * rhs.norm());
        let xt = lu.solve_transpose(&rhs);
        assert!((s.transpose() * xt - &rhs).norm() < 1e-10 * rhs.norm());
        let mut singular = s.clone();
        singular.set_row(2, &(s.row(0) * 2.0));
        assert!(matches!(LuFactor::new(&singular), Err(Error::Singular { .. })));
    }

    #[test]
    fn works_in_single_precision() {
        let b = SymmetricMatrix::<f32>::from_diagonal(&[1.0, 3.0]);
        let d = SymmetricMatrix::<f32>::from_diagonal(&[2.0, 8.0]);
        let n = lyapunov_solve(&b, &d).unwrap();
        assert!((n[(1, 1)] - 4.0 / 3.0).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sym_strategy() -> impl Strategy<Value = SymmetricMatrix<f64>> {
            (1usize..7).prop_flat_map(|n| {
                prop::collection::vec(-10.0f64..10.0, n * n)
                    .prop_map(move |v| SymmetricMatrix::new(DMatrix::from_vec(n, n, v)).unwrap())
            })
        }

        fn spd_strategy() -> impl Strategy<Value = SymmetricMatrix<f64>> {
            (1usize..7).prop_flat_map(|n| {
                prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
                    let g = DMatrix::from_vec(n, n, v);
                    SymmetricMatrix::new(&g * g.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn eig_round_trip(s in sym_strategy()) {
                let e = sym_eig(&s).unwrap();
                prop_assert!((e.reconstruct() - s.as_matrix()).norm() <= 1e-10 * s.norm().max(1e-300));
            }

            #[test]
            fn lyapunov_residual_and_oracle(b in spd_strategy(), seed in any::<u64>()) {
                let d = random_sym(b.dim(), seed);
                let n = lyapunov_solve(&b, &d).unwrap();
                let res = (n.as_matrix() * b.as_matrix() + b.as_matrix() * n.as_matrix() - d.as_matrix()).norm();
                prop_assert!(res <= 1e-8 * d.norm());
                let oracle = kronecker_lyapunov(b.as_matrix(), d.as_matrix());
                prop_assert!((n.as_matrix() - &oracle).norm() <= 1e-9 * oracle.norm().max(1.0));
            }

            #[test]
            fn factor_of_gram_round_trips(s in spd_strategy()) {
                let r = spd_factor(&s).unwrap();
                prop_assert!((r.transpose() * &r - s.as_matrix()).norm() <= 1e-10 * s.norm());
            }

            #[test]
            fn projector_idempotent(rows in 2usize..8, seed in any::<u64>()) {
                let cols = 1 + (seed as usize % rows);
                let a = random_matrix(rows, cols, seed);
                if let Ok(p) = kernel_projector(&a) {
                    prop_assert!((p.as_matrix() * p.as_matrix() - p.as_matrix()).norm() < 1e-9);
                    prop_assert!((p.as_matrix() * &a).norm() < 1e-9 * a.norm().max(1.0));
                }
            }
        }
    }
}
