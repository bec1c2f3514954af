//! Dense symmetric-positive-definite primitives: validated SPD matrices,
//! Gaussian beliefs, inversion, Cholesky sampling and the Lyapunov solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative Frobenius tolerance on `m - mᵀ` accepted by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Absolute asymmetry tolerance for the right-hand side of [`solve_lyapunov`].
pub const RHS_SYMMETRY_TOL: f64 = 1e-10;

/// Frobenius norm of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what))
    }
}

/// A symmetric positive definite matrix.
///
/// Positive definiteness means "the Cholesky factorization succeeds"; there
/// is no eigenvalue threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        check_finite(&m, "matrix")?;
        let asym = asymmetry(&m);
        if asym > SYMMETRY_TOL * m.norm() {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let m = symmetrize(&m);
        if Cholesky::new(m.clone()).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(SpdMatrix(m))
    }

    /// Wraps a matrix already known to be SPD (e.g. the inverse of one).
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        SpdMatrix(symmetrize(&m))
    }

    pub fn identity(d: usize) -> Self {
        SpdMatrix(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds from a row-major slice of `d * d` entries.
    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {d}x{d} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn cholesky(&self) -> Cholesky<f64, Dyn> {
        Cholesky::new(self.0.clone()).expect("validated at construction")
    }
}

impl AsRef<DMatrix<f64>> for SpdMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Gaussian belief `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteInput("mean"));
        }
        Ok(Gaussian { mean, cov })
    }

    /// Zero-mean Gaussian with the given covariance.
    pub fn centered(cov: SpdMatrix) -> Self {
        let d = cov.dim();
        Gaussian {
            mean: DVector::zeros(d),
            cov,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }
}

/// Inverse of an SPD matrix through its Cholesky factor.
///
/// The result is symmetrized, so it is exactly symmetric.
pub fn spd_inverse(m: &SpdMatrix) -> SpdMatrix {
    SpdMatrix::from_trusted(m.cholesky().inverse())
}

/// Inverse of a plain matrix that is expected to be SPD.
pub fn try_spd_inverse(m: &DMatrix<f64>) -> Result<SpdMatrix> {
    Ok(spd_inverse(&SpdMatrix::new(m.clone())?))
}

/// Draws `n` samples `mean + L·ε` with `L` the lower Cholesky factor of the
/// covariance and `ε ~ N(0, I)` from a ChaCha8 stream seeded with `seed`.
///
/// `n = 0` yields an empty list.
pub fn cholesky_sample(g: &Gaussian, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let l = g.cov().cholesky().l();
    let d = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let eps = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            g.mean() + &l * eps
        })
        .collect()
}

/// Position of the symmetric unknown `S[i][j]` (unordered pair) in the
/// packed upper-triangular vector.
fn packed_index(i: usize, j: usize, d: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    r * d - r * (r + 1) / 2 + c
}

/// Solves `a·S + S·a = -q` for the unique symmetric `S`.
///
/// The Lyapunov operator restricted to symmetric matrices is assembled as a
/// dense `d(d+1)/2` square system and solved by LU. The result is
/// symmetrized after the solve.
pub fn solve_lyapunov(a: &SpdMatrix, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.dim();
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "coefficient is {d}x{d} but right-hand side is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    check_finite(q, "Lyapunov right-hand side")?;
    let asym = asymmetry(q);
    if asym > RHS_SYMMETRY_TOL * q.norm().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let a = a.as_matrix();
    let n = d * (d + 1) / 2;
    let mut system = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..d {
        for j in i..d {
            let row = packed_index(i, j, d);
            rhs[row] = -q[(i, j)];
            // (aS)_ij = Σ_k a_ik S_kj,  (Sa)_ij = Σ_k S_ik a_kj
            for k in 0..d {
                system[(row, packed_index(k, j, d))] += a[(i, k)];
                system[(row, packed_index(i, k, d))] += a[(k, j)];
            }
        }
    }
    let packed = system.lu().solve(&rhs).ok_or(Error::NotPositiveDefinite)?;

    let mut s = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            s[(i, j)] = packed[packed_index(i, j, d)];
        }
    }
    Ok(symmetrize(&s))
}
