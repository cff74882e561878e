//! Small dense Hermitian helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result, C64};

/// Largest condition estimate accepted from a Cholesky factor.
pub const MAX_CONDITION: f64 = 1e13;

/// Relative diagonal jitter applied once when a factorization fails.
pub const JITTER: f64 = 1e-12;

/// Cholesky factor of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    chol: Cholesky<C64, Dyn>,
    /// `(max L_ii / min L_ii)^2`, a cheap lower estimate of the condition number.
    pub condition: f64,
    /// Whether the diagonal jitter had to be added.
    pub jittered: bool,
}

impl HermitianFactor {
    /// Factors `m`, retrying once with `JITTER * trace / dim` on the diagonal.
    pub fn new(m: &DMatrix<C64>) -> Result<Self> {
        let dim = m.nrows();
        if dim != m.ncols() {
            return Err(Error::param(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let (chol, jittered) = match Cholesky::new(m.clone()) {
            Some(c) => (c, false),
            None => {
                let trace: f64 = (0..dim).map(|i| m[(i, i)].re).sum();
                let eps = JITTER * trace.abs().max(f64::MIN_POSITIVE) / dim.max(1) as f64;
                let mut shifted = m.clone();
                for i in 0..dim {
                    shifted[(i, i)] += C64::new(eps, 0.0);
                }
                let c = Cholesky::new(shifted).ok_or_else(|| Error::Numerical {
                    message: "matrix is not positive definite".into(),
                    condition: f64::INFINITY,
                })?;
                (c, true)
            }
        };
        let diag = chol.l_dirty().diagonal();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for d in diag.iter() {
            lo = lo.min(d.re);
            hi = hi.max(d.re);
        }
        let condition = if dim == 0 { 1.0 } else { (hi / lo).powi(2) };
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::Numerical {
                message: "Hermitian system is too ill-conditioned".into(),
                condition,
            });
        }
        Ok(HermitianFactor {
            chol,
            condition,
            jittered,
        })
    }

    pub fn solve(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<C64>) -> DVector<C64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<C64> {
        self.chol.inverse()
    }

    /// Lower-triangular factor `L` with `M = L L^H`.
    pub fn l(&self) -> DMatrix<C64> {
        self.chol.l()
    }

    /// `ln det M`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
    }

    /// `L^{-1} B`, so that `B^H M^{-1} B = W^H W`.
    pub fn whiten(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    /// `x^H M^{-1} x`, computed through one triangular solve.
    pub fn quad_inv(&self, x: &DVector<C64>) -> f64 {
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a nonzero diagonal");
        w.norm_squared()
    }
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M^H) / 2`.
pub fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

/// Returns `F` with `F F^H = M` for a Hermitian positive semidefinite `M`.
///
/// Eigenvalues down to `-neg_tol` are clamped to zero; anything more negative
/// is reported as a model error.
pub fn psd_sqrt(m: &DMatrix<C64>, neg_tol: f64) -> Result<DMatrix<C64>> {
    let eig = SymmetricEigen::new(hermitize(m));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -neg_tol {
        return Err(Error::Model(format!(
            "matrix is not positive semidefinite (smallest eigenvalue {min:.3e})"
        )));
    }
    let mut f = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(hermitize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
