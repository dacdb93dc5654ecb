//! Small dense kernels shared by the samplers and filters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Positive-definiteness tolerance and the one-shot diagonal jitter used
/// when a factorization falls below it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdPolicy {
    /// Smallest admissible Cholesky pivot relative to the largest diagonal entry.
    pub rel_pivot_tol: f64,
    /// Jitter added to the diagonal, relative to `trace / dim`.
    pub rel_jitter: f64,
}

impl Default for SpdPolicy {
    fn default() -> Self {
        Self { rel_pivot_tol: 1e-10, rel_jitter: 1e-9 }
    }
}

/// `(X + X') / 2`.
pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn try_cholesky(a: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > tol) {
            return None;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Lower Cholesky factor of an s.p.d. matrix.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
}

impl CholFactor {
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        Self::with_policy(a, what, &SpdPolicy::default())
    }

    pub fn with_policy(a: &DMatrix<f64>, what: &str, policy: &SpdPolicy) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::scale(what, format!("not square: {}x{}", a.nrows(), a.ncols())));
        }
        if a.nrows() == 0 {
            return Err(Error::scale(what, "empty matrix"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::scale(what, "non-finite entry"));
        }
        let a = symmetrize(a);
        let max_diag = a.diagonal().max();
        if !(max_diag > 0.0) {
            return Err(Error::scale(what, "non-positive diagonal"));
        }
        let tol = policy.rel_pivot_tol * max_diag;
        if let Some(l) = try_cholesky(&a, tol) {
            return Ok(Self { l });
        }
        let n = a.nrows();
        let jitter = policy.rel_jitter * a.trace() / n as f64;
        let mut jittered = a.clone();
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        try_cholesky(&jittered, tol)
            .map(|l| Self { l })
            .ok_or_else(|| Error::scale(what, "Cholesky pivot below tolerance"))
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.l.solve_lower_triangular(b).expect("nonzero pivots");
        self.l.transpose().solve_upper_triangular(&y).expect("nonzero pivots")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.l.solve_lower_triangular(b).expect("nonzero pivots");
        self.l.transpose().solve_upper_triangular(&y).expect("nonzero pivots")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrize(&self.solve(&DMatrix::identity(self.dim(), self.dim())))
    }

    /// `L^{-1} B`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l.solve_lower_triangular(b).expect("nonzero pivots")
    }
}

pub fn ensure_spd(a: &DMatrix<f64>, what: &str) -> Result<()> {
    CholFactor::new(a, what).map(|_| ())
}

pub fn is_spd(a: &DMatrix<f64>) -> bool {
    if !a.is_square() || a.nrows() == 0 {
        return false;
    }
    let max_diag = a.diagonal().max();
    max_diag > 0.0 && try_cholesky(&symmetrize(a), 1e-10 * max_diag).is_some()
}

pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(CholFactor::new(a, what)?.inverse())
}
