//! Singular value decomposition for the small dense matrices the crate
//! works with.
//!
//! The general-purpose decomposition in the matrix library can return
//! inconsistent factors on some well-scaled inputs (a reported singular
//! value of 1e-16 next to a reconstruction residual of 1e-2), which silently
//! corrupts every rank and subspace decision built on top. The one-sided
//! Jacobi method used here orthogonalizes the columns in place, so the left
//! vectors and singular values come from the same data and the factors
//! reconstruct the input to machine precision by construction. Small
//! singular values also keep high relative accuracy. The quadratic cost per
//! sweep is irrelevant at the matrix sizes involved (a few dozen rows at
//! most).

use nalgebra::{DMatrix, DVector};

/// Factors of A = U diag(sigma) V^T with sigma sorted in descending order.
///
/// U is m x n and V is n x n orthogonal. When the rank is below n the
/// trailing columns of U are zero, mirroring their zero singular values.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 64;

/// Cyclic one-sided Jacobi decomposition.
pub fn jacobi_svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    if m == 0 || n == 0 {
        return Svd {
            u: DMatrix::zeros(m, n),
            sigma: DVector::zeros(n),
            v,
        };
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).dot(&w.column(p));
                let beta = w.column(q).dot(&w.column(q));
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let mut u = DMatrix::zeros(m, n);
    let mut sigma = DVector::zeros(n);
    let mut vs = DMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(k, &(w.column(j) / norms[j]));
        }
        vs.set_column(k, &v.column(j));
    }
    Svd { u, sigma, v: vs }
}

/// The singular values alone, descending.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    jacobi_svd(a).sigma
}
