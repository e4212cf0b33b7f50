//! Small dense kernels for Gram sub-matrices: Cholesky factorization,
//! triangular solves and a cyclic Jacobi eigenvalue routine.
//!
//! Sub-matrix sizes here are bounded by the sample size (|S| <= n), so
//! straightforward O(k^3) algorithms are adequate.

use ndarray::{Array1, Array2, ArrayView2};

use crate::scalar::Real;

/// `X_S^T X_S` for the columns listed in `cols`.
pub fn gram_submatrix<T: Real>(x: ArrayView2<'_, T>, cols: &[usize]) -> Array2<T> {
    let k = cols.len();
    let mut g = Array2::zeros((k, k));
    for a in 0..k {
        let ca = x.column(cols[a]);
        for b in a..k {
            let v = ca.dot(&x.column(cols[b]));
            g[[a, b]] = v;
            g[[b, a]] = v;
        }
    }
    g
}

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    /// Returns `None` if a pivot is not strictly positive.
    pub fn new(a: &Array2<T>) -> Option<Self> {
        let k = a.nrows();
        let mut l = Array2::zeros((k, k));
        for j in 0..k {
            let mut d = a[[j, j]];
            for m in 0..j {
                d = d - l[[j, m]] * l[[j, m]];
            }
            if !(d > T::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..k {
                let mut s = a[[i, j]];
                for m in 0..j {
                    s = s - l[[i, m]] * l[[j, m]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Some(Self { l })
    }

    pub fn solve(&self, b: &Array1<T>) -> Array1<T> {
        let k = self.l.nrows();
        let mut z = b.clone();
        for i in 0..k {
            let mut s = z[i];
            for m in 0..i {
                s = s - self.l[[i, m]] * z[m];
            }
            z[i] = s / self.l[[i, i]];
        }
        for i in (0..k).rev() {
            let mut s = z[i];
            for m in (i + 1)..k {
                s = s - self.l[[m, i]] * z[m];
            }
            z[i] = s / self.l[[i, i]];
        }
        z
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.l.nrows()).map(|i| two * self.l[[i, i]].ln()).sum()
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, in
/// ascending order.
pub fn symmetric_eigenvalues<T: Real>(a: &Array2<T>) -> Vec<T> {
    let k = a.nrows();
    let mut m = a.clone();
    let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if k == 0 {
        return Vec::new();
    }
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..k {
            for q in (p + 1)..k {
                off = off + m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= eps * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for r in 0..k {
                    let mrp = m[[r, p]];
                    let mrq = m[[r, q]];
                    m[[r, p]] = c * mrp - s * mrq;
                    m[[r, q]] = s * mrp + c * mrq;
                }
                for r in 0..k {
                    let mpr = m[[p, r]];
                    let mqr = m[[q, r]];
                    m[[p, r]] = c * mpr - s * mqr;
                    m[[q, r]] = s * mpr + c * mqr;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..k).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eig
}
