//! Small dense symmetric solvers for the Newton systems (d x d, d small).

use ndarray::{Array1, Array2};

use crate::scalar::Scalar;

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
/// Returns `None` when a pivot is not safely positive.
pub(crate) fn cholesky_solve<F: Scalar>(a: &Array2<F>, b: &Array1<F>) -> Option<Array1<F>> {
    let n = a.nrows();
    let mut l = Array2::<F>::zeros((n, n));
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(F::zero(), F::max);
    let tiny = scale * F::epsilon() * F::from_usize_lossy(n.max(1)) * F::lit(16.0);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > tiny) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    let mut y = Array1::<F>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<F>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues and eigenvectors (as columns).
pub(crate) fn symmetric_eigen<F: Scalar>(a: &Array2<F>) -> (Array1<F>, Array2<F>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Array2::<F>::eye(n);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + m[[i, j]] * m[[i, j]];
            }
        }
        let total: F = m.iter().map(|&x| x * x).sum();
        if off <= total * F::epsilon() * F::epsilon() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (Array1::from_iter((0..n).map(|i| m[[i, i]])), v)
}

/// Minimum-norm least-squares solution of `a x = b` for symmetric
/// positive semidefinite `a`, via the eigen pseudo-inverse.
pub(crate) fn pseudo_inverse_solve<F: Scalar>(a: &Array2<F>, b: &Array1<F>) -> Array1<F> {
    let n = a.nrows();
    let (vals, vecs) = symmetric_eigen(a);
    let largest = vals.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()));
    let cutoff = largest * F::epsilon() * F::from_usize_lossy(n.max(1)) * F::lit(100.0);
    let mut x = Array1::<F>::zeros(n);
    for k in 0..n {
        if vals[k].abs() <= cutoff {
            continue;
        }
        let col = vecs.column(k);
        let coef = col.dot(b) / vals[k];
        x.scaled_add(coef, &col);
    }
    x
}
