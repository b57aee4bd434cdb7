use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending. Column `i` of
/// `eigenvectors` pairs with `eigenvalues[i]`; the first non-negligible
/// component of every column is nonnegative.
#[derive(Clone, Debug)]
pub struct EigenDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Matrix<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let scaled = Matrix::from_fn(n, n, |r, c| v[(r, c)] * self.eigenvalues[c]);
        scaled.matmul_t(v).expect("square factors")
    }

    pub fn eigenvector(&self, i: usize) -> Vec<T> {
        (0..self.eigenvectors.rows()).map(|r| self.eigenvectors[(r, i)]).collect()
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-12` (or the
/// working precision of `T` scaled by the input norm, whichever is larger),
/// giving up after 100 sweeps.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<EigenDecomposition<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::contract(format!("symmetric_eigen needs a square matrix, got {:?}", a.shape())));
    }
    let scale = a.max_abs().max(T::one());
    if !a.is_symmetric(T::lit(SYMMETRY_TOL) * scale) {
        return Err(Error::contract("symmetric_eigen input is not symmetric"));
    }

    let mut m = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let tol = T::lit(OFF_DIAGONAL_TOL).max(T::epsilon() * T::lit(10.0) * a.frobenius_norm());

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) < tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let residual = off_diagonal_norm(&m);
        if residual >= tol {
            return Err(Error::Convergence {
                sweeps: MAX_SWEEPS,
                residual: residual.to_f64_lossy(),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let zero_tol = T::epsilon().sqrt();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let flip = (0..n)
            .map(|r| v[(r, src)])
            .find(|x| x.abs() > zero_tol)
            .is_some_and(|x| x < T::zero());
        for r in 0..n {
            let x = v[(r, src)];
            eigenvectors[(r, dst)] = if flip { -x } else { x };
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm<T: Scalar>(m: &Matrix<T>) -> T {
    let n = m.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation annihilating `m[p][q]`, accumulating it into `v`.
fn rotate<T: Scalar>(m: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == T::zero() {
        return;
    }
    let n = m.rows();
    let two = T::lit(2.0);
    let tau = (m[(q, q)] - m[(p, p)]) / (two * apq);
    let t = if tau >= T::zero() {
        T::one() / (tau + (T::one() + tau * tau).sqrt())
    } else {
        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;

    for k in 0..n {
        let (kp, kq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * kp - s * kq;
        m[(k, q)] = s * kp + c * kq;
    }
    for k in 0..n {
        let (pk, qk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * pk - s * qk;
        m[(q, k)] = s * pk + c * qk;
    }
    m[(p, q)] = T::zero();
    m[(q, p)] = T::zero();
    for k in 0..n {
        let (kp, kq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * kp - s * kq;
        v[(k, q)] = s * kp + c * kq;
    }
}
