//! Small dense linear-algebra helpers shared by the graph, synthesis and
//! simulation modules.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Only the symmetric part `(M + Mᵀ)/2` of the input is decomposed.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let mut a = sym_part(m);
    let mut v = DMatrix::<f64>::identity(n, n);

    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 || n < 2 {
        return Ok(sorted(a.diagonal(), v));
    }
    if !scale.is_finite() {
        return Err(Error::Numerical("non-finite matrix passed to eigensolver".into()));
    }
    let tol = f64::EPSILON * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= tol {
            return Ok(sorted(a.diagonal(), v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let off = off_diagonal_norm(&a);
    if off <= 1e3 * tol {
        Ok(sorted(a.diagonal(), v))
    } else {
        Err(Error::Numerical(format!("Jacobi eigensolver did not converge (off-diagonal norm {off:e})")))
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> SymmetricEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let vectors = DMatrix::from_fn(vectors.nrows(), n, |r, c| vectors[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

pub fn sym_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eig(m: &DMatrix<f64>) -> Result<f64> {
    let e = symmetric_eigen(m)?;
    Ok(e.values[e.values.len() - 1])
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eig(m: &DMatrix<f64>) -> Result<f64> {
    let e = symmetric_eigen(m)?;
    Ok(e.values[0])
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Solves the Lyapunov equation `AᵀX + XA + Q = 0` by Kronecker
/// vectorization. Intended for the small state dimensions met here.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AᵀX) = (I ⊗ Aᵀ) vec X, vec(XA) = (Aᵀ ⊗ I) vec X for column-major vec.
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|x| -x));
    let sol = op.lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(sym_part(&x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = symmetric_eigen(&m).unwrap();
        let s2 = 2f64.sqrt();
        let expected = [2.0 - s2, 2.0, 2.0 + s2];
        for (got, want) in e.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-13);
        }
        let recon = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!(max_abs(&(recon - m)) < 1e-13);
    }

    #[test]
    fn jacobi_agrees_with_nalgebra() {
        let m = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + (i == j) as u8 as f64);
        let m = sym_part(&m);
        let ours = symmetric_eigen(&m).unwrap().values;
        let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(theirs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one_and_zero() {
        let e = symmetric_eigen(&DMatrix::from_element(1, 1, -3.0)).unwrap();
        assert_eq!(e.values[0], -3.0);
        let z = symmetric_eigen(&DMatrix::zeros(3, 3)).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(symmetric_eigen(&DMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let q = DMatrix::identity(2, 2);
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &x + &x * &a + q;
        assert!(max_abs(&res) < 1e-12);
    }
}
