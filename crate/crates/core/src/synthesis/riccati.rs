//! Constructive solution of `AP + PAᵀ − 2BBᵀ ≺ 0` through the CARE
//! `AᵀW + WA − WBBᵀW + I = 0`, with `P = W⁻¹`.

use nalgebra::{Complex, DMatrix};

use super::{verify_consensus_gain, ConsensusGain, SolverOptions};
use crate::dynamics::LinearModel;
use crate::linalg::{max_abs, solve_lyapunov, sym_part};
use crate::{Error, Result};

const SIGN_MAX_ITERATIONS: usize = 100;
const NEWTON_MAX_ITERATIONS: usize = 50;

/// PBH test: every eigenvalue of `A` with nonnegative real part must leave
/// `[A − λI, B]` with full row rank.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(), String> {
    let n = a.nrows();
    let norm_a = a.clone().svd(false, false).singular_values.max();
    let rank_tol = 1e-9 * norm_a.max(1.0);
    let marginal = 1e-6 * norm_a.max(1.0);
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < -marginal {
            continue;
        }
        let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            pencil[(i, i)] -= lambda;
            for j in 0..b.ncols() {
                pencil[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let rank = pencil.svd(false, false).singular_values.iter().filter(|s| **s > rank_tol).count();
        if rank < n {
            return Err(format!(
                "(A, B) is not stabilizable (PBH test): rank [A - λI, B] = {rank} < {n} at λ = {:.6}{:+.6}i; \
                 a positive definite P with AP + PAᵀ - 2BBᵀ < 0 exists iff (A, B) is stabilizable",
                lambda.re, lambda.im
            ));
        }
    }
    Ok(())
}

/// `AᵀW + WA − WGW + I` with `G = BBᵀ`.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let g = b * b.transpose();
    let n = a.nrows();
    a.transpose() * w + w * a - w * g * w + DMatrix::<f64>::identity(n, n)
}

/// Stabilizing solution of `AᵀW + WA − WBBᵀW + I = 0`.
///
/// The stable invariant subspace of the Hamiltonian is extracted with the
/// scaled matrix sign iteration, then refined by Newton–Kleinman steps.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: &SolverOptions) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let g = b * b.transpose();
    let eye = DMatrix::<f64>::identity(n, n);

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&eye));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let z = matrix_sign(h)?;
    let z11 = z.view((0, 0), (n, n));
    let z12 = z.view((0, n), (n, n));
    let z21 = z.view((n, 0), (n, n));
    let z22 = z.view((n, n), (n, n));

    // Stable subspace = ker(Z + I): [Z12; Z22 + I] W = −[Z11 + I; Z21].
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z22 + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z21));
    let w = lhs
        .svd(true, true)
        .solve(&rhs, f64::EPSILON)
        .map_err(|e| Error::Numerical(format!("Riccati subspace solve failed: {e}")))?;
    let mut w = sym_part(&w);

    let mut residual = max_abs(&care_residual(a, b, &w));
    for _ in 0..NEWTON_MAX_ITERATIONS {
        if residual <= opts.care_tolerance {
            break;
        }
        let closed = a - &g * &w;
        let rhs = &eye + &w * &g * &w;
        let next = match solve_lyapunov(&closed, &rhs) {
            Ok(x) => x,
            Err(_) => break,
        };
        let next_residual = max_abs(&care_residual(a, b, &next));
        if !next_residual.is_finite() || next_residual >= residual {
            break;
        }
        w = next;
        residual = next_residual;
    }

    // The absolute bound is relaxed in proportion to the size of the terms
    // being cancelled.
    let scale = 1.0 + max_abs(&(a.transpose() * &w)) + max_abs(&(&w * &g * &w));
    if !(residual <= opts.care_tolerance * scale) {
        return Err(Error::Numerical(format!(
            "Riccati solve did not reach tolerance {:e}: residual {residual:e}",
            opts.care_tolerance
        )));
    }
    Ok(w)
}

fn matrix_sign(mut z: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = z.nrows() as f64;
    for _ in 0..SIGN_MAX_ITERATIONS {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .filter(|_| det != 0.0 && det.is_finite())
            .ok_or_else(|| Error::Numerical("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let c = det.abs().powf(-1.0 / dim);
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).abs().sum();
        let size = next.abs().sum();
        z = next;
        if !size.is_finite() {
            break;
        }
        if change <= 1e-13 * size {
            return Ok(z);
        }
    }
    Err(Error::Numerical("matrix sign iteration did not converge".into()))
}

/// Gains `F = −BᵀP⁻¹`, `Γ = FᵀF` from the Riccati route, verified against
/// the strict inequality before returning.
pub fn solve_linear_gain(model: &LinearModel, opts: &SolverOptions) -> Result<ConsensusGain> {
    opts.validate()?;
    let (a, b) = (model.a(), model.b());
    is_stabilizable(a, b).map_err(Error::Synthesis)?;

    let w = solve_care(a, b, opts)?;
    let p = w
        .clone()
        .try_inverse()
        .map(|p| sym_part(&p))
        .ok_or_else(|| Error::Numerical("Riccati solution is singular".into()))?;
    let f = -(b.transpose() * &w);
    let gamma = f.transpose() * &f;
    let gain = ConsensusGain { p, f, gamma };

    let margins = verify_consensus_gain(model, &gain)?;
    if !margins.is_feasible(opts) {
        return Err(Error::Numerical(format!(
            "Riccati-based P failed verification: max eig {:e}, min eig of P {:e}",
            margins.lmi_max_eig, margins.p_min_eig
        )));
    }
    Ok(gain)
}
