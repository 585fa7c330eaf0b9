//! Feasibility of the Lipschitz block inequality
//!
//! ```text
//! ⎡ AQ + QAᵀ − τBBᵀ + γ²D₁TD₁ᵀ   Q ⎤
//! ⎣ Q                           −T ⎦ ≺ 0,   Q ≻ 0, τ > 0, T diagonal ≻ 0
//! ```
//!
//! solved by alternating projections between the linear image of the
//! decision variables and the cone of matrices bounded above by `−δI`.
//! When `D₁` is not square, `T` is restricted to a multiple of the identity
//! so that both of its occurrences are well defined.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{gamma_residual, solve_linear_gain, LipschitzGain, SolverOptions};
use crate::dynamics::NonlinearModel;
use crate::linalg::{max_sym_eig, min_sym_eig, symmetric_eigen};
use crate::{Error, Result};

/// Eigenvalue bound targeted by the projection step. The problem is
/// homogeneous, so this only fixes the scale of the returned certificate.
const TARGET_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzMargins {
    /// Largest eigenvalue of the assembled block matrix.
    pub block_max_eig: f64,
    pub q_min_eig: f64,
    pub tau: f64,
    pub t_diag: Vec<f64>,
    pub gamma_residual: f64,
}

impl LipschitzMargins {
    pub fn is_feasible(&self, opts: &SolverOptions) -> bool {
        self.block_max_eig <= -opts.tol_neg
            && self.q_min_eig >= opts.tol_pd
            && self.tau > 0.0
            && self.t_diag.iter().all(|&t| t > 0.0)
    }
}

/// Expands the stored diagonal of `T` to the `m×m` and `n×n` matrices used
/// in the two blocks. A single entry stands for a multiple of the identity.
fn t_blocks(t: &DVector<f64>, n: usize, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match t.len() {
        1 => Ok((DMatrix::identity(m, m) * t[0], DMatrix::identity(n, n) * t[0])),
        k if k == n && n == m => {
            let d = DMatrix::from_diagonal(t);
            Ok((d.clone(), d))
        }
        k => Err(Error::Dimension(format!("T has {k} diagonal entries; expected 1 or {n} (with D1 square)"))),
    }
}

/// Assembles the 2n×2n block matrix for given `(Q, τ, T)`.
pub fn lipschitz_block(model: &NonlinearModel, q: &DMatrix<f64>, tau: f64, t: &DVector<f64>) -> Result<DMatrix<f64>> {
    let lin = model.linear();
    let (a, b, d1) = (lin.a(), lin.b(), model.d1());
    let n = lin.state_dim();
    if q.shape() != (n, n) {
        return Err(Error::Dimension(format!("Q must be {n}x{n}")));
    }
    let (t_m, t_n) = t_blocks(t, n, d1.ncols())?;
    let g2 = model.gamma() * model.gamma();
    let top = a * q + q * a.transpose() - b * b.transpose() * tau + d1 * t_m * d1.transpose() * g2;
    let mut blk = DMatrix::zeros(2 * n, 2 * n);
    blk.view_mut((0, 0), (n, n)).copy_from(&top);
    blk.view_mut((0, n), (n, n)).copy_from(q);
    blk.view_mut((n, 0), (n, n)).copy_from(q);
    blk.view_mut((n, n), (n, n)).copy_from(&(-t_n));
    Ok(blk)
}

pub fn verify_lipschitz_gain(model: &NonlinearModel, gain: &LipschitzGain) -> Result<LipschitzMargins> {
    let blk = lipschitz_block(model, &gain.q, gain.tau, &gain.t)?;
    Ok(LipschitzMargins {
        block_max_eig: max_sym_eig(&blk)?,
        q_min_eig: min_sym_eig(&gain.q)?,
        tau: gain.tau,
        t_diag: gain.t.iter().copied().collect(),
        gamma_residual: gamma_residual(&gain.f, &gain.gamma)?,
    })
}

/// Linear parameterization of the stacked constraint matrices by the
/// decision vector `(Q upper triangle, τ, diag T)`.
struct Parameterization {
    n: usize,
    t_len: usize,
    /// Columns are the stacked images `[vec M(e_k); vec(−Q(e_k)); −τ(e_k)]`.
    basis: DMatrix<f64>,
}

impl Parameterization {
    fn new(model: &NonlinearModel) -> Result<Self> {
        let n = model.linear().state_dim();
        let m = model.d1().ncols();
        let t_len = if m == n { n } else { 1 };
        let n_sym = n * (n + 1) / 2;
        let n_vars = n_sym + 1 + t_len;
        let rows = 4 * n * n + n * n + 1;
        let mut basis = DMatrix::zeros(rows, n_vars);
        for k in 0..n_vars {
            let mut v = DVector::zeros(n_vars);
            v[k] = 1.0;
            let (q, tau, t) = Self::unpack_raw(&v, n, t_len);
            let image = Self::stack(model, &q, tau, &t)?;
            basis.set_column(k, &image);
        }
        Ok(Self { n, t_len, basis })
    }

    fn unpack_raw(v: &DVector<f64>, n: usize, t_len: usize) -> (DMatrix<f64>, f64, DVector<f64>) {
        let mut q = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                q[(i, j)] = v[k];
                q[(j, i)] = v[k];
                k += 1;
            }
        }
        let tau = v[k];
        let t = DVector::from_iterator(t_len, v.iter().skip(k + 1).copied());
        (q, tau, t)
    }

    fn unpack(&self, v: &DVector<f64>) -> (DMatrix<f64>, f64, DVector<f64>) {
        Self::unpack_raw(v, self.n, self.t_len)
    }

    fn pack(&self, q: &DMatrix<f64>, tau: f64, t: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.basis.ncols());
        for i in 0..n {
            for j in i..n {
                out.push(q[(i, j)]);
            }
        }
        out.push(tau);
        out.extend(t.iter());
        DVector::from_vec(out)
    }

    fn stack(model: &NonlinearModel, q: &DMatrix<f64>, tau: f64, t: &DVector<f64>) -> Result<DVector<f64>> {
        let blk = lipschitz_block(model, q, tau, t)?;
        let mut out: Vec<f64> = blk.iter().copied().collect();
        out.extend(q.iter().map(|x| -x));
        out.push(-tau);
        Ok(DVector::from_vec(out))
    }
}

/// Projects the symmetric matrix onto `{X : X ⪯ −δI}`.
fn project_below(x: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    let e = symmetric_eigen(x)?;
    let clipped = e.values.map(|l| l.min(-delta));
    Ok(&e.vectors * DMatrix::from_diagonal(&clipped) * e.vectors.transpose())
}

/// Finds `(Q, τ, T)` satisfying the Lipschitz block inequality and derives
/// `F = −BᵀQ⁻¹`, `Γ = FᵀF`.
pub fn solve_lipschitz_gain(model: &NonlinearModel, opts: &SolverOptions) -> Result<LipschitzGain> {
    opts.validate()?;
    let lin = model.linear();
    let n = lin.state_dim();

    let start = solve_linear_gain(lin, opts).map_err(|e| match e {
        Error::Synthesis(msg) => {
            Error::Synthesis(format!("Lipschitz inequality infeasible: {msg} (its upper-left block alone requires it)"))
        }
        other => other,
    })?;

    if let Some(gain) = riccati_candidate(model, &start.p, opts)? {
        return Ok(gain);
    }

    let param = Parameterization::new(model)?;
    let pinv = param
        .basis
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(format!("parameterization pseudo-inverse failed: {e}")))?;

    let mut v = param.pack(&start.p, 2.0, &DVector::from_element(param.t_len, 1.0));
    let mut best_margin = f64::INFINITY;

    for _ in 0..opts.max_iterations {
        let (q, tau, t) = param.unpack(&v);
        let blk = lipschitz_block(model, &q, tau, &t)?;
        let blk_eig = symmetric_eigen(&blk)?;
        let q_eig = symmetric_eigen(&q)?;
        let blk_max = blk_eig.values[2 * n - 1];
        let q_min = q_eig.values[0];
        let margin = blk_max.max(-q_min).max(-tau);
        best_margin = best_margin.min(margin);

        if blk_max <= -opts.tol_neg && q_min >= opts.tol_pd && tau > 0.0 && t.iter().all(|&x| x > 0.0) {
            return finish(model, q, tau, t, opts);
        }

        let blk_proj = project_below(&blk, TARGET_MARGIN)?;
        let q_proj = project_below(&(-&q), TARGET_MARGIN)?;
        let mut target: Vec<f64> = blk_proj.iter().copied().collect();
        target.extend(q_proj.iter());
        target.push((-tau).min(-TARGET_MARGIN));
        v = &pinv * DVector::from_vec(target);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("alternating projections produced non-finite iterate".into()));
        }
    }

    Err(Error::Synthesis(format!(
        "Lipschitz inequality not solved within {} iterations (best margin {best_margin:e}); \
         feasibility is guaranteed when the distance to unobservability of (A, B) exceeds γ = {}",
        opts.max_iterations,
        model.gamma()
    )))
}

/// Tries `Q = sP`, `τ = sσ`, `T = sθI` built from the Riccati certificate.
/// With `AP + PAᵀ − 2BBᵀ = −P² − BBᵀ` and `σ = 2` the Schur complement is
/// `s(−(1 − 1/θ)P² − BBᵀ + γ²θD₁D₁ᵀ)`; larger `σ` adds more of `−BBᵀ`.
/// `s` only rescales the margin.
fn riccati_candidate(model: &NonlinearModel, p: &DMatrix<f64>, opts: &SolverOptions) -> Result<Option<LipschitzGain>> {
    let n = model.linear().state_dim();
    let t_len = if model.d1().ncols() == n { n } else { 1 };
    let mut best: Option<(f64, f64, f64)> = None;
    for j in 0..=12 {
        let sigma = 2.0 * 10f64.powf(j as f64 / 2.0);
        for k in 1..=64 {
            let theta = 10f64.powf(k as f64 / 8.0);
            let blk = lipschitz_block(model, p, sigma, &DVector::from_element(t_len, theta))?;
            // Compare candidates by margin relative to their own scale.
            let top = max_sym_eig(&blk)? / (1.0 + blk.amax());
            if best.is_none_or(|(_, _, m)| top < m) {
                best = Some((sigma, theta, top));
            }
        }
    }
    let Some((sigma, theta, _)) = best.filter(|&(_, _, m)| m < 0.0) else {
        return Ok(None);
    };
    let top = max_sym_eig(&lipschitz_block(model, p, sigma, &DVector::from_element(t_len, theta))?)?;
    let q_min = min_sym_eig(p)?;
    let s = (TARGET_MARGIN / -top).max(10.0 * opts.tol_pd / q_min).max(1.0);
    let gain = finish(model, p * s, sigma * s, DVector::from_element(t_len, theta * s), opts);
    Ok(gain.ok())
}

fn finish(
    model: &NonlinearModel,
    q: DMatrix<f64>,
    tau: f64,
    t: DVector<f64>,
    opts: &SolverOptions,
) -> Result<LipschitzGain> {
    let b = model.linear().b();
    let q_inv = q.clone().try_inverse().ok_or_else(|| Error::Numerical("certificate Q is singular".into()))?;
    let f = -(b.transpose() * q_inv);
    let gamma = f.transpose() * &f;
    let gain = LipschitzGain { q, tau, t, f, gamma };
    let margins = verify_lipschitz_gain(model, &gain)?;
    if !margins.is_feasible(opts) {
        return Err(Error::Numerical(format!("certificate failed re-verification: {margins:?}")));
    }
    Ok(gain)
}
