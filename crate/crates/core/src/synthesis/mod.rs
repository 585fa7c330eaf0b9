//! Feedback gain synthesis.
//!
//! Both routes produce a pair `(F, Γ)` used by the adaptive protocol:
//! `F = −BᵀP⁻¹` and `Γ = P⁻¹BBᵀP⁻¹ = FᵀF`, where `P` solves
//! `AP + PAᵀ − 2BBᵀ ≺ 0` (linear agents) or is the `Q` block of the
//! Lipschitz feasibility problem (nonlinear agents).

mod lmi;
mod riccati;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use lmi::{lipschitz_block, solve_lipschitz_gain, verify_lipschitz_gain, LipschitzMargins};
pub use riccati::{care_residual, is_stabilizable, solve_care, solve_linear_gain};

use crate::graph::SpectralInfo;
use crate::linalg::{max_abs, max_sym_eig, min_sym_eig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Required lower bound on the smallest eigenvalue of `P` (or `Q`).
    pub tol_pd: f64,
    /// Required margin below zero for the strict matrix inequalities.
    pub tol_neg: f64,
    pub max_iterations: usize,
    /// Riccati residual bound, max-abs entry norm.
    pub care_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_pd: 1e-8, tol_neg: 1e-8, max_iterations: 10_000, care_tolerance: 1e-10 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.tol_pd, self.tol_neg, self.care_tolerance].iter().all(|t| *t > 0.0 && t.is_finite());
        if !ok || self.max_iterations == 0 {
            return Err(Error::Argument(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

/// Gains for linear agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusGain {
    pub p: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

/// Gains for Lipschitz agents together with the certificate `(Q, τ, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzGain {
    pub q: DMatrix<f64>,
    pub tau: f64,
    /// Diagonal of `T`.
    pub t: DVector<f64>,
    pub f: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

/// What the simulator needs from a synthesized gain.
pub trait FeedbackGains {
    /// `F`, p×n.
    fn feedback(&self) -> &DMatrix<f64>;
    /// `Γ`, n×n.
    fn adaptation(&self) -> &DMatrix<f64>;
    /// The positive definite matrix whose inverse weights the disagreement
    /// in the Lyapunov diagnostic.
    fn certificate(&self) -> &DMatrix<f64>;
}

impl FeedbackGains for ConsensusGain {
    fn feedback(&self) -> &DMatrix<f64> {
        &self.f
    }
    fn adaptation(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    fn certificate(&self) -> &DMatrix<f64> {
        &self.p
    }
}

impl FeedbackGains for LipschitzGain {
    fn feedback(&self) -> &DMatrix<f64> {
        &self.f
    }
    fn adaptation(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    fn certificate(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Either kind of synthesized gain.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Consensus(ConsensusGain),
    Lipschitz(LipschitzGain),
}

impl FeedbackGains for Gain {
    fn feedback(&self) -> &DMatrix<f64> {
        match self {
            Gain::Consensus(g) => g.feedback(),
            Gain::Lipschitz(g) => g.feedback(),
        }
    }
    fn adaptation(&self) -> &DMatrix<f64> {
        match self {
            Gain::Consensus(g) => g.adaptation(),
            Gain::Lipschitz(g) => g.adaptation(),
        }
    }
    fn certificate(&self) -> &DMatrix<f64> {
        match self {
            Gain::Consensus(g) => g.certificate(),
            Gain::Lipschitz(g) => g.certificate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMargins {
    /// Largest eigenvalue of `AP + PAᵀ − 2BBᵀ`.
    pub lmi_max_eig: f64,
    /// Smallest eigenvalue of `P`.
    pub p_min_eig: f64,
    /// `‖Γ − FᵀF‖_max`.
    pub gamma_residual: f64,
}

impl ConsensusMargins {
    pub fn is_feasible(&self, opts: &SolverOptions) -> bool {
        self.lmi_max_eig <= -opts.tol_neg && self.p_min_eig >= opts.tol_pd
    }
}

/// `‖Γ − FᵀF‖_max`.
pub fn gamma_residual(f: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<f64> {
    if gamma.nrows() != f.ncols() || gamma.ncols() != f.ncols() {
        return Err(Error::Dimension(format!("Γ must be {0}x{0} to match F ({1}x{0})", f.ncols(), f.nrows())));
    }
    Ok(max_abs(&(gamma - f.transpose() * f)))
}

pub fn linear_lmi(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    a * p + p * a.transpose() - b * b.transpose() * 2.0
}

/// Diagnostics of a linear-agent gain against `AP + PAᵀ − 2BBᵀ ≺ 0`.
pub fn verify_consensus_gain(model: &crate::dynamics::LinearModel, gain: &ConsensusGain) -> Result<ConsensusMargins> {
    let n = model.state_dim();
    if gain.p.shape() != (n, n) || gain.f.shape() != (model.input_dim(), n) {
        return Err(Error::Dimension("gain does not match model dimensions".into()));
    }
    Ok(ConsensusMargins {
        lmi_max_eig: max_sym_eig(&linear_lmi(model.a(), model.b(), &gain.p))?,
        p_min_eig: min_sym_eig(&gain.p)?,
        gamma_residual: gamma_residual(&gain.f, &gain.gamma)?,
    })
}

/// Smallest admissible coupling `1/λ₂` for the static protocol.
pub fn static_coupling_bound(spectrum: &SpectralInfo) -> Result<f64> {
    if !spectrum.spectrally_connected() || spectrum.eigenvalues.len() < 2 {
        return Err(Error::Topology(format!(
            "static coupling bound needs a connected graph with at least two agents (λ₂ = {:e})",
            spectrum.fiedler
        )));
    }
    Ok(1.0 / spectrum.fiedler)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearModel;
    use crate::graph::Topology;

    #[test]
    fn scalar_margins() {
        let m = LinearModel::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        let one = DMatrix::identity(1, 1);
        let g = ConsensusGain { p: one.clone(), f: -one.clone(), gamma: one };
        let r = verify_consensus_gain(&m, &g).unwrap();
        assert_eq!(r.lmi_max_eig, -2.0);
        assert_eq!(r.p_min_eig, 1.0);
        assert_eq!(r.gamma_residual, 0.0);

        let mut bad = g.clone();
        bad.gamma[(0, 0)] += 1.0;
        let r = verify_consensus_gain(&m, &bad).unwrap();
        assert!((r.gamma_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_bounds() {
        let k8 = Topology::complete(8).unwrap().spectral_info().unwrap();
        assert!((static_coupling_bound(&k8).unwrap() - 0.125).abs() < 1e-12);

        let ring = Topology::ring(8).unwrap().spectral_info().unwrap();
        let oracle = 1.0 / (2.0 * (1.0 - (std::f64::consts::PI / 4.0).cos()));
        assert!((static_coupling_bound(&ring).unwrap() - oracle).abs() < 1e-9);
        assert!((oracle - 1.70711).abs() < 1e-5);

        let split = Topology::new(4, &[(0, 1), (2, 3)]).unwrap().spectral_info().unwrap();
        assert!(static_coupling_bound(&split).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        let bad = SolverOptions { tol_neg: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
