//! Distributed control laws and coupling-weight adaptation.
//!
//! States are passed as an N×n matrix, one agent per row. Controls come
//! back as N×p, one agent per row.

use nalgebra::{DMatrix, DVector};

use crate::graph::Topology;
use crate::{Error, Result};

/// Edge coupling weights `c_ij` and adaptation gains `κ_ij`, stored densely.
/// Entries off the edge set are carried but never read.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingState {
    pub c: DMatrix<f64>,
    pub kappa: DMatrix<f64>,
}

impl CouplingState {
    pub fn new(c: DMatrix<f64>, kappa: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() || c.shape() != kappa.shape() {
            return Err(Error::Dimension("coupling and gain matrices must be N×N".into()));
        }
        if c != c.transpose() || kappa != kappa.transpose() {
            return Err(Error::Argument("coupling weights and gains must be symmetric".into()));
        }
        Ok(Self { c, kappa })
    }

    /// Weights from one value per edge (in [`Topology::edges`] order) and a
    /// uniform adaptation gain.
    pub fn from_edges(topology: &Topology, weights: &[f64], kappa: f64) -> Result<Self> {
        let n = topology.n_agents();
        if weights.len() != topology.edges().len() {
            return Err(Error::Dimension(format!(
                "{} edge weights for {} edges",
                weights.len(),
                topology.edges().len()
            )));
        }
        if !(kappa > 0.0) {
            return Err(Error::Argument(format!("adaptation gain must be positive, got {kappa}")));
        }
        let mut c = DMatrix::zeros(n, n);
        let mut k = DMatrix::zeros(n, n);
        for (&(i, j), &w) in topology.edges().iter().zip(weights) {
            c[(i, j)] = w;
            c[(j, i)] = w;
            k[(i, j)] = kappa;
            k[(j, i)] = kappa;
        }
        Ok(Self { c, kappa: k })
    }

    /// Weights on the edge set, in [`Topology::edges`] order.
    pub fn edge_weights(&self, topology: &Topology) -> Vec<f64> {
        topology.edges().iter().map(|&(i, j)| self.c[(i, j)]).collect()
    }
}

/// Leader-related quantities for the pinned protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderCoupling {
    /// Pin gains; `d_i > 0` iff follower `i` sees the leader.
    pub d: DVector<f64>,
    pub c_leader: DVector<f64>,
    pub kappa_leader: DVector<f64>,
    pub leader_state: DVector<f64>,
}

impl LeaderCoupling {
    pub fn validate(&self, n_agents: usize, state_dim: usize) -> Result<()> {
        if self.d.len() != n_agents || self.c_leader.len() != n_agents || self.kappa_leader.len() != n_agents {
            return Err(Error::Dimension(format!("leader vectors must have {n_agents} entries")));
        }
        if self.leader_state.len() != state_dim {
            return Err(Error::Dimension(format!("leader state must be in R^{state_dim}")));
        }
        if self.d.iter().any(|&d| d < 0.0) || self.kappa_leader.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Argument("pin gains must be >= 0 and leader gains > 0".into()));
        }
        Ok(())
    }

    pub fn is_pinned(&self) -> bool {
        self.d.iter().any(|&d| d > 0.0)
    }
}

fn check_states(topology: &Topology, states: &DMatrix<f64>, n: usize) -> Result<()> {
    if states.nrows() != topology.n_agents() || states.ncols() != n {
        return Err(Error::Dimension(format!(
            "states must be {}x{n}, got {}x{}",
            topology.n_agents(),
            states.nrows(),
            states.ncols()
        )));
    }
    Ok(())
}

fn check_couplings(topology: &Topology, cs: &CouplingState) -> Result<()> {
    let n = topology.n_agents();
    if cs.c.shape() != (n, n) || cs.kappa.shape() != (n, n) {
        return Err(Error::Dimension(format!("coupling state must be {n}x{n}")));
    }
    Ok(())
}

/// Row i holds `Σ_j w_ij a_ij (x_i − x_j)`.
fn weighted_disagreement(
    topology: &Topology,
    states: &DMatrix<f64>,
    weight: impl Fn(usize, usize) -> f64,
) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(states.nrows(), states.ncols());
    for &(i, j) in topology.edges() {
        let w = weight(i, j);
        for k in 0..states.ncols() {
            let diff = states[(i, k)] - states[(j, k)];
            s[(i, k)] += w * diff;
            s[(j, k)] -= w * diff;
        }
    }
    s
}

/// Applies a p×n gain to every row: returns `S·Kᵀ`.
fn apply_gain(gain: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if gain.ncols() != s.ncols() {
        return Err(Error::Dimension(format!(
            "gain has {} columns but states have dimension {}",
            gain.ncols(),
            s.ncols()
        )));
    }
    Ok(s * gain.transpose())
}

/// Static protocol `u_i = c·K·Σ_j a_ij (x_i − x_j)`.
pub fn static_control(k: &DMatrix<f64>, c: f64, topology: &Topology, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_states(topology, states, k.ncols())?;
    if !(c > 0.0) {
        return Err(Error::Argument(format!("static coupling must be positive, got {c}")));
    }
    let s = weighted_disagreement(topology, states, |_, _| c);
    apply_gain(k, &s)
}

/// Adaptive protocol `u_i = F·Σ_j c_ij a_ij (x_i − x_j)`.
pub fn adaptive_control(
    f: &DMatrix<f64>,
    cs: &CouplingState,
    topology: &Topology,
    states: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_states(topology, states, f.ncols())?;
    check_couplings(topology, cs)?;
    let s = weighted_disagreement(topology, states, |i, j| cs.c[(i, j)]);
    apply_gain(f, &s)
}

fn quadratic(gamma: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for r in 0..n {
        let mut row = 0.0;
        for c in 0..n {
            row += gamma[(r, c)] * v[c];
        }
        acc += v[r] * row;
    }
    // Γ ⪰ 0, so anything below zero is rounding.
    acc.max(0.0)
}

fn check_gamma(gamma: &DMatrix<f64>, n: usize) -> Result<()> {
    if gamma.shape() != (n, n) {
        return Err(Error::Dimension(format!("Γ must be {n}x{n}")));
    }
    Ok(())
}

/// `ċ_ij = κ_ij a_ij (x_i − x_j)ᵀ Γ (x_i − x_j)`; zero off the edge set.
pub fn adaptive_weight_rates(
    gamma: &DMatrix<f64>,
    cs: &CouplingState,
    topology: &Topology,
    states: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = states.ncols();
    check_states(topology, states, n)?;
    check_couplings(topology, cs)?;
    check_gamma(gamma, n)?;
    let n_agents = topology.n_agents();
    let mut rates = DMatrix::zeros(n_agents, n_agents);
    let mut diff = vec![0.0; n];
    for &(i, j) in topology.edges() {
        for (k, d) in diff.iter_mut().enumerate() {
            *d = states[(i, k)] - states[(j, k)];
        }
        let r = cs.kappa[(i, j)] * quadratic(gamma, &diff);
        rates[(i, j)] = r;
        rates[(j, i)] = r;
    }
    Ok(rates)
}

/// Pinned protocol `u_i = F·(Σ_j c_ij a_ij (x_i − x_j) + c_i d_i (x_i − x_0))`.
pub fn leader_control(
    f: &DMatrix<f64>,
    cs: &CouplingState,
    lc: &LeaderCoupling,
    topology: &Topology,
    states: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_states(topology, states, f.ncols())?;
    check_couplings(topology, cs)?;
    lc.validate(topology.n_agents(), states.ncols())?;
    let mut s = weighted_disagreement(topology, states, |i, j| cs.c[(i, j)]);
    for i in 0..topology.n_agents() {
        let w = lc.c_leader[i] * lc.d[i];
        if w == 0.0 {
            continue;
        }
        for k in 0..states.ncols() {
            s[(i, k)] += w * (states[(i, k)] - lc.leader_state[k]);
        }
    }
    apply_gain(f, &s)
}

/// Edge rates as in [`adaptive_weight_rates`] plus leader-weight rates
/// `ċ_i = κ_i d_i (x_i − x_0)ᵀ Γ (x_i − x_0)`.
pub fn leader_weight_rates(
    gamma: &DMatrix<f64>,
    cs: &CouplingState,
    lc: &LeaderCoupling,
    topology: &Topology,
    states: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let edge_rates = adaptive_weight_rates(gamma, cs, topology, states)?;
    let n = states.ncols();
    lc.validate(topology.n_agents(), n)?;
    let mut diff = vec![0.0; n];
    let leader_rates = DVector::from_fn(topology.n_agents(), |i, _| {
        if lc.d[i] == 0.0 {
            return 0.0;
        }
        for (k, d) in diff.iter_mut().enumerate() {
            *d = states[(i, k)] - lc.leader_state[k];
        }
        lc.kappa_leader[i] * lc.d[i] * quadratic(gamma, &diff)
    });
    Ok((edge_rates, leader_rates))
}
