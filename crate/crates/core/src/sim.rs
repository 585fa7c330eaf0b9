//! Closed-loop simulation of the consensus protocols.
//!
//! Agent states and coupling weights are stacked into one vector and
//! advanced with the classical fixed-step fourth-order Runge–Kutta scheme.
//! Every undirected edge owns exactly one coupling variable, read by both
//! endpoints, so `c_ij = c_ji` holds exactly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentModel, LinearModel};
use crate::graph::Topology;
use crate::protocol::{
    adaptive_control, adaptive_weight_rates, leader_control, leader_weight_rates, static_control, CouplingState,
    LeaderCoupling,
};
use crate::synthesis::FeedbackGains;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Initial states are uniform in `[−scale, scale]ⁿ`.
    pub init_state_scale: f64,
    pub init_coupling_low: f64,
    pub init_coupling_high: f64,
    /// Keep one sample every `record_stride` steps.
    pub record_stride: usize,
    /// Uniform adaptation gain `κ` on every edge (and leader link).
    pub kappa: f64,
    /// Overrides the random initial agent states (N×n).
    pub initial_states: Option<DMatrix<f64>>,
    /// Overrides the random initial edge weights.
    pub initial_couplings: Option<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 20.0,
            seed: 0,
            init_state_scale: 1.0,
            init_coupling_low: 0.0,
            init_coupling_high: 1.0,
            record_stride: 10,
            kappa: 1.0,
            initial_states: None,
            initial_couplings: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_final >= self.dt) {
            return Err(Error::Config(format!(
                "need dt > 0 and t_final >= dt (dt = {}, t_final = {})",
                self.dt, self.t_final
            )));
        }
        if !(self.init_coupling_low <= self.init_coupling_high) {
            return Err(Error::Config("initial coupling range is empty".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        if !(self.kappa > 0.0) || !(self.init_state_scale >= 0.0) {
            return Err(Error::Config("kappa must be positive and init_state_scale nonnegative".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}

/// Recorded closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One N×n matrix per sample, agents as rows.
    pub states: Vec<DMatrix<f64>>,
    pub edges: Vec<(usize, usize)>,
    /// Edge weights per sample, in `edges` order. Empty rows for static runs.
    pub couplings: Vec<Vec<f64>>,
    /// Leader weights `c_i` per sample; empty unless a leader is present.
    pub leader_couplings: Vec<Vec<f64>>,
    pub leader_states: Vec<DVector<f64>>,
    /// `max_i ‖x_i − x̄‖` per sample.
    pub consensus_error: Vec<f64>,
    /// `‖x_i − x_0‖` per follower and sample; empty unless a leader is present.
    pub tracking_errors: Vec<Vec<f64>>,
    /// Lyapunov diagnostic per sample; empty when not computed.
    pub lyapunov: Vec<f64>,
}

impl Trajectory {
    pub fn has_leader(&self) -> bool {
        !self.leader_states.is_empty()
    }

    /// The error the verdict is judged on: worst tracking error when a
    /// leader is present, otherwise the consensus error.
    pub fn error_trace(&self) -> Vec<f64> {
        if self.has_leader() {
            self.tracking_errors.iter().map(|e| e.iter().copied().fold(0.0, f64::max)).collect()
        } else {
            self.consensus_error.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusVerdict {
    pub achieved: bool,
    pub final_error: f64,
    pub error_threshold: f64,
    /// Largest change of any coupling weight over the final 10% of samples.
    pub weight_drift: f64,
}

/// `max_i ‖x_i − x̄‖₂`.
pub fn consensus_error(states: &DMatrix<f64>) -> f64 {
    let mean = states.row_mean();
    states.row_iter().map(|r| (r - &mean).norm()).fold(0.0, f64::max)
}

/// `Σ_i e_iᵀP⁻¹e_i + Σ_i Σ_{j≠i} (c_ij − α)²/(2κ_ij)` with `e_i = x_i − x̄`,
/// the pair sum taken over the edge set.
pub fn lyapunov_v1(
    states: &DMatrix<f64>,
    cs: &CouplingState,
    topology: &Topology,
    p: &DMatrix<f64>,
    alpha: f64,
) -> Result<f64> {
    let p_inv = p.clone().try_inverse().ok_or_else(|| Error::Numerical("Lyapunov weight P is singular".into()))?;
    v1_with_inverse(states, cs, topology, &p_inv, alpha)
}

fn v1_with_inverse(
    states: &DMatrix<f64>,
    cs: &CouplingState,
    topology: &Topology,
    p_inv: &DMatrix<f64>,
    alpha: f64,
) -> Result<f64> {
    if p_inv.shape() != (states.ncols(), states.ncols()) {
        return Err(Error::Dimension("P does not match the state dimension".into()));
    }
    let mean = states.row_mean();
    let mut v = 0.0;
    for row in states.row_iter() {
        let e = (row - &mean).transpose();
        v += (e.transpose() * p_inv * &e)[(0, 0)];
    }
    for &(i, j) in topology.edges() {
        let d = cs.c[(i, j)] - alpha;
        // Both orientations (i, j) and (j, i) contribute d²/(2κ).
        v += d * d / cs.kappa[(i, j)];
    }
    Ok(v)
}

pub fn verdict(traj: &Trajectory, error_threshold: f64) -> Result<ConsensusVerdict> {
    let errors = traj.error_trace();
    let final_error = *errors.last().ok_or_else(|| Error::Argument("empty trajectory".into()))?;
    let len = traj.times.len();
    let start = ((len - 1) as f64 * 0.9).floor() as usize;
    let mut weight_drift = 0.0f64;
    for series in [&traj.couplings, &traj.leader_couplings] {
        if let (Some(first), Some(last)) = (series.get(start), series.last()) {
            for (a, b) in first.iter().zip(last) {
                weight_drift = weight_drift.max((b - a).abs());
            }
        }
    }
    Ok(ConsensusVerdict { achieved: final_error <= error_threshold, final_error, error_threshold, weight_drift })
}

enum Law<'a> {
    Static { k: &'a DMatrix<f64>, c: f64 },
    Adaptive { gains: &'a dyn FeedbackGains },
    Leader { gains: &'a dyn FeedbackGains, lc: &'a LeaderCoupling },
}

/// Offsets into the stacked state vector.
struct Layout {
    n_agents: usize,
    n: usize,
    n_edges: usize,
    leader: bool,
}

impl Layout {
    fn edges_at(&self) -> usize {
        self.n_agents * self.n
    }
    fn leader_at(&self) -> usize {
        self.edges_at() + self.n_edges
    }
    fn leader_weights_at(&self) -> usize {
        self.leader_at() + self.n
    }
    fn len(&self) -> usize {
        if self.leader {
            self.leader_weights_at() + self.n_agents
        } else {
            self.leader_at()
        }
    }
}

struct Runner<'a> {
    model: &'a AgentModel,
    topology: &'a Topology,
    law: Law<'a>,
    layout: Layout,
    kappa: f64,
    lyapunov: Option<(DMatrix<f64>, f64)>,
}

impl Runner<'_> {
    fn states(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.layout.n_agents, self.layout.n, &y[..self.layout.edges_at()])
    }

    fn couplings(&self, y: &[f64]) -> Result<CouplingState> {
        let l = &self.layout;
        CouplingState::from_edges(self.topology, &y[l.edges_at()..l.leader_at()], self.kappa)
    }

    fn leader(&self, y: &[f64]) -> Option<LeaderCoupling> {
        match self.law {
            Law::Leader { lc, .. } => {
                let l = &self.layout;
                Some(LeaderCoupling {
                    d: lc.d.clone(),
                    kappa_leader: lc.kappa_leader.clone(),
                    leader_state: DVector::from_column_slice(&y[l.leader_at()..l.leader_weights_at()]),
                    c_leader: DVector::from_column_slice(&y[l.leader_weights_at()..l.len()]),
                })
            }
            _ => None,
        }
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let l = &self.layout;
        let states = self.states(y);
        let controls = match self.law {
            Law::Static { k, c: 0.0 } => DMatrix::zeros(l.n_agents, k.nrows()),
            Law::Static { k, c } => static_control(k, c, self.topology, &states)?,
            Law::Adaptive { gains } => {
                let cs = self.couplings(y)?;
                let rates = adaptive_weight_rates(gains.adaptation(), &cs, self.topology, &states)?;
                for (slot, &(i, j)) in dy[l.edges_at()..l.leader_at()].iter_mut().zip(self.topology.edges()) {
                    *slot = rates[(i, j)];
                }
                adaptive_control(gains.feedback(), &cs, self.topology, &states)?
            }
            Law::Leader { gains, .. } => {
                let cs = self.couplings(y)?;
                let lc = self.leader(y).expect("leader law");
                let (rates, leader_rates) = leader_weight_rates(gains.adaptation(), &cs, &lc, self.topology, &states)?;
                for (slot, &(i, j)) in dy[l.edges_at()..l.leader_at()].iter_mut().zip(self.topology.edges()) {
                    *slot = rates[(i, j)];
                }
                dy[l.leader_weights_at()..l.len()].copy_from_slice(leader_rates.as_slice());
                let x0_dot = self.model.drift(&lc.leader_state, &DVector::zeros(self.model.input_dim()))?;
                dy[l.leader_at()..l.leader_weights_at()].copy_from_slice(x0_dot.as_slice());
                leader_control(gains.feedback(), &cs, &lc, self.topology, &states)?
            }
        };
        for i in 0..l.n_agents {
            let x = states.row(i).transpose();
            let u = controls.row(i).transpose();
            let dx = self.model.drift(&x, &u)?;
            dy[i * l.n..(i + 1) * l.n].copy_from_slice(dx.as_slice());
        }
        Ok(())
    }

    fn record(&self, t: f64, y: &[f64], traj: &mut Trajectory) -> Result<()> {
        let l = &self.layout;
        let states = self.states(y);
        traj.times.push(t);
        traj.consensus_error.push(consensus_error(&states));
        if !matches!(self.law, Law::Static { .. }) {
            traj.couplings.push(y[l.edges_at()..l.leader_at()].to_vec());
        }
        if let Some(lc) = self.leader(y) {
            traj.tracking_errors.push(states.row_iter().map(|r| (r.transpose() - &lc.leader_state).norm()).collect());
            traj.leader_couplings.push(lc.c_leader.iter().copied().collect());
            traj.leader_states.push(lc.leader_state);
        }
        if let Some((p_inv, alpha)) = &self.lyapunov {
            let cs = self.couplings(y)?;
            traj.lyapunov.push(v1_with_inverse(&states, &cs, self.topology, p_inv, *alpha)?);
        }
        traj.states.push(states);
        Ok(())
    }

    fn run(&self, y0: Vec<f64>, cfg: &SimConfig) -> Result<Trajectory> {
        let mut traj = Trajectory {
            times: vec![],
            states: vec![],
            edges: self.topology.edges().to_vec(),
            couplings: vec![],
            leader_couplings: vec![],
            leader_states: vec![],
            consensus_error: vec![],
            tracking_errors: vec![],
            lyapunov: vec![],
        };
        let dim = y0.len();
        let mut y = y0;
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        let mut tmp = vec![0.0; dim];
        let h = cfg.dt;
        let steps = cfg.steps();
        self.record(0.0, &y, &mut traj)?;
        for step in 1..=steps {
            let t = step as f64 * h;
            self.rhs(&y, &mut k1)?;
            axpy(&mut tmp, &y, 0.5 * h, &k1);
            self.rhs(&tmp, &mut k2)?;
            axpy(&mut tmp, &y, 0.5 * h, &k2);
            self.rhs(&tmp, &mut k3)?;
            axpy(&mut tmp, &y, h, &k3);
            self.rhs(&tmp, &mut k4)?;
            for i in 0..dim {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time: t });
            }
            if step % cfg.record_stride == 0 || step == steps {
                self.record(t, &y, &mut traj)?;
            }
        }
        Ok(traj)
    }
}

fn axpy(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for ((o, yi), ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + a * ki;
    }
}

fn initial_states(topology: &Topology, n: usize, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let n_agents = topology.n_agents();
    // Always draw, so overriding states leaves the coupling draws unchanged.
    let s = cfg.init_state_scale;
    let drawn = DMatrix::from_row_iterator(n_agents, n, (0..n_agents * n).map(|_| uniform(rng, -s, s)));
    match &cfg.initial_states {
        Some(x) if x.shape() != (n_agents, n) => Err(Error::Config(format!("initial states must be {n_agents}x{n}"))),
        Some(x) => Ok(x.clone()),
        None => Ok(drawn),
    }
}

fn initial_couplings(topology: &Topology, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let drawn: Vec<f64> =
        topology.edges().iter().map(|_| uniform(rng, cfg.init_coupling_low, cfg.init_coupling_high)).collect();
    match &cfg.initial_couplings {
        Some(c) if c.len() != drawn.len() => Err(Error::Config(format!("expected {} initial couplings", drawn.len()))),
        Some(c) => Ok(c.clone()),
        None => Ok(drawn),
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn stacked(states: &DMatrix<f64>, couplings: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = states.transpose().iter().copied().collect();
    y.extend_from_slice(couplings);
    y
}

fn warn_if_disconnected(topology: &Topology) {
    if !topology.is_connected() {
        log::warn!("topology is disconnected; consensus is not guaranteed");
    }
}

fn check_gains(model: &AgentModel, gains: &dyn FeedbackGains) -> Result<()> {
    let (n, p) = (model.state_dim(), model.input_dim());
    if gains.feedback().shape() != (p, n) || gains.adaptation().shape() != (n, n) {
        return Err(Error::Dimension(format!("gains must be F: {p}x{n}, Γ: {n}x{n}")));
    }
    Ok(())
}

/// Closed loop under the adaptive protocol.
///
/// For linear agents on a connected graph the Lyapunov diagnostic is
/// recorded with `α = 1/λ₂`.
pub fn simulate_adaptive(
    model: &AgentModel,
    gains: &dyn FeedbackGains,
    topology: &Topology,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_gains(model, gains)?;
    warn_if_disconnected(topology);
    let n = model.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = initial_states(topology, n, cfg, &mut rng)?;
    let c0 = initial_couplings(topology, cfg, &mut rng)?;

    let lyapunov = match model {
        AgentModel::Linear(_) if topology.n_agents() > 1 && topology.is_connected() => {
            let alpha = 1.0 / topology.spectral_info()?.fiedler;
            gains.certificate().clone().try_inverse().map(|p_inv| (p_inv, alpha))
        }
        _ => None,
    };
    let runner = Runner {
        model,
        topology,
        law: Law::Adaptive { gains },
        layout: Layout { n_agents: topology.n_agents(), n, n_edges: topology.edges().len(), leader: false },
        kappa: cfg.kappa,
        lyapunov,
    };
    runner.run(stacked(&x0, &c0), cfg)
}

/// Closed loop under the static protocol with coupling `c ≥ 0`.
pub fn simulate_static(
    model: &LinearModel,
    k: &DMatrix<f64>,
    c: f64,
    topology: &Topology,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if k.shape() != (model.input_dim(), model.state_dim()) {
        return Err(Error::Dimension("static gain must be p×n".into()));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Argument(format!("static coupling must be nonnegative, got {c}")));
    }
    warn_if_disconnected(topology);
    let n = model.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = initial_states(topology, n, cfg, &mut rng)?;
    let agent_model = AgentModel::Linear(model.clone());
    let runner = Runner {
        model: &agent_model,
        topology,
        law: Law::Static { k, c },
        layout: Layout { n_agents: topology.n_agents(), n, n_edges: 0, leader: false },
        kappa: cfg.kappa,
        lyapunov: None,
    };
    runner.run(stacked(&x0, &[]), cfg)
}

/// Followers under the pinned protocol; the leader evolves open loop.
///
/// `lc` supplies the pin gains, leader adaptation gains, and the initial
/// leader state and leader weights.
pub fn simulate_leader(
    model: &AgentModel,
    gains: &dyn FeedbackGains,
    topology: &Topology,
    lc: &LeaderCoupling,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_gains(model, gains)?;
    let n = model.state_dim();
    lc.validate(topology.n_agents(), n)?;
    if !lc.is_pinned() {
        return Err(Error::Config(
            "no follower is pinned to the leader; at least one pin gain d_i must be positive".into(),
        ));
    }
    warn_if_disconnected(topology);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x0 = initial_states(topology, n, cfg, &mut rng)?;
    let c0 = initial_couplings(topology, cfg, &mut rng)?;
    let mut y0 = stacked(&x0, &c0);
    y0.extend(lc.leader_state.iter());
    y0.extend(lc.c_leader.iter());
    let runner = Runner {
        model,
        topology,
        law: Law::Leader { gains, lc },
        layout: Layout { n_agents: topology.n_agents(), n, n_edges: topology.edges().len(), leader: true },
        kappa: cfg.kappa,
        lyapunov: None,
    };
    runner.run(y0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{solve_linear_gain, SolverOptions};

    fn double_integrator() -> LinearModel {
        LinearModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn consensus_error_examples() {
        assert_eq!(consensus_error(&DMatrix::from_element(3, 2, 4.0)), 0.0);
        assert_eq!(consensus_error(&DMatrix::from_column_slice(2, 1, &[1.0, -1.0])), 1.0);
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, -3.0, 0.5, 0.0, 4.0, 0.25, -1.5]);
        let shifted = DMatrix::from_fn(4, 2, |i, j| x[(i, j)] + [8.0, -16.0][j]);
        assert_eq!(consensus_error(&x), consensus_error(&shifted));
    }

    #[test]
    fn identical_agents_stay_put() {
        let m = double_integrator();
        let g = solve_linear_gain(&m, &SolverOptions::default()).unwrap();
        let t = Topology::ring(4).unwrap();
        let cfg = SimConfig {
            t_final: 2.0,
            initial_states: Some(DMatrix::from_fn(4, 2, |_, j| [0.3, -0.2][j])),
            ..Default::default()
        };
        let tr = simulate_adaptive(&m.into(), &g, &t, &cfg).unwrap();
        assert!(tr.consensus_error.iter().all(|&e| e <= 1e-12));
        assert!(tr.couplings.iter().all(|c| c == &tr.couplings[0]));
    }

    #[test]
    fn single_agent_is_open_loop() {
        let m = LinearModel::new(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let g = solve_linear_gain(&m, &SolverOptions::default()).unwrap();
        let t = Topology::new(1, &[]).unwrap();
        let cfg =
            SimConfig { t_final: 1.0, initial_states: Some(DMatrix::from_element(1, 1, 2.0)), ..Default::default() };
        let tr = simulate_adaptive(&m.into(), &g, &t, &cfg).unwrap();
        let last = tr.states.last().unwrap()[(0, 0)];
        assert!((last - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!(tr.couplings.iter().all(|c| c.is_empty()));
    }

    #[test]
    fn verdict_conventions() {
        let base = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![DMatrix::zeros(1, 1); 2],
            edges: vec![],
            couplings: vec![],
            leader_couplings: vec![],
            leader_states: vec![],
            consensus_error: vec![0.0, 0.0],
            tracking_errors: vec![],
            lyapunov: vec![],
        };
        assert!(verdict(&base, 1e-3).unwrap().achieved);
        let growing = Trajectory { consensus_error: vec![1.0, 1e6], ..base.clone() };
        assert!(!verdict(&growing, 1e-3).unwrap().achieved);
        let edge = Trajectory { consensus_error: vec![1.0, 0.5], ..base };
        assert!(verdict(&edge, 0.5).unwrap().achieved);
    }

    #[test]
    fn lyapunov_zero_at_equilibrium() {
        let t = Topology::path(3).unwrap();
        let cs = CouplingState::from_edges(&t, &[0.7, 0.7], 1.0).unwrap();
        let x = DMatrix::from_element(3, 2, 1.5);
        let v = lyapunov_v1(&x, &cs, &t, &DMatrix::identity(2, 2), 0.7).unwrap();
        assert_eq!(v, 0.0);
        assert!(lyapunov_v1(&x, &cs, &t, &DMatrix::zeros(2, 2), 0.7).is_err());
    }

    #[test]
    fn leader_requires_a_pin() {
        let m = double_integrator();
        let g = solve_linear_gain(&m, &SolverOptions::default()).unwrap();
        let t = Topology::path(3).unwrap();
        let lc = LeaderCoupling {
            d: DVector::zeros(3),
            c_leader: DVector::zeros(3),
            kappa_leader: DVector::from_element(3, 1.0),
            leader_state: DVector::zeros(2),
        };
        let err = simulate_leader(&m.into(), &g, &t, &lc, &SimConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn followers_at_leader_stay_there() {
        let m = double_integrator();
        let g = solve_linear_gain(&m, &SolverOptions::default()).unwrap();
        let t = Topology::path(3).unwrap();
        let x0 = [0.5, 0.25];
        let lc = LeaderCoupling {
            d: DVector::from_column_slice(&[1.0, 0.0, 0.0]),
            c_leader: DVector::from_element(3, 0.5),
            kappa_leader: DVector::from_element(3, 1.0),
            leader_state: DVector::from_column_slice(&x0),
        };
        let cfg = SimConfig {
            t_final: 2.0,
            initial_states: Some(DMatrix::from_fn(3, 2, |_, j| x0[j])),
            ..Default::default()
        };
        let tr = simulate_leader(&m.into(), &g, &t, &lc, &cfg).unwrap();
        assert!(tr.tracking_errors.iter().flatten().all(|&e| e <= 1e-12));
    }

    #[test]
    fn divergence_reports_time() {
        let m = LinearModel::new(DMatrix::from_element(1, 1, 400.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let t = Topology::complete(2).unwrap();
        let cfg = SimConfig { dt: 1e-2, t_final: 10.0, ..Default::default() };
        let err = simulate_static(&m, &DMatrix::from_element(1, 1, -1.0), 0.0, &t, &cfg).unwrap_err();
        match err {
            Error::Divergence { time } => assert!(time > 0.0 && time < 10.0),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { t_final: 1e-4, ..Default::default() }.validate().is_err());
        assert!(SimConfig { init_coupling_low: 2.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { record_stride: 0, ..Default::default() }.validate().is_err());
    }
}
