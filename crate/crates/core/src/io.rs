//! File formats: gain documents (JSON) and trajectory tables (CSV).
//!
//! Matrices are stored row-major with explicit dimensions. CSV numbers are
//! written with 17 significant digits, enough to round-trip any `f64`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{LinearModel, NonlinearModel};
use crate::sim::Trajectory;
use crate::synthesis::{
    gamma_residual, verify_consensus_gain, verify_lipschitz_gain, ConsensusGain, ConsensusMargins, Gain, LipschitzGain,
    LipschitzMargins,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.transpose().iter().copied().collect() }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Config(format!(
                "matrix declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Serialized gain with the margins verified at synthesis time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GainDocument {
    Consensus {
        state_dim: usize,
        input_dim: usize,
        p: MatrixDoc,
        f: MatrixDoc,
        gamma: MatrixDoc,
        margins: ConsensusMargins,
    },
    Lipschitz {
        state_dim: usize,
        input_dim: usize,
        q: MatrixDoc,
        tau: f64,
        t_diag: Vec<f64>,
        f: MatrixDoc,
        gamma: MatrixDoc,
        margins: LipschitzMargins,
    },
}

impl GainDocument {
    pub fn consensus(model: &LinearModel, gain: &ConsensusGain) -> Result<Self> {
        Ok(GainDocument::Consensus {
            state_dim: model.state_dim(),
            input_dim: model.input_dim(),
            p: MatrixDoc::from_matrix(&gain.p),
            f: MatrixDoc::from_matrix(&gain.f),
            gamma: MatrixDoc::from_matrix(&gain.gamma),
            margins: verify_consensus_gain(model, gain)?,
        })
    }

    pub fn lipschitz(model: &NonlinearModel, gain: &LipschitzGain) -> Result<Self> {
        Ok(GainDocument::Lipschitz {
            state_dim: model.linear().state_dim(),
            input_dim: model.linear().input_dim(),
            q: MatrixDoc::from_matrix(&gain.q),
            tau: gain.tau,
            t_diag: gain.t.iter().copied().collect(),
            f: MatrixDoc::from_matrix(&gain.f),
            gamma: MatrixDoc::from_matrix(&gain.gamma),
            margins: verify_lipschitz_gain(model, gain)?,
        })
    }

    /// Rebuilds the gain, checking dimensions and `Γ = FᵀF`.
    pub fn to_gain(&self) -> Result<Gain> {
        let (n, p, f, gamma) = match self {
            GainDocument::Consensus { state_dim, input_dim, f, gamma, .. }
            | GainDocument::Lipschitz { state_dim, input_dim, f, gamma, .. } => {
                (*state_dim, *input_dim, f.to_matrix()?, gamma.to_matrix()?)
            }
        };
        if f.shape() != (p, n) || gamma.shape() != (n, n) {
            return Err(Error::Config(format!("gain document must hold F: {p}x{n} and Γ: {n}x{n}")));
        }
        let residual = gamma_residual(&f, &gamma)?;
        if residual > 1e-9 * (1.0 + gamma.amax()) {
            return Err(Error::Config(format!("gain document has Γ ≠ FᵀF (residual {residual:e})")));
        }
        Ok(match self {
            GainDocument::Consensus { p: pm, .. } => Gain::Consensus(ConsensusGain { p: pm.to_matrix()?, f, gamma }),
            GainDocument::Lipschitz { q, tau, t_diag, .. } => Gain::Lipschitz(LipschitzGain {
                q: q.to_matrix()?,
                tau: *tau,
                t: DVector::from_column_slice(t_diag),
                f,
                gamma,
            }),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_row<W: Write>(w: &mut W, t: f64, values: impl IntoIterator<Item = f64>) -> Result<()> {
    write!(w, "{}", fmt_num(t))?;
    for v in values {
        write!(w, ",{}", fmt_num(v))?;
    }
    writeln!(w)?;
    Ok(())
}

/// `time, x{agent}_{coord}, …` in agent-major order.
pub fn write_states_csv<W: Write>(traj: &Trajectory, w: &mut W) -> Result<()> {
    let Some(first) = traj.states.first() else {
        return Err(Error::Argument("empty trajectory".into()));
    };
    let (n_agents, n) = first.shape();
    write!(w, "time")?;
    for i in 0..n_agents {
        for k in 0..n {
            write!(w, ",x{i}_{k}")?;
        }
    }
    writeln!(w)?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        write_row(w, *t, (0..n_agents).flat_map(|i| (0..n).map(move |k| x[(i, k)])))?;
    }
    Ok(())
}

/// `time, c_{i}_{j}` for edges in lexicographic order, then `c0_{i}` for
/// leader weights when present.
pub fn write_weights_csv<W: Write>(traj: &Trajectory, w: &mut W) -> Result<()> {
    write!(w, "time")?;
    for (i, j) in &traj.edges {
        write!(w, ",c_{i}_{j}")?;
    }
    let n_leader = traj.leader_couplings.first().map_or(0, Vec::len);
    for i in 0..n_leader {
        write!(w, ",c0_{i}")?;
    }
    writeln!(w)?;
    let empty = Vec::new();
    for (k, t) in traj.times.iter().enumerate() {
        let edges = traj.couplings.get(k).unwrap_or(&empty);
        let leader = traj.leader_couplings.get(k).unwrap_or(&empty);
        write_row(w, *t, edges.iter().chain(leader).copied())?;
    }
    Ok(())
}

/// `time, consensus_error`, then per-follower `tracking_{i}` and the leader
/// state `x0_{coord}` when a leader is present, then `lyapunov` when recorded.
pub fn write_metrics_csv<W: Write>(traj: &Trajectory, w: &mut W) -> Result<()> {
    write!(w, "time,consensus_error")?;
    let n_followers = traj.tracking_errors.first().map_or(0, Vec::len);
    for i in 0..n_followers {
        write!(w, ",tracking_{i}")?;
    }
    let n_leader = traj.leader_states.first().map_or(0, |x| x.len());
    for k in 0..n_leader {
        write!(w, ",x0_{k}")?;
    }
    if !traj.lyapunov.is_empty() {
        write!(w, ",lyapunov")?;
    }
    writeln!(w)?;
    let empty_row = Vec::new();
    let empty_state = DVector::zeros(0);
    for (k, t) in traj.times.iter().enumerate() {
        let tracking = traj.tracking_errors.get(k).unwrap_or(&empty_row);
        let leader = traj.leader_states.get(k).unwrap_or(&empty_state);
        let values = std::iter::once(traj.consensus_error[k])
            .chain(tracking.iter().copied())
            .chain(leader.iter().copied())
            .chain(traj.lyapunov.get(k).copied());
        write_row(w, *t, values)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::manipulator_model;
    use crate::synthesis::{solve_linear_gain, FeedbackGains, SolverOptions};

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn gain_document_round_trip() {
        let m = manipulator_model();
        let g = solve_linear_gain(m.linear(), &SolverOptions::default()).unwrap();
        let doc = GainDocument::consensus(m.linear(), &g).unwrap();
        let back = GainDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let gain = back.to_gain().unwrap();
        assert_eq!(gain.feedback(), &g.f);
        assert_eq!(gain.certificate(), &g.p);
    }

    #[test]
    fn rejects_inconsistent_gamma() {
        let m = manipulator_model();
        let mut g = solve_linear_gain(m.linear(), &SolverOptions::default()).unwrap();
        let mut doc = GainDocument::consensus(m.linear(), &g).unwrap();
        g.gamma[(0, 0)] += 1.0;
        if let GainDocument::Consensus { gamma, .. } = &mut doc {
            *gamma = MatrixDoc::from_matrix(&g.gamma);
        }
        assert!(doc.to_gain().is_err());
    }

    #[test]
    fn matrix_doc_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = MatrixDoc::from_matrix(&m);
        assert_eq!(d.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(d.to_matrix().unwrap(), m);
        assert!(MatrixDoc { rows: 2, cols: 2, data: vec![1.0] }.to_matrix().is_err());
    }

    #[test]
    fn csv_headers() {
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![DMatrix::zeros(2, 2); 2],
            edges: vec![(0, 1)],
            couplings: vec![vec![0.25], vec![0.5]],
            leader_couplings: vec![],
            leader_states: vec![],
            consensus_error: vec![0.0, 0.0],
            tracking_errors: vec![],
            lyapunov: vec![],
        };
        let mut buf = Vec::new();
        write_states_csv(&traj, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("time,x0_0,x0_1,x1_0,x1_1\n"));
        assert_eq!(s.lines().count(), 3);

        let mut buf = Vec::new();
        write_weights_csv(&traj, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(2).unwrap(), "5.0000000000000000e-1,5.0000000000000000e-1");
        assert!(s.starts_with("time,c_0_1\n"));
    }
}
