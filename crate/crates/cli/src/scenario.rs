//! Scenario files (TOML).
//!
//! ```toml
//! variant = "adaptive-nonlinear"   # static | adaptive | adaptive-nonlinear | leader
//! out = "out/manipulator"
//!
//! [model]
//! benchmark = "manipulator"        # or inline matrices:
//! # a = [[0.0, 1.0], [0.0, 0.0]]
//! # b = [[0.0], [1.0]]
//! # d1 = [[1.0, 0.0], [0.0, 1.0]]
//! # gamma = 0.5
//! # nonlinearity = [{ output = 1, input = 0, coeff = 0.5, func = "sin" }]
//!
//! [topology]
//! family = "benchmark"             # ring | complete | path | star | benchmark
//! # n = 8
//! # edges = [[0, 1], [1, 2]]       # explicit alternative to `family`
//!
//! [protocol]
//! kappa = 1.0
//!
//! [sim]
//! t_final = 20.0
//! seed = 0
//! ```

use std::path::{Path, PathBuf};

use adaptive_consensus::dynamics::{
    manipulator_model, AgentModel, LinearModel, NonlinearModel, Nonlinearity, ScalarTerm,
};
use adaptive_consensus::graph::Topology;
use adaptive_consensus::sim::SimConfig;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Static,
    Adaptive,
    AdaptiveNonlinear,
    Leader,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Static => "static",
            Variant::Adaptive => "adaptive",
            Variant::AdaptiveNonlinear => "adaptive-nonlinear",
            Variant::Leader => "leader",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSpec,
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub sim: SimSpec,
}

fn default_variant() -> Variant {
    Variant::Adaptive
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub benchmark: Option<String>,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub d1: Option<Vec<Vec<f64>>>,
    pub gamma: Option<f64>,
    pub nonlinearity: Option<Vec<ScalarTerm>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub family: Option<String>,
    pub n: Option<usize>,
    pub edges: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub kappa: Option<f64>,
    /// Static coupling `c`; overrides `coupling_factor`.
    pub coupling: Option<f64>,
    /// Static coupling as a multiple of `1/λ2` (default 1).
    pub coupling_factor: Option<f64>,
    pub pins: Option<Vec<usize>>,
    pub pin_gains: Option<Vec<f64>>,
    pub kappa_leader: Option<f64>,
    pub leader_state: Option<Vec<f64>>,
    /// Initial leader weights `c_i(0)`, one per follower (default 0).
    pub leader_weights: Option<Vec<f64>>,
    /// Precomputed gain document; synthesized when absent.
    pub gain_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub seed: Option<u64>,
    pub init_state_scale: Option<f64>,
    pub init_coupling: Option<[f64; 2]>,
    pub record_stride: Option<usize>,
    pub threshold: Option<f64>,
}

pub const DEFAULT_THRESHOLD: f64 = 1e-3;

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return Err(config(format!("matrix `{name}` is empty")));
    }
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(config(format!("matrix `{name}` has rows of different lengths")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(config(format!("matrix `{name}` has non-finite entries")));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config(format!("cannot parse scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The agent model. Nonlinear parts are only accepted by the
    /// `adaptive-nonlinear` variant, which requires them.
    pub fn agent_model(&self) -> Result<AgentModel, CliError> {
        let m = &self.model;
        let inline = m.a.is_some() || m.b.is_some() || m.d1.is_some() || m.gamma.is_some() || m.nonlinearity.is_some();
        let model = match (&m.benchmark, inline) {
            (Some(_), true) => return Err(config("model: give either `benchmark` or inline matrices, not both")),
            (Some(name), false) if name == "manipulator" => AgentModel::Nonlinear(manipulator_model()),
            (Some(name), false) => return Err(config(format!("model: unknown benchmark `{name}`"))),
            (None, _) => {
                let (Some(a), Some(b)) = (&m.a, &m.b) else {
                    return Err(config("model: inline models need both `a` and `b`"));
                };
                let linear = LinearModel::new(matrix("a", a)?, matrix("b", b)?)?;
                match (&m.d1, m.gamma, &m.nonlinearity) {
                    (None, None, None) => AgentModel::Linear(linear),
                    (Some(d1), Some(gamma), Some(terms)) => {
                        let d1 = matrix("d1", d1)?;
                        let f = Nonlinearity::Terms { output_dim: d1.ncols(), terms: terms.clone() };
                        AgentModel::Nonlinear(NonlinearModel::new(linear, d1, f, gamma)?)
                    }
                    _ => return Err(config("model: nonlinear models need `d1`, `gamma` and `nonlinearity` together")),
                }
            }
        };
        match (self.variant, &model) {
            (Variant::AdaptiveNonlinear, AgentModel::Linear(_)) => {
                Err(config("variant adaptive-nonlinear needs a nonlinear model (d1, gamma, nonlinearity)"))
            }
            (Variant::Static | Variant::Adaptive | Variant::Leader, AgentModel::Nonlinear(_)) => Err(config(format!(
                "variant {} needs a linear model; use adaptive-nonlinear for nonlinear agents",
                self.variant.name()
            ))),
            _ => Ok(model),
        }
    }

    pub fn topology(&self) -> Result<Topology, CliError> {
        let spec = self.topology.as_ref().ok_or_else(|| config("missing [topology] table"))?;
        let topo = match (&spec.family, &spec.edges) {
            (Some(_), Some(_)) => return Err(config("topology: give either `family` or `edges`, not both")),
            (Some(family), None) => {
                if family == "benchmark" {
                    if spec.n.is_some_and(|n| n != 8) {
                        return Err(config("topology: the benchmark graph has 8 agents"));
                    }
                    Topology::benchmark()
                } else {
                    let n = spec.n.ok_or_else(|| config(format!("topology: family `{family}` needs `n`")))?;
                    match family.as_str() {
                        "ring" => Topology::ring(n)?,
                        "complete" => Topology::complete(n)?,
                        "path" => Topology::path(n)?,
                        "star" => Topology::star(n)?,
                        other => return Err(config(format!("topology: unknown family `{other}`"))),
                    }
                }
            }
            (None, Some(edges)) => {
                let n = spec.n.ok_or_else(|| config("topology: explicit edges need `n`"))?;
                Topology::new(n, edges)?
            }
            (None, None) => return Err(config("topology: give `family` or `edges`")),
        };
        Ok(topo)
    }

    pub fn threshold(&self) -> f64 {
        self.sim.threshold.unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let d = SimConfig::default();
        let s = &self.sim;
        let [lo, hi] = s.init_coupling.unwrap_or([d.init_coupling_low, d.init_coupling_high]);
        let cfg = SimConfig {
            dt: s.dt.unwrap_or(d.dt),
            t_final: s.t_final.unwrap_or(d.t_final),
            seed: s.seed.unwrap_or(d.seed),
            init_state_scale: s.init_state_scale.unwrap_or(d.init_state_scale),
            init_coupling_low: lo,
            init_coupling_high: hi,
            record_stride: s.record_stride.unwrap_or(d.record_stride),
            kappa: self.protocol.kappa.unwrap_or(d.kappa),
            initial_states: None,
            initial_couplings: None,
        };
        cfg.validate()?;
        if self.threshold().is_nan() || self.threshold() <= 0.0 {
            return Err(config("sim: threshold must be positive"));
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str =
        "[model]\na = [[0.0, 1.0], [0.0, 0.0]]\nb = [[0.0], [1.0]]\n[topology]\nfamily = \"ring\"\nn = 4\n";

    #[test]
    fn defaults() {
        let s = Scenario::parse(LINEAR).unwrap();
        assert_eq!(s.variant, Variant::Adaptive);
        assert_eq!(s.out_dir(), PathBuf::from("out"));
        assert_eq!(s.threshold(), DEFAULT_THRESHOLD);
        let cfg = s.sim_config().unwrap();
        assert_eq!((cfg.dt, cfg.t_final, cfg.seed), (1e-3, 20.0, 0));
        assert_eq!(s.topology().unwrap(), Topology::ring(4).unwrap());
        assert!(matches!(s.agent_model().unwrap(), AgentModel::Linear(_)));
    }

    #[test]
    fn variant_must_match_model() {
        let s = Scenario::parse(&format!("variant = \"adaptive-nonlinear\"\n{LINEAR}")).unwrap();
        assert!(s.agent_model().is_err());
        let s = Scenario::parse("variant = \"static\"\n[model]\nbenchmark = \"manipulator\"\n").unwrap();
        assert!(s.agent_model().is_err());
        let s = Scenario::parse("variant = \"adaptive-nonlinear\"\n[model]\nbenchmark = \"manipulator\"\n").unwrap();
        assert!(matches!(s.agent_model().unwrap(), AgentModel::Nonlinear(_)));
    }

    #[test]
    fn inline_nonlinear_model() {
        let s = Scenario::parse(
            "variant = \"adaptive-nonlinear\"\n[model]\na = [[0.0, 1.0], [0.0, 0.0]]\nb = [[0.0], [1.0]]\n\
             d1 = [[0.0], [1.0]]\ngamma = 0.2\nnonlinearity = [{ output = 0, input = 0, coeff = 0.2, func = \"sin\" }]\n",
        )
        .unwrap();
        let AgentModel::Nonlinear(m) = s.agent_model().unwrap() else { panic!() };
        assert_eq!(m.d1().shape(), (2, 1));
        assert_eq!(m.gamma(), 0.2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Scenario::parse("unknown = 1\n").is_err());
        assert!(Scenario::parse("variant = \"fancy\"\n").is_err());
        let bad_topo = |t: &str| Scenario::parse(&format!("[topology]\n{t}\n")).unwrap().topology().is_err();
        assert!(bad_topo("family = \"ring\""));
        assert!(bad_topo("family = \"hypercube\"\nn = 4"));
        assert!(bad_topo("n = 3\nedges = [[0, 0]]"));
        assert!(bad_topo("family = \"benchmark\"\nn = 5"));
        let s = Scenario::parse(&format!("{LINEAR}[sim]\ndt = -1.0\n")).unwrap();
        assert!(s.sim_config().is_err());
        let s = Scenario::parse("[model]\na = [[1.0, 2.0]]\nb = [[1.0]]\n").unwrap();
        assert!(s.agent_model().is_err());
    }
}
