use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adaptive_consensus::dynamics::AgentModel;
use adaptive_consensus::graph::Topology;
use adaptive_consensus::io::{write_metrics_csv, write_states_csv, write_weights_csv, GainDocument};
use adaptive_consensus::plot::{line_chart, Series};
use adaptive_consensus::protocol::LeaderCoupling;
use adaptive_consensus::sim::{simulate_adaptive, simulate_leader, simulate_static, verdict, Trajectory};
use adaptive_consensus::synthesis::{
    solve_linear_gain, solve_lipschitz_gain, static_coupling_bound, FeedbackGains, Gain, SolverOptions,
};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use crate::scenario::{Scenario, Variant};
use crate::CliError;

/// Weight drift below which coupling weights count as converged.
const WEIGHT_DRIFT_TOLERANCE: f64 = 1e-3;

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub svg: bool,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) {
        let sim = &mut scenario.sim;
        sim.seed = self.seed.or(sim.seed);
        sim.dt = self.dt.or(sim.dt);
        sim.t_final = self.t_final.or(sim.t_final);
        sim.threshold = self.threshold.or(sim.threshold);
        if let Some(out) = &self.out {
            scenario.out = Some(out.clone());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Demo {
    Manipulator,
    Leader,
    Static,
}

const MANIPULATOR_DEMO: &str = r#"
variant = "adaptive-nonlinear"
out = "out/manipulator"

[model]
benchmark = "manipulator"

[topology]
family = "benchmark"

[sim]
t_final = 20.0
"#;

const LEADER_DEMO: &str = r#"
variant = "leader"
out = "out/leader"

[model]
a = [[0.0, 1.0], [0.0, 0.0]]
b = [[0.0], [1.0]]

[topology]
family = "path"
n = 5

[protocol]
pins = [0]
pin_gains = [1.0]
leader_state = [0.5, 0.2]

[sim]
t_final = 100.0
"#;

const STATIC_DEMO: &str = r#"
variant = "static"
out = "out/static"

[model]
a = [[1.0]]
b = [[1.0]]

[topology]
family = "ring"
n = 8

[protocol]
coupling_factor = 1.05

[sim]
t_final = 20.0
"#;

impl Demo {
    pub fn scenario(self) -> Scenario {
        let text = match self {
            Demo::Manipulator => MANIPULATOR_DEMO,
            Demo::Leader => LEADER_DEMO,
            Demo::Static => STATIC_DEMO,
        };
        Scenario::parse(text).expect("built-in scenario parses")
    }
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// The nonlinear variant uses the Lipschitz route; all others use the
/// Riccati route on the linear part.
fn synthesize(scenario: &Scenario, model: &AgentModel) -> Result<GainDocument, CliError> {
    let opts = SolverOptions::default();
    let doc = match model {
        AgentModel::Nonlinear(m) if scenario.variant == Variant::AdaptiveNonlinear => {
            GainDocument::lipschitz(m, &solve_lipschitz_gain(m, &opts)?)?
        }
        other => {
            let lin = other.linear_part();
            GainDocument::consensus(lin, &solve_linear_gain(lin, &opts)?)?
        }
    };
    Ok(doc)
}

fn load_or_synthesize(scenario: &Scenario, model: &AgentModel) -> Result<Gain, CliError> {
    match &scenario.protocol.gain_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read gain file {}: {e}", path.display())))?;
            Ok(GainDocument::from_json(&text)?.to_gain()?)
        }
        None => Ok(synthesize(scenario, model)?.to_gain()?),
    }
}

/// Synthesizes gains and writes `gain.json` and `synth_report.json`.
pub fn synth(scenario: &Scenario) -> Result<PathBuf, CliError> {
    let model = scenario.agent_model()?;
    let out = scenario.out_dir();
    fs::create_dir_all(&out)?;
    let report_path = out.join("synth_report.json");
    match synthesize(scenario, &model) {
        Ok(doc) => {
            fs::write(out.join("gain.json"), doc.to_json()? + "\n")?;
            let report = match &doc {
                GainDocument::Consensus { margins, .. } => json!({
                    "feasible": true,
                    "kind": "consensus",
                    "lmi_max_eig": margins.lmi_max_eig,
                    "p_min_eig": margins.p_min_eig,
                    "gamma_residual": margins.gamma_residual,
                }),
                GainDocument::Lipschitz { margins, .. } => json!({
                    "feasible": true,
                    "kind": "lipschitz",
                    "block_max_eig": margins.block_max_eig,
                    "q_min_eig": margins.q_min_eig,
                    "tau": margins.tau,
                    "t_diag": margins.t_diag,
                    "gamma_residual": margins.gamma_residual,
                }),
            };
            write_json(&report_path, &report)?;
            Ok(out)
        }
        Err(e) => {
            write_json(&report_path, &json!({ "feasible": false, "error": e.to_string() }))?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub variant: &'static str,
    pub achieved: bool,
    pub final_error: Option<f64>,
    pub error_threshold: f64,
    pub weight_drift: Option<f64>,
    pub weights_converged: Option<bool>,
    pub runtime_s: f64,
    pub lambda2: f64,
    pub static_coupling: Option<f64>,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
}

fn leader_coupling(scenario: &Scenario, topo: &Topology, n: usize) -> Result<LeaderCoupling, CliError> {
    let p = &scenario.protocol;
    let n_agents = topo.n_agents();
    let pins = p.pins.clone().unwrap_or_default();
    if pins.is_empty() {
        return Err(CliError::Config("variant leader requires a non-empty `pins` list".into()));
    }
    let gains = p.pin_gains.clone().unwrap_or_else(|| vec![1.0; pins.len()]);
    if gains.len() != pins.len() {
        return Err(CliError::Config("`pin_gains` must have one entry per pin".into()));
    }
    let mut d = DVector::zeros(n_agents);
    for (&i, &g) in pins.iter().zip(&gains) {
        if i >= n_agents {
            return Err(CliError::Config(format!("pin {i} is outside [0, {n_agents})")));
        }
        d[i] = g;
    }
    let leader_state = match &p.leader_state {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(n),
    };
    let c_leader = match &p.leader_weights {
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(n_agents),
    };
    let lc = LeaderCoupling {
        d,
        c_leader,
        kappa_leader: DVector::from_element(n_agents, p.kappa_leader.unwrap_or(1.0)),
        leader_state,
    };
    lc.validate(n_agents, n)?;
    if !lc.is_pinned() {
        return Err(CliError::Config("no pin gain is positive".into()));
    }
    Ok(lc)
}

fn write_svgs(traj: &Trajectory, out: &Path) -> Result<(), CliError> {
    let Some(first) = traj.states.first() else { return Ok(()) };
    let (n_agents, n) = first.shape();
    for k in 0..n {
        let columns: Vec<Vec<f64>> = (0..n_agents).map(|i| traj.states.iter().map(|x| x[(i, k)]).collect()).collect();
        let series: Vec<Series<'_>> =
            columns.iter().enumerate().map(|(i, v)| Series { label: format!("agent {i}"), values: v }).collect();
        let svg = line_chart(&format!("state coordinate {k}"), "t [s]", &traj.times, &series);
        fs::write(out.join(format!("state_{k}.svg")), svg)?;
    }
    let mut columns: Vec<(String, Vec<f64>)> = traj
        .edges
        .iter()
        .enumerate()
        .map(|(e, (i, j))| (format!("c_{i}_{j}"), traj.couplings.iter().map(|c| c[e]).collect()))
        .collect();
    let n_leader = traj.leader_couplings.first().map_or(0, Vec::len);
    columns.extend((0..n_leader).map(|i| (format!("c0_{i}"), traj.leader_couplings.iter().map(|c| c[i]).collect())));
    if !traj.couplings.first().is_none_or(Vec::is_empty) || n_leader > 0 {
        let series: Vec<Series<'_>> = columns.iter().map(|(l, v)| Series { label: l.clone(), values: v }).collect();
        fs::write(out.join("weights.svg"), line_chart("coupling weights", "t [s]", &traj.times, &series))?;
    }
    Ok(())
}

/// Runs the scenario and writes `states.csv`, `weights.csv`, `metrics.csv`
/// and `summary.json` (plus SVG charts when `svg` is set).
pub fn simulate(scenario: &Scenario, svg: bool) -> Result<Summary, CliError> {
    let model = scenario.agent_model()?;
    let topo = scenario.topology()?;
    let cfg = scenario.sim_config()?;
    let threshold = scenario.threshold();
    let spectrum = topo.spectral_info()?;
    let out = scenario.out_dir();

    let mut static_coupling = None;
    let lc = match scenario.variant {
        Variant::Leader => Some(leader_coupling(scenario, &topo, model.state_dim())?),
        _ => None,
    };
    if scenario.variant == Variant::Static {
        let c = match (scenario.protocol.coupling, scenario.protocol.coupling_factor) {
            (Some(c), _) => c,
            (None, factor) => factor.unwrap_or(1.0) * static_coupling_bound(&spectrum)?,
        };
        static_coupling = Some(c);
    }
    let gain = load_or_synthesize(scenario, &model)?;
    fs::create_dir_all(&out)?;

    let start = Instant::now();
    let result = match (scenario.variant, &lc, static_coupling) {
        (Variant::Static, _, Some(c)) => simulate_static(model.linear_part(), gain.feedback(), c, &topo, &cfg),
        (Variant::Leader, Some(lc), _) => simulate_leader(&model, &gain, &topo, lc, &cfg),
        _ => simulate_adaptive(&model, &gain, &topo, &cfg),
    };
    let runtime_s = start.elapsed().as_secs_f64();
    let mut summary = Summary {
        variant: scenario.variant.name(),
        achieved: false,
        final_error: None,
        error_threshold: threshold,
        weight_drift: None,
        weights_converged: None,
        runtime_s,
        lambda2: spectrum.fiedler,
        static_coupling,
        diverged: false,
        divergence_time: None,
        seed: cfg.seed,
        dt: cfg.dt,
        t_final: cfg.t_final,
    };

    let traj = match result {
        Ok(t) => t,
        Err(adaptive_consensus::Error::Divergence { time }) => {
            summary.diverged = true;
            summary.divergence_time = Some(time);
            write_json(&out.join("summary.json"), &summary)?;
            return Err(CliError::Divergence { time });
        }
        Err(e) => return Err(e.into()),
    };
    let v = verdict(&traj, threshold)?;
    summary.achieved = v.achieved;
    summary.final_error = Some(v.final_error);
    if scenario.variant != Variant::Static {
        summary.weight_drift = Some(v.weight_drift);
        summary.weights_converged = Some(v.weight_drift < WEIGHT_DRIFT_TOLERANCE);
    }

    write_file(&out.join("states.csv"), |w| Ok(write_states_csv(&traj, w)?))?;
    write_file(&out.join("weights.csv"), |w| Ok(write_weights_csv(&traj, w)?))?;
    write_file(&out.join("metrics.csv"), |w| Ok(write_metrics_csv(&traj, w)?))?;
    write_json(&out.join("summary.json"), &summary)?;
    if svg {
        write_svgs(&traj, &out)?;
    }
    Ok(summary)
}

/// Topology report: agent and edge counts, connectivity, `λ2` and the
/// static coupling bound `1/λ2` (omitted when disconnected).
pub fn spectrum(scenario: &Scenario) -> Result<String, CliError> {
    let topo = scenario.topology()?;
    let info = topo.spectral_info()?;
    let connected = topo.is_connected();
    let mut out = format!(
        "agents: {}\nedges: {}\nconnected: {connected}\nlambda2: {}\n",
        topo.n_agents(),
        topo.edges().len(),
        info.fiedler
    );
    if connected && topo.n_agents() > 1 {
        out.push_str(&format!("static_bound: {}\n", static_coupling_bound(&info)?));
    }
    Ok(out)
}
