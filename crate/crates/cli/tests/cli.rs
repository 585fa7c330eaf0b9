use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adaptive_consensus::io::GainDocument;
use nalgebra::DMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn consensus(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consensus")).args(args).current_dir(cwd).output().unwrap()
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MANIPULATOR: &str = r#"
variant = "adaptive-nonlinear"
out = "manip"

[model]
benchmark = "manipulator"

[topology]
family = "benchmark"
"#;

#[test]
fn synth_manipulator_reports_negative_margin() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(dir.path(), "m.toml", MANIPULATOR);
    let o = consensus(&["synth", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let report = read_json(&dir.path().join("manip/synth_report.json"));
    assert_eq!(report["feasible"], true);
    assert!(report["block_max_eig"].as_f64().unwrap() < -1e-8);
    assert_eq!(report["gamma_residual"].as_f64().unwrap(), 0.0);

    // Re-verify from the written gain with an independent eigensolve.
    let doc = GainDocument::from_json(&fs::read_to_string(dir.path().join("manip/gain.json")).unwrap()).unwrap();
    let GainDocument::Lipschitz { q, tau, t_diag, .. } = doc else { panic!("expected a Lipschitz gain") };
    let q = q.to_matrix().unwrap();
    let m = adaptive_consensus::dynamics::manipulator_model();
    let (a, b) = (m.linear().a(), m.linear().b());
    let t = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t_diag));
    let top = a * &q + &q * a.transpose() - b * b.transpose() * tau + &t * m.gamma().powi(2);
    let mut blk = DMatrix::zeros(8, 8);
    blk.view_mut((0, 0), (4, 4)).copy_from(&top);
    blk.view_mut((0, 4), (4, 4)).copy_from(&q);
    blk.view_mut((4, 0), (4, 4)).copy_from(&q);
    blk.view_mut((4, 4), (4, 4)).copy_from(&(-t));
    assert!(blk.symmetric_eigenvalues().max() <= -1e-8);
}

#[test]
fn synth_unstabilizable_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        dir.path(),
        "u.toml",
        "out = \"u\"\n[model]\na = [[1.0, 0.0], [0.0, -1.0]]\nb = [[0.0], [1.0]]\n",
    );
    let o = consensus(&["synth", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("PBH"), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("u/synth_report.json"))["feasible"], false);
}

#[test]
fn malformed_config_exits_1() {
    let dir = TempDir::new().unwrap();
    let bad = write_scenario(dir.path(), "bad.toml", "variant = \"adaptive\"\n[model\na = 1");
    for cmd in ["synth", "simulate", "spectrum"] {
        let o = consensus(&[cmd, bad.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(1), "{cmd}: {}", stderr(&o));
    }
    let ragged = write_scenario(dir.path(), "r.toml", "[model]\na = [[1.0, 2.0], [3.0]]\nb = [[1.0], [1.0]]\n");
    assert_eq!(consensus(&["synth", ragged.to_str().unwrap()], dir.path()).status.code(), Some(1));
    let missing = dir.path().join("nope.toml");
    assert_eq!(consensus(&["synth", missing.to_str().unwrap()], dir.path()).status.code(), Some(1));
    assert_eq!(consensus(&["simulate"], dir.path()).status.code(), Some(1));
    assert_eq!(consensus(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn leader_without_pins_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        dir.path(),
        "l.toml",
        "variant = \"leader\"\n[model]\na = [[0.0, 1.0], [0.0, 0.0]]\nb = [[0.0], [1.0]]\n\
         [topology]\nfamily = \"path\"\nn = 5\n[protocol]\npins = []\n",
    );
    let o = consensus(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pins"));
}

#[test]
fn demo_manipulator_reaches_consensus() {
    let dir = TempDir::new().unwrap();
    let o = consensus(&["demo", "--out", "d", "--svg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("d/summary.json"));
    assert_eq!(summary["achieved"], true);
    assert!(summary["weight_drift"].as_f64().unwrap() < 1e-3);

    let states = fs::read_to_string(dir.path().join("d/states.csv")).unwrap();
    let header = states.lines().next().unwrap();
    let expected: Vec<String> = std::iter::once("time".to_string())
        .chain((0..8).flat_map(|i| (0..4).map(move |k| format!("x{i}_{k}"))))
        .collect();
    assert_eq!(header, expected.join(","));
    let weights = fs::read_to_string(dir.path().join("d/weights.csv")).unwrap();
    assert!(weights.starts_with("time,c_0_1,c_0_4,c_0_7,c_1_2,c_1_5,"));

    for name in ["state_0.svg", "state_3.svg", "weights.svg"] {
        let svg = fs::read_to_string(dir.path().join("d").join(name)).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), svg.matches("stroke-width=\"1.2\"").count());
    }
}

#[test]
fn static_below_bound_on_unstable_scalar_fails() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        dir.path(),
        "s.toml",
        "variant = \"static\"\nout = \"s\"\n[model]\na = [[1.0]]\nb = [[1.0]]\n\
         [topology]\nfamily = \"ring\"\nn = 8\n[protocol]\ncoupling_factor = 0.3\n[sim]\nt_final = 10.0\n",
    );
    let o = consensus(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("s/summary.json"));
    assert_eq!(summary["achieved"], false);
    // The slowest disagreement mode grows at 1 − 0.3(1 + √2) > 0.
    assert!(summary["final_error"].as_f64().unwrap() > 1.0);

    let o = consensus(&["demo", "static", "--out", "s2", "--t-final", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("s2/summary.json"))["achieved"], true);
}

#[test]
fn leader_demo_tracks() {
    let dir = TempDir::new().unwrap();
    let o = consensus(&["demo", "leader", "--out", "l"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = fs::read_to_string(dir.path().join("l/metrics.csv")).unwrap();
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    let last: Vec<f64> = metrics.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let tracking: Vec<f64> =
        header.iter().zip(&last).filter(|(h, _)| h.starts_with("tracking_")).map(|(_, v)| *v).collect();
    assert_eq!(tracking.len(), 5);
    assert!(tracking.iter().all(|&e| e <= 1e-3), "{tracking:?}");
    assert!(fs::read_to_string(dir.path().join("l/weights.csv")).unwrap().lines().next().unwrap().ends_with(",c0_4"));
}

#[test]
fn divergence_exits_3_with_time() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        dir.path(),
        "d.toml",
        "variant = \"static\"\nout = \"d\"\n[model]\na = [[100.0]]\nb = [[1.0]]\n\
         [topology]\nfamily = \"path\"\nn = 3\n[protocol]\ncoupling = 0.0\n[sim]\nt_final = 10.0\n",
    );
    let o = consensus(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("d/summary.json"));
    assert_eq!(summary["diverged"], true);
    let t = summary["divergence_time"].as_f64().unwrap();
    // |x| passes f64::MAX near t = ln(1.8e308)/100 ≈ 7.1.
    assert!((6.5..7.5).contains(&t), "{t}");
}

#[test]
fn spectrum_reports() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, topo: &str| {
        let path = write_scenario(dir.path(), name, &format!("[topology]\n{topo}\n"));
        let o = consensus(&["spectrum", path.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    let field = |report: &str, key: &str| -> Option<f64> {
        report.lines().find_map(|l| l.strip_prefix(&format!("{key}: ")).map(|v| v.parse().unwrap()))
    };

    let k8 = run("k.toml", "family = \"complete\"\nn = 8");
    assert!((field(&k8, "lambda2").unwrap() - 8.0).abs() < 1e-12);
    assert!((field(&k8, "static_bound").unwrap() - 0.125).abs() < 1e-12);
    assert!(k8.contains("edges: 28") && k8.contains("connected: true"));

    let ring = run("r.toml", "family = \"ring\"\nn = 8");
    let oracle = 2.0 * (1.0 - (std::f64::consts::PI / 4.0).cos());
    assert!((field(&ring, "lambda2").unwrap() - oracle).abs() < 1e-9);
    assert!((field(&ring, "lambda2").unwrap() - 0.585786).abs() < 1e-6);

    let split = run("s.toml", "n = 4\nedges = [[0, 1], [2, 3]]");
    assert!(split.contains("connected: false"));
    assert!(field(&split, "static_bound").is_none());
}

#[test]
fn csv_output_is_deterministic_and_seeded() {
    let dir = TempDir::new().unwrap();
    let path = write_scenario(
        dir.path(),
        "a.toml",
        "variant = \"adaptive\"\n[model]\na = [[0.0, 1.0], [-1.0, 0.0]]\nb = [[0.0], [1.0]]\n\
         [topology]\nfamily = \"star\"\nn = 5\n[sim]\nt_final = 5.0\nseed = 9\n",
    );
    let p = path.to_str().unwrap();
    for out in ["r1", "r2"] {
        assert_eq!(consensus(&["simulate", p, "--out", out], dir.path()).status.code(), Some(0));
    }
    assert_eq!(consensus(&["simulate", p, "--out", "r3", "--seed", "10"], dir.path()).status.code(), Some(0));
    for file in ["states.csv", "weights.csv", "metrics.csv"] {
        let r1 = fs::read(dir.path().join("r1").join(file)).unwrap();
        let r2 = fs::read(dir.path().join("r2").join(file)).unwrap();
        assert_eq!(r1, r2, "{file}");
    }
    assert_ne!(
        fs::read(dir.path().join("r1/states.csv")).unwrap(),
        fs::read(dir.path().join("r3/states.csv")).unwrap()
    );
    assert_eq!(read_json(&dir.path().join("r3/summary.json"))["seed"], 10);
}

#[test]
fn gain_file_is_reused() {
    let dir = TempDir::new().unwrap();
    let base = "variant = \"adaptive\"\nout = \"g\"\n[model]\na = [[0.0, 1.0], [0.0, 0.0]]\nb = [[0.0], [1.0]]\n\
                [topology]\nfamily = \"ring\"\nn = 4\n[sim]\nt_final = 2.0\n";
    let path = write_scenario(dir.path(), "g.toml", base);
    assert_eq!(consensus(&["synth", path.to_str().unwrap()], dir.path()).status.code(), Some(0));
    let reuse =
        write_scenario(dir.path(), "g2.toml", &base.replace("[sim]", "[protocol]\ngain_file = \"g/gain.json\"\n[sim]"));
    let o = consensus(&["simulate", reuse.to_str().unwrap(), "--out", "g2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = consensus(&["simulate", path.to_str().unwrap(), "--out", "g3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(dir.path().join("g2/states.csv")).unwrap(),
        fs::read(dir.path().join("g3/states.csv")).unwrap()
    );
}
