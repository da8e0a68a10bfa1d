use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn infoprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infoprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("infoprop-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn show_lists_shipped_scenarios() {
    let o = infoprop(&["show"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["grid_gamma1", "density_a5", "event_9x9", "us101_standin"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
    let o = infoprop(&["show", "grid_gamma3"]);
    assert_eq!(o.status.code(), Some(0));
    let cfg: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg["gamma"], 3.0);
}

#[test]
fn build_graph_writes_the_grid() {
    let dir = scratch("graph");
    let path = dir.join("grid.json");
    let o = infoprop(&[
        "--out",
        path.to_str().unwrap(),
        "build-graph",
        "--cbd",
        "2,2,3,3",
        "--beta",
        "3",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let g = infoprop::ClusterGraph::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(g.len(), 120);
    assert_eq!(g.cbd_clusters().len(), 8);
    assert_eq!(
        infoprop(&["build-graph", "--cbd", "2,2,3"]).status.code(),
        Some(2)
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = scratch("bad");
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"name": "x", "unknown_field": 1}"#).unwrap();
    assert_eq!(
        infoprop(&["--config", bad.to_str().unwrap(), "integrate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        infoprop(&["--config", "no_such_scenario", "integrate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(infoprop(&["integrate"]).status.code(), Some(2));
    assert_eq!(
        infoprop(&["--config", "grid_gamma1", "integrate", "--horizon", "-5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = scratch("missing");
    let o = infoprop(&["analyze", dir.join("absent.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    // a bound the run cannot meet
    let out = dir.join("run");
    let o = infoprop(&[
        "--config",
        "grid_gamma1",
        "--out",
        out.to_str().unwrap(),
        "validate",
        "--runs",
        "2",
        "--horizon",
        "40",
        "--tolerance",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL"));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = scratch("det");
    let run = |sub: &str, seed: &str| {
        let out = dir.join(sub);
        let o = infoprop(&[
            "--config",
            "grid_gamma3",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--threads",
            "1",
            "simulate",
            "--runs",
            "3",
            "--horizon",
            "30",
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        fs::read_to_string(out.join("ctmc_mean.csv")).unwrap()
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn integrate_then_analyze() {
    let dir = scratch("analyze");
    let out = dir.join("ode");
    let o = infoprop(&[
        "--config",
        "grid_gamma1",
        "--out",
        out.to_str().unwrap(),
        "integrate",
        "--horizon",
        "50",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let metrics: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let final_rho = metrics["final_rho_ode"].as_f64().unwrap();
    let series = out.join("ode.csv");
    assert!(series.exists());
    let o = infoprop(&[
        "analyze",
        series.to_str().unwrap(),
        "--against",
        series.to_str().unwrap(),
        "--total",
        "12000",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["samples"], 51);
    assert_eq!(report["max_deviation"], 0.0);
    assert!((report["final_rho"].as_f64().unwrap() - final_rho).abs() < 1e-9);
}

#[test]
fn extract_rates_from_written_sequences() {
    use infoprop::topology::build_chain;
    use infoprop::trajectory::{synth_trajectories, write_sequences};
    use infoprop::{MobilityModel, RoutingTable};

    let dir = scratch("extract");
    let g = build_chain(6, 0.0).unwrap();
    let graph = dir.join("chain.json");
    fs::write(&graph, g.to_json().unwrap()).unwrap();
    let seqs = synth_trajectories(
        &g,
        &MobilityModel::uniform(0.4),
        &RoutingTable::uniform(&g),
        &[50; 6],
        100.0,
        1,
    )
    .unwrap();
    let seq_path = dir.join("visits.csv");
    write_sequences(fs::File::create(&seq_path).unwrap(), &seqs).unwrap();
    let o = infoprop(&[
        "extract-rates",
        "--graph",
        graph.to_str().unwrap(),
        "--sequences",
        seq_path.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for l in table["lambda"].as_array().unwrap() {
        assert!((l.as_f64().unwrap() - 0.4).abs() < 0.04, "{l}");
    }
}

#[test]
fn benchmark_reports_each_size() {
    let o = infoprop(&["benchmark", "--clusters", "10,40"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(
        lines[0],
        "clusters,seconds,accepted_steps,evaluations,final_rho"
    );
    assert!(lines[1].starts_with("10,") && lines[2].starts_with("40,"));
}
