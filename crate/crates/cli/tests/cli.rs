use std::path::Path;
use std::process::{Command, Output};

fn pcm_sdre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcm-sdre")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SHORT: &str = "[simulation]\nduration_s = 10.0\n";

#[test]
fn help_lists_every_subcommand() {
    let out = pcm_sdre(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["simulate", "estimate", "sweep", "check-detectability", "report"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn simulate_then_replay_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let sim = dir.path().join("sim");
    let out = pcm_sdre(&["simulate", "--config", &cfg, "--seed", "7", "--out", sim.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(sim.join("dataset.csv")).unwrap();
    assert!(csv.starts_with("t_s,mdot_kg_s,tc0_K,tc1_K,tc2a_K,tc2b_K,tc3_K,tc4a_K,tc4b_K"));
    assert!(sim.join("config.toml").exists());

    let runs = dir.path().join("runs");
    let replay = runs.join("replay");
    let out = pcm_sdre(&[
        "estimate",
        "--config",
        &cfg,
        "--dataset",
        sim.join("dataset.csv").to_str().unwrap(),
        "--rate",
        "1",
        "--withhold",
        "tc3",
        "--out",
        replay.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rate-1-no-tc3"));
    for f in ["trajectory.csv", "errors.csv", "run.json", "metrics.json"] {
        assert!(replay.join(f).exists(), "{f} missing");
    }

    let out = pcm_sdre(&["report", "--runs", runs.to_str().unwrap(), "--out", runs.to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(runs.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["runs"].as_array().unwrap().len(), 1);
    assert_eq!(json["reference"]["reproducible"], false);
}

#[test]
fn sweep_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let out_dir = dir.path().join("sweep");
    let out = pcm_sdre(&[
        "sweep",
        "--config",
        &cfg,
        "--rate",
        "80",
        "--rate",
        "0.2",
        "--withhold",
        "tc1,tc3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for label in ["rate-80-no-tc1-tc3", "rate-0.2-no-tc1-tc3", "truth"] {
        assert!(out_dir.join(label).is_dir(), "{label} missing");
    }
    assert!(out_dir.join("metrics.json").exists());
}

#[test]
fn detectability_verdicts() {
    let out = pcm_sdre(&["check-detectability", "--withhold", "tc1,tc2,tc4"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().next(), Some("detectable"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.toml", "[grid]\ncoarse_nx = 3\nbogus = 1\n");
    let negative = write(dir.path(), "negative.toml", "[estimator]\ntc_variance_K2 = -1.0\n");
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--config", &unknown],
        vec!["estimate", "--config", &negative],
        vec!["estimate", "--config", "/nonexistent/config.toml"],
        vec!["estimate", "--withhold", "tc1,tc2,tc3,tc4"],
        vec!["estimate", "--withhold", "tc9"],
        vec!["check-detectability", "--withhold", "tc1,tc2,tc3,tc4"],
        vec!["estimate", "--dataset", "/nonexistent/data.csv"],
    ];
    for args in cases {
        let out = pcm_sdre(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let stiff = write(dir.path(), "stiff.toml", "[simulation]\nduration_s = 5.0\nrel_tol = 1e-30\nabs_tol_K = 1e-30\n");
    let runaway = write(
        dir.path(),
        "runaway.toml",
        "[simulation]\nduration_s = 5.0\n[estimator]\ntc_variance_K2 = 1e-300\ninitial_covariance_K2 = 1e300\n",
    );
    for cfg in [stiff, runaway] {
        let out_dir = dir.path().join("out");
        let out = pcm_sdre(&["estimate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(3), "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
