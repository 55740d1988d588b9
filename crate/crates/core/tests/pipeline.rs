mod common;

use pcm_sdre::harness::{self, build_report, collect_runs, load_dataset, write_report, ExperimentConfig, Mode, DATASET_HEADER};
use pcm_sdre::Error;

fn short_config() -> ExperimentConfig {
    let mut cfg = common::config();
    cfg.simulation.duration_s = 20.0;
    cfg
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = short_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let truth = harness::simulate_truth(&cfg).unwrap();
        harness::write_truth(d.path(), &truth).unwrap();
        let run = harness::estimate(&cfg, &truth.dataset, Some(&truth)).unwrap();
        harness::write_run(d.path(), &run).unwrap();
    }
    for name in ["dataset.csv", "truth.csv", "trajectory.csv", "errors.csv", "run.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
    }

    let mut other = cfg.clone();
    other.run.seed += 1;
    let a = harness::simulate_truth(&cfg).unwrap();
    let b = harness::simulate_truth(&other).unwrap();
    assert_ne!(a.dataset, b.dataset);
}

#[test]
fn dataset_has_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let truth = harness::simulate_truth(&short_config()).unwrap();
    harness::write_truth(dir.path(), &truth).unwrap();
    let text = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, DATASET_HEADER.join(","));
    assert_eq!(header.split(',').next(), Some("t_s"));
    assert_eq!(header.split(',').next_back(), Some("tc4b_K"));
}

#[test]
fn withholding_every_sensor_is_refused() {
    let mut cfg = short_config();
    cfg.estimator.withhold = cfg.estimator.sensors.clone();
    let err = harness::run_case_study(&cfg).unwrap_err();
    assert!(matches!(err, Error::Refused(_)), "{err}");
    assert!(err.is_config_error());
}

#[test]
fn replay_matches_the_twin_estimate() {
    let cfg = short_config();
    let dir = tempfile::tempdir().unwrap();
    let truth = harness::simulate_truth(&cfg).unwrap();
    harness::write_truth(dir.path(), &truth).unwrap();
    let twin = harness::estimate(&cfg, &truth.dataset, Some(&truth)).unwrap();

    let mut replay = cfg.clone();
    replay.run.mode = Mode::Replay;
    replay.run.dataset = Some(dir.path().join("dataset.csv"));
    let loaded = load_dataset(replay.run.dataset.as_ref().unwrap()).unwrap();
    assert_eq!(loaded.len(), truth.dataset.len());
    let bundle = harness::run_case_study(&replay).unwrap();
    assert!(bundle.truth.is_none() && bundle.run.e_rms.is_none());
    let worst = bundle.run.trajectory.x_hat.iter().zip(&twin.trajectory.x_hat).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "replay differs from twin by {worst} K");
}

#[test]
fn malformed_dataset_reports_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    let mut text = DATASET_HEADER.join(",");
    text.push_str("\n0,0.1,290,290,290,290,290,290,290\n0.0125,0.1,290,oops,290,290,290,290,290\n");
    std::fs::write(&path, text).unwrap();
    match load_dataset(&path) {
        Err(Error::Dataset { row, .. }) => assert_eq!(row, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn report_orders_runs_and_embeds_reference_values() {
    let cfg = short_config();
    let truth = harness::simulate_truth(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for rate in [1.0, 80.0, 10.0] {
        let mut c = cfg.clone();
        c.estimator.rate_S_per_s = rate;
        c.estimator.withhold = vec!["tc3".into()];
        let run = harness::estimate(&c, &truth.dataset, Some(&truth)).unwrap();
        harness::write_run(&dir.path().join(&run.metrics.label), &run).unwrap();
    }
    let runs = collect_runs(dir.path()).unwrap();
    assert_eq!(runs.len(), 3);
    let report = build_report(&runs);
    let rates: Vec<f64> = report.runs.iter().map(|r| r.rate_S_per_s).collect();
    assert_eq!(rates, [80.0, 10.0, 1.0]);
    assert!(!report.reference.reproducible);
    assert_eq!(report.reference.soc_error_band, 0.02);

    write_report(dir.path(), &runs).unwrap();
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let cv1: Vec<f64> =
        json["reference"]["e_rms_cv1_tc1_withheld"].as_array().unwrap().iter().map(|row| row["e_rms_K"].as_f64().unwrap()).collect();
    assert_eq!(cv1, [0.2436, 0.2617, 0.3811, 0.7526]);
    assert!(dir.path().join("rmse_table.csv").exists());
}

#[test]
fn default_configuration_is_detectable() {
    let rep = harness::detectability(&common::config()).unwrap();
    assert!(rep.detectable && rep.connected && rep.c_rowsum_ok);
    assert_eq!(rep.components, 1);
    assert!(rep.null_direction.is_none());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::load(&dir.join("default.toml")).unwrap();
    assert_eq!(default, ExperimentConfig::default());
    let exact = ExperimentConfig::load(&dir.join("exact-twin.toml")).unwrap();
    assert_eq!(exact.grid.fine_nx, exact.grid.coarse_nx);
    assert_ne!(exact.hash(), default.hash());
}
