//! Experiment pipelines: twin-model truth generation, filter runs on a
//! dataset (synthetic or recorded), sensor withholding and rate sweeps.

use super::config::{ExperimentConfig, Mode};
use super::dataset::{load_dataset, Dataset, TimeSeries};
use super::report::{self, RunMetrics};
use crate::error::{Error, Result};
use crate::filter::{run_filter_with, FilterSetup, FilterState, NoiseModel, Trajectory, UpdateInfo};
use crate::graph::{check_detectability, DetectabilityReport, Sensor};
use crate::material::{state_of_charge, total_enthalpy};
use crate::ode::OdeStats;
use crate::simulate::{
    integrate_streaming, synthesize_measurements, uniform_times, InputProfile, MeasurementSpec, Projection, StateSeries,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::Path;

const TC0_STREAM: u64 = 0x7c0;

/// Fine-grid truth reduced to the estimator grid, with synthetic measurements.
#[derive(Debug, Clone)]
pub struct TruthRun {
    /// Noisy thermocouples, exact flow, at the simulation sample rate.
    pub dataset: Dataset,
    /// Projected truth on the prediction grid.
    pub coarse: StateSeries<f64>,
    /// SOC of the fine-grid truth at the same instants.
    pub soc: Vec<f64>,
    pub stats: OdeStats,
}

/// Integrates the fine model under the configured profile, projects every
/// prediction instant onto the coarse grid and synthesizes the dataset.
pub fn simulate_truth(cfg: &ExperimentConfig) -> Result<TruthRun> {
    let model = cfg.truth_model()?;
    let fine = model.grid().clone();
    let coarse_grid = cfg.coarse_grid()?;
    let proj = Projection::new(&fine, &coarse_grid)?;
    let pcm = cfg.pcm_params()?;
    let soc_fine = cfg.soc_params(&fine)?;
    let sim = &cfg.simulation;
    let dt = cfg.estimator.dt_predict_s;
    let times = uniform_times(0.0, sim.duration_s, 1.0 / sim.sample_rate_S_per_s)?;
    let clean = cfg.profile()?.sample(&times);
    // the recorded inlet reading drives both the truth and the estimator
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed.wrapping_add(TC0_STREAM));
    let tc0: Vec<f64> = clean
        .t_in
        .iter()
        .map(|t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            t + sim.noise_std_K * z
        })
        .collect();
    let recorded = InputProfile::new(times.clone(), clean.mdot.clone(), tc0.clone())?;
    let x0 = DVector::from_element(fine.n(), sim.initial_temperature_K);

    let mut coarse = StateSeries { t: Vec::new(), x: Vec::new() };
    let mut soc = Vec::new();
    // fluid leaving the last fine cell, which is what the outlet thermocouple sees
    let outlet_cell = fine.nx() - 1;
    let mut outlet = Vec::new();
    let stats = integrate_streaming(
        &model,
        x0,
        &recorded,
        cfg.ode()?,
        (0.0, sim.duration_s),
        dt,
        |t, x| {
            coarse.t.push(t);
            coarse.x.push(proj.apply(x)?);
            outlet.push(x[outlet_cell]);
            soc.push(state_of_charge(total_enthalpy(x, &fine, &pcm)?, &soc_fine)?);
            Ok(())
        },
        |_, _| {},
    )?;

    let spec = MeasurementSpec::thermocouples(&coarse_grid, sim.noise_std_K, sim.sample_rate_S_per_s, cfg.run.seed);
    let mut sensed = coarse.clone();
    let tc1_cell = Sensor::Tc1.default_cell(&coarse_grid);
    for (x, o) in sensed.x.iter_mut().zip(&outlet) {
        x[tc1_cell] = *o;
    }
    let raw = synthesize_measurements(&sensed, &spec)?;
    if raw.t.len() != times.len() {
        return Err(Error::config("simulation sample rate must match the prediction grid"));
    }
    let ch = |name: &str| raw.channel(name).expect("default thermocouples present");
    let dataset = Dataset::from_channels(times, clean.mdot, tc0, [ch("tc1"), ch("tc2a"), ch("tc2b"), ch("tc3"), ch("tc4a"), ch("tc4b")])?;
    log::info!("truth: {} rows, {} accepted / {} rejected steps", dataset.len(), stats.accepted, stats.rejected);
    Ok(TruthRun { dataset, coarse, soc, stats })
}

/// One filter run and its scores.
#[derive(Debug, Clone)]
pub struct EstimateRun {
    pub trajectory: Trajectory<f64>,
    pub metrics: RunMetrics,
    /// Per-step RMS error over cells against the projected truth.
    pub e_rms: Option<Vec<f64>>,
    /// Per-step SOC error against the fine-grid truth.
    pub soc_error: Option<Vec<f64>>,
    /// `x_hat_j - y_j` at every dataset row for each of TC1..TC4.
    pub cv_errors: Vec<(Sensor, Vec<f64>)>,
    pub soc_true: Option<Vec<f64>>,
}

/// Runs the filter on `dataset` with the configured rate and sensors. The
/// filter only sees the rows of the estimator sensors; withheld channels are
/// read afterwards for scoring.
pub fn estimate(cfg: &ExperimentConfig, dataset: &Dataset, truth: Option<&TruthRun>) -> Result<EstimateRun> {
    estimate_observed(cfg, dataset, truth, |_, _| {})
}

/// [`estimate`] with a callback on every filter step.
pub fn estimate_observed<F>(cfg: &ExperimentConfig, dataset: &Dataset, truth: Option<&TruthRun>, observe: F) -> Result<EstimateRun>
where
    F: FnMut(&FilterState<f64>, Option<&UpdateInfo<f64>>),
{
    let sensors = cfg.estimator_sensors().map_err(|e| Error::Refused(e.to_string()))?;
    let sys = cfg.estimator_system()?;
    let grid = sys.grid().clone();
    let schedule = cfg.schedule()?;
    let dt = dataset.series().uniform_interval(0.01)?;
    if (dt - schedule.dt_predict).abs() > 0.01 * schedule.dt_predict {
        return Err(Error::config(format!("dataset interval {dt} s does not match dt_predict {} s", schedule.dt_predict)));
    }
    let e = &cfg.estimator;
    let noise = NoiseModel::thermocouples(sys.n(), sys.sensors(), e.tc_variance_K2, e.process_noise_K2)?;
    let soc = cfg.soc_params(&grid)?;
    let setup = FilterSetup { sys: &sys, noise: &noise, soc: &soc, schedule, missing: cfg.missing_policy() };
    let inputs = if e.inputs_at_sample_rate { dataset.held_inputs(schedule.update_every)? } else { dataset.inputs() };
    let meas = dataset.decimate(schedule.update_every)?.measurements(&sensors);
    let x0 = e.initial_temperature_K.unwrap_or(dataset.tc0()[0]);
    let initial = FilterState::uniform(sys.n(), x0, e.initial_covariance_K2, dataset.t()[0])?;
    let trajectory = run_filter_with(initial, &setup, &inputs, &meas, observe)?;

    let cv_errors: Vec<(Sensor, Vec<f64>)> = Sensor::ALL
        .iter()
        .map(|&s| {
            let cell = s.default_cell(&grid);
            let y = dataset.output(s);
            (s, trajectory.x_hat.iter().zip(&y).map(|(x, y)| x[cell] - y).collect())
        })
        .collect();

    let (e_rms, soc_error, soc_true) = match truth {
        Some(tr) => {
            if tr.coarse.t.len() != trajectory.t.len() {
                return Err(Error::input("truth and estimate are on different time grids"));
            }
            let e_rms = crate::simulate::rmse_over_cells(&trajectory.x_hat, &tr.coarse.x)?;
            let soc_err: Vec<f64> = trajectory.soc.iter().zip(&tr.soc).map(|(a, b)| a - b).collect();
            (Some(e_rms), Some(soc_err), Some(tr.soc.clone()))
        }
        None => (None, None, None),
    };
    let metrics = report::run_metrics(cfg, &trajectory, &cv_errors, e_rms.as_deref(), soc_error.as_deref())?;
    log::info!("{}: {} steps, {} jitter events", metrics.label, metrics.steps, metrics.covariance.jitter_events);
    Ok(EstimateRun { trajectory, metrics, e_rms, soc_error, cv_errors, soc_true })
}

/// Result of a case study: the truth (twin mode) and the filter run.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub truth: Option<TruthRun>,
    pub run: EstimateRun,
}

/// Executes the configured pipeline: twin-sim generates the truth first;
/// replay filters the recorded dataset directly.
pub fn run_case_study(cfg: &ExperimentConfig) -> Result<ResultBundle> {
    cfg.estimator_sensors().map_err(|e| Error::Refused(e.to_string()))?;
    match cfg.run.mode {
        Mode::TwinSim => {
            let truth = simulate_truth(cfg)?;
            let run = estimate(cfg, &truth.dataset, Some(&truth))?;
            Ok(ResultBundle { truth: Some(truth), run })
        }
        Mode::Replay => {
            let path = cfg.run.dataset.as_ref().ok_or_else(|| Error::config("replay mode needs run.dataset"))?;
            let dataset = load_dataset(path)?;
            let run = estimate(cfg, &dataset, None)?;
            Ok(ResultBundle { truth: None, run })
        }
    }
}

/// Runs every `(rate, withheld set)` combination on one shared dataset, in
/// parallel. Results come back in input order.
pub fn sweep(cfg: &ExperimentConfig, rates: &[f64], withheld_sets: &[Vec<Sensor>]) -> Result<(Option<TruthRun>, Vec<EstimateRun>)> {
    let (truth, dataset) = match cfg.run.mode {
        Mode::TwinSim => {
            let t = simulate_truth(cfg)?;
            let d = t.dataset.clone();
            (Some(t), d)
        }
        Mode::Replay => {
            let path = cfg.run.dataset.as_ref().ok_or_else(|| Error::config("replay mode needs run.dataset"))?;
            (None, load_dataset(path)?)
        }
    };
    let mut configs = Vec::new();
    for withheld in withheld_sets {
        for &rate in rates {
            let mut c = cfg.clone();
            c.estimator.rate_S_per_s = rate;
            c.estimator.withhold = withheld.iter().map(|s| s.name().to_string()).collect();
            c.validate()?;
            configs.push(c);
        }
    }
    let results: Vec<Result<EstimateRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let (d, t) = (&dataset, truth.as_ref());
                scope.spawn(move || estimate(c, d, t))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((truth, runs))
}

/// Samples for the detectability check: uniform states at the SOC limits and
/// the phase-change temperature, plus a graded state across the latent band.
pub fn detectability(cfg: &ExperimentConfig) -> Result<DetectabilityReport<f64>> {
    let sys = cfg.estimator_system()?;
    let n = sys.n();
    let p = cfg.pcm_params()?;
    let mut samples: Vec<DVector<f64>> =
        [cfg.soc.t_min_K, p.t_pc(), cfg.soc.t_max_K].iter().map(|&t| DVector::from_element(n, t)).collect();
    samples.push(DVector::from_fn(n, |i, _| cfg.soc.t_min_K + (cfg.soc.t_max_K - cfg.soc.t_min_K) * i as f64 / (n - 1).max(1) as f64));
    check_detectability(&sys, &samples, cfg.estimator.dt_predict_s, n)
}

/// Writes the truth trajectory (projected states and fine SOC) and dataset.
pub fn write_truth(dir: &Path, truth: &TruthRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    truth.dataset.save(&dir.join("dataset.csv"))?;
    let n = truth.coarse.x.first().map_or(0, |x| x.len());
    let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}_K")).collect();
    names.push("soc".into());
    let mut columns: Vec<Vec<f64>> = (0..n).map(|i| truth.coarse.x.iter().map(|x| x[i]).collect()).collect();
    columns.push(truth.soc.clone());
    TimeSeries::new(truth.coarse.t.clone(), names, columns)?.write_csv(&dir.join("truth.csv"), "t_s")
}

/// Writes `trajectory.csv`, `errors.csv` and `run.json` for one run.
pub fn write_run(dir: &Path, run: &EstimateRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tr = &run.trajectory;
    let n = tr.x_hat.first().map_or(0, |x| x.len());
    {
        let mut w = csv::Writer::from_path(dir.join("trajectory.csv"))?;
        let mut header = vec!["t_s".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}_K")));
        header.extend(["soc".to_string(), "trace_P_K2".to_string(), "innovation_norm_K".to_string()]);
        w.write_record(&header)?;
        for k in 0..tr.t.len() {
            let mut row = vec![tr.t[k].to_string()];
            row.extend(tr.x_hat[k].iter().map(|v| v.to_string()));
            row.push(tr.soc[k].to_string());
            row.push(tr.trace_p[k].to_string());
            row.push(tr.innovation_norm[k].map(|v| v.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    {
        let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
        let mut header = vec!["t_s".to_string()];
        if run.e_rms.is_some() {
            header.extend(["e_rms_K".to_string(), "soc_true".to_string(), "soc_error".to_string()]);
        }
        header.extend(run.cv_errors.iter().map(|(s, _)| format!("e_cv_{}_K", s.name())));
        w.write_record(&header)?;
        for k in 0..tr.t.len() {
            let mut row = vec![tr.t[k].to_string()];
            if let (Some(e), Some(st), Some(se)) = (&run.e_rms, &run.soc_true, &run.soc_error) {
                row.extend([e[k].to_string(), st[k].to_string(), se[k].to_string()]);
            }
            row.extend(run.cv_errors.iter().map(|(_, e)| e[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run.metrics)? + "\n")?;
    Ok(())
}
