use clap::{Args, Parser, Subcommand};
use pcm_sdre::graph::Sensor;
use pcm_sdre::harness::{self, ExperimentConfig, Mode};
use pcm_sdre::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const DEFAULT_RATES: [f64; 4] = [80.0, 10.0, 1.0, 0.2];

/// Temperature and state-of-charge estimation for phase-change thermal storage.
#[derive(Parser)]
#[command(name = "pcm-sdre", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed for synthetic measurements.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the fine truth model and write a synthetic dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the filter on a synthetic twin or a recorded dataset.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Measurement rate [S/s].
        #[arg(long)]
        rate: Option<f64>,
        /// Sensors reserved for validation, comma separated.
        #[arg(long, value_delimiter = ',')]
        withhold: Vec<String>,
        /// Recorded dataset CSV; switches to replay mode.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
    /// Every rate against every withheld set on one shared dataset.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Repeatable; defaults to 80, 10, 1 and 0.2 S/s.
        #[arg(long)]
        rate: Vec<f64>,
        /// One withheld set per occurrence (comma separated inside); defaults to tc1 and tc3.
        #[arg(long)]
        withhold: Vec<String>,
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
    },
    /// Detectability verdict and gramian evidence for the estimator model.
    CheckDetectability {
        #[command(flatten)]
        common: Common,
        /// Sensors to leave out of C, comma separated.
        #[arg(long, value_delimiter = ',')]
        withhold: Vec<String>,
    },
    /// Collect run.json files under --out and write metrics.json.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory to search for runs; defaults to --out.
        #[arg(long, value_name = "DIR")]
        runs: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn with_dataset(cfg: &mut ExperimentConfig, dataset: Option<PathBuf>) {
    if let Some(d) = dataset {
        cfg.run.mode = Mode::Replay;
        cfg.run.dataset = Some(d);
    }
}

fn parse_set(s: &str) -> Result<Vec<Sensor>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| Sensor::parse(x.trim())).collect()
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let out = out_dir(&cfg);
            let truth = harness::simulate_truth(&cfg)?;
            harness::write_truth(&out, &truth)?;
            write_config(&out, &cfg)?;
            println!("wrote {} rows to {}", truth.dataset.len(), out.join("dataset.csv").display());
        }
        Command::Estimate { common, rate, withhold, dataset } => {
            let mut cfg = load(&common)?;
            if let Some(r) = rate {
                cfg.estimator.rate_S_per_s = r;
            }
            if !withhold.is_empty() {
                cfg.estimator.withhold = withhold;
            }
            with_dataset(&mut cfg, dataset);
            cfg.validate()?;
            let out = out_dir(&cfg);
            let bundle = harness::run_case_study(&cfg)?;
            if let Some(t) = &bundle.truth {
                harness::write_truth(&out, t)?;
            }
            harness::write_run(&out, &bundle.run)?;
            write_config(&out, &cfg)?;
            harness::write_report(&out, std::slice::from_ref(&bundle.run.metrics))?;
            summarize(&bundle.run.metrics);
        }
        Command::Sweep { common, rate, withhold, dataset } => {
            let mut cfg = load(&common)?;
            with_dataset(&mut cfg, dataset);
            cfg.validate()?;
            let rates = if rate.is_empty() { DEFAULT_RATES.to_vec() } else { rate };
            let sets = if withhold.is_empty() {
                vec![vec![Sensor::Tc1], vec![Sensor::Tc3]]
            } else {
                withhold.iter().map(|s| parse_set(s)).collect::<Result<_>>()?
            };
            let out = out_dir(&cfg);
            let (truth, runs) = harness::sweep(&cfg, &rates, &sets)?;
            if let Some(t) = &truth {
                harness::write_truth(&out.join("truth"), t)?;
            }
            for r in &runs {
                harness::write_run(&out.join(&r.metrics.label), r)?;
            }
            write_config(&out, &cfg)?;
            let metrics: Vec<_> = runs.iter().map(|r| r.metrics.clone()).collect();
            let report = harness::write_report(&out, &metrics)?;
            for m in &report.runs {
                summarize(m);
            }
        }
        Command::CheckDetectability { common, withhold } => {
            let mut cfg = load(&common)?;
            if !withhold.is_empty() {
                cfg.estimator.withhold = withhold;
            }
            cfg.validate()?;
            let sensors = cfg.estimator_sensors()?;
            let rep = harness::detectability(&cfg)?;
            let json = serde_json::json!({
                "sensors": sensors.iter().map(|s| s.name()).collect::<Vec<_>>(),
                "detectable": rep.detectable,
                "connected": rep.connected,
                "c_rowsum_ok": rep.c_rowsum_ok,
                "components": rep.components,
                "gramian_lower_bound": rep.gramian_lower_bound(),
                "gramian_consensus": rep.gramian_consensus,
                "gramian_min_offspan": rep.gramian_min_offspan,
                "null_direction": rep.null_direction.as_ref().map(|z| z.iter().copied().collect::<Vec<f64>>()),
            });
            if let Some(out) = &cfg.run.out_dir {
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join("detectability.json"), serde_json::to_string_pretty(&json)? + "\n")?;
            }
            println!("{}", if rep.detectable { "detectable" } else { "not detectable" });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Report { common, runs } => {
            let cfg = load(&common)?;
            let out = out_dir(&cfg);
            let src = runs.unwrap_or_else(|| out.clone());
            let found = harness::collect_runs(&src)?;
            let report = harness::write_report(&out, &found)?;
            println!("{} runs -> {}", report.runs.len(), out.join("metrics.json").display());
        }
    }
    Ok(())
}

fn summarize(m: &harness::RunMetrics) {
    let cv: Vec<String> = m.e_rms_cv.iter().map(|(k, v)| format!("{k}={:.4}", v.e_rms_K)).collect();
    let soc = m.soc_error_max_abs.map(|v| format!(" max|soc err|={v:.4}")).unwrap_or_default();
    println!("{}: e_rms [K] {}{}", m.label, cv.join(" "), soc);
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() {
        2
    } else {
        3
    }
}
