//! Experiment configuration: a single TOML file whose keys carry their units.
//! Every key has a default, so an empty file is a valid configuration.

use crate::error::{Error, Result};
use crate::filter::{MissingPolicy, SampleSchedule, PROCESS_NOISE, THERMOCOUPLE_VARIANCE};
use crate::graph::{LpvSystem, Sensor, SensorMap};
use crate::grid::{Conductivity, GridSpec, SolidMaterial, TesGeometry};
use crate::material::{FluidParams, PcmThermalParams, SocParams};
use crate::ode::OdeConfig;
use crate::simulate::{InputProfile, ThermalModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Module geometry and solid materials. The defaults are illustrative values
/// of the right order for a small finned-paraffin module, not measured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GeometryConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub fluid_height_m: f64,
    pub plate_thickness_m: f64,
    pub cpcm_height_m: f64,
    pub fluid_density_kg_per_m3: f64,
    pub plate_density_kg_per_m3: f64,
    pub plate_cp_J_per_kgK: f64,
    pub plate_kappa_W_per_mK: f64,
    pub cpcm_density_kg_per_m3: f64,
    pub cpcm_kappa_W_per_mK: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            length_m: 0.252,
            width_m: 0.05,
            fluid_height_m: 0.002,
            plate_thickness_m: 0.003,
            cpcm_height_m: 0.012,
            fluid_density_kg_per_m3: 1000.0,
            plate_density_kg_per_m3: 2700.0,
            plate_cp_J_per_kgK: 900.0,
            plate_kappa_W_per_mK: 200.0,
            cpcm_density_kg_per_m3: 900.0,
            cpcm_kappa_W_per_mK: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct PcmConfig {
    pub cp_sol_J_per_kgK: f64,
    pub cp_liq_J_per_kgK: f64,
    pub h_fus_J_per_kg: f64,
    pub t_pc_K: f64,
    pub delta_t_pc_K: f64,
}

impl Default for PcmConfig {
    fn default() -> Self {
        Self { cp_sol_J_per_kgK: 1800.0, cp_liq_J_per_kgK: 2100.0, h_fus_J_per_kg: 180e3, t_pc_K: 289.5, delta_t_pc_K: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct FluidConfig {
    pub cp_f_J_per_kgK: f64,
    pub u_W_per_m2K: f64,
}

impl Default for FluidConfig {
    fn default() -> Self {
        Self { cp_f_J_per_kgK: 4186.0, u_W_per_m2K: 3000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SocConfig {
    pub t_min_K: f64,
    pub t_max_K: f64,
}

impl Default for SocConfig {
    fn default() -> Self {
        Self { t_min_K: 278.0, t_max_K: 308.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub coarse_nx: usize,
    pub coarse_ny: usize,
    pub fine_nx: usize,
    pub fine_ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { coarse_nx: 3, coarse_ny: 7, fine_nx: 21, fine_ny: 22 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingMode {
    Skip,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct EstimatorConfig {
    pub dt_predict_s: f64,
    pub rate_S_per_s: f64,
    /// Sensors available to the estimator before withholding.
    pub sensors: Vec<String>,
    /// Sensors reserved for validation.
    pub withhold: Vec<String>,
    pub tc_variance_K2: f64,
    pub process_noise_K2: f64,
    pub initial_covariance_K2: f64,
    /// Initial estimate; the first inlet reading when absent.
    pub initial_temperature_K: Option<f64>,
    pub missing: MissingMode,
    /// Flow and inlet readings arrive at the measurement rate and are held
    /// between samples; when false they are used at every dataset row.
    pub inputs_at_sample_rate: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            dt_predict_s: 0.0125,
            rate_S_per_s: 10.0,
            sensors: Sensor::ALL.iter().map(|s| s.name().to_string()).collect(),
            withhold: Vec::new(),
            tc_variance_K2: THERMOCOUPLE_VARIANCE,
            process_noise_K2: PROCESS_NOISE,
            initial_covariance_K2: 1.0,
            initial_temperature_K: None,
            missing: MissingMode::Skip,
            inputs_at_sample_rate: true,
        }
    }
}

/// Truth-model integration and synthetic measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SimulationConfig {
    pub rel_tol: f64,
    pub abs_tol_K: f64,
    pub max_dt_s: f64,
    pub duration_s: f64,
    pub initial_temperature_K: f64,
    pub noise_std_K: f64,
    pub sample_rate_S_per_s: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol_K: 1e-4,
            max_dt_s: 1.0,
            duration_s: 1200.0,
            initial_temperature_K: 284.0,
            noise_std_K: THERMOCOUPLE_VARIANCE.sqrt(),
            sample_rate_S_per_s: 80.0,
        }
    }
}

/// Held inputs as `[start_s, mdot_kg_s, t_in_K]` rows; the built-in synthetic
/// profile is used when empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub segments: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TwinSim,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    /// Output directory; not part of the configuration hash.
    pub out_dir: Option<PathBuf>,
    /// Start of the scoring window for summary statistics [s].
    pub burn_in_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { mode: Mode::TwinSim, seed: 1, dataset: None, out_dir: None, burn_in_s: 60.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub pcm: PcmConfig,
    pub fluid: FluidConfig,
    pub soc: SocConfig,
    pub grid: GridConfig,
    pub estimator: EstimatorConfig,
    pub simulation: SimulationConfig,
    pub profile: ProfileConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config serialization failed: {e}")))
    }

    /// SHA-256 of the canonical JSON form (sorted keys, parsed values), so
    /// formatting, key order and `1` versus `1.0` do not matter.
    pub fn hash(&self) -> String {
        let mut copy = self.clone();
        copy.run.out_dir = None;
        let value = serde_json::to_value(&copy).expect("config serializes to JSON");
        let canonical = serde_json::to_string(&value).expect("JSON value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.pcm_params()?;
        self.fluid_params()?;
        self.estimator_sensors()?;
        self.schedule()?;
        self.ode()?;
        self.profile()?;
        let e = &self.estimator;
        let positive = [e.tc_variance_K2, e.initial_covariance_K2, self.simulation.sample_rate_S_per_s, self.simulation.duration_s];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("variances, sample rate and duration must be positive"));
        }
        if !(e.process_noise_K2 >= 0.0) || !(self.simulation.noise_std_K >= 0.0) || !(self.run.burn_in_s >= 0.0) {
            return Err(Error::config("process noise, measurement noise std and burn-in must be non-negative"));
        }
        if let Some(t) = e.initial_temperature_K {
            if !t.is_finite() {
                return Err(Error::config("initial temperature must be finite"));
            }
        }
        if self.run.mode == Mode::Replay && self.run.dataset.is_none() {
            return Err(Error::config("replay mode needs run.dataset"));
        }
        let g = &self.grid;
        let partitions = g.coarse_nx > 0
            && g.coarse_ny >= 3
            && g.fine_ny >= 3
            && g.fine_nx.is_multiple_of(g.coarse_nx)
            && (g.fine_ny - 2).is_multiple_of(g.coarse_ny - 2);
        if !partitions {
            return Err(Error::config(format!(
                "fine grid {}x{} does not partition the coarse grid {}x{}",
                g.fine_nx, g.fine_ny, g.coarse_nx, g.coarse_ny
            )));
        }
        SocParams::from_grid(&self.coarse_grid()?, &self.pcm_params()?, self.soc.t_min_K, self.soc.t_max_K)?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<TesGeometry<f64>> {
        let g = &self.geometry;
        let values = [
            g.length_m,
            g.width_m,
            g.fluid_height_m,
            g.plate_thickness_m,
            g.cpcm_height_m,
            g.fluid_density_kg_per_m3,
            g.plate_density_kg_per_m3,
            g.plate_cp_J_per_kgK,
            g.plate_kappa_W_per_mK,
            g.cpcm_density_kg_per_m3,
            g.cpcm_kappa_W_per_mK,
        ];
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("geometry and material values must be positive"));
        }
        Ok(TesGeometry {
            length: g.length_m,
            width: g.width_m,
            fluid_height: g.fluid_height_m,
            plate_thickness: g.plate_thickness_m,
            cpcm_height: g.cpcm_height_m,
            fluid_density: g.fluid_density_kg_per_m3,
            plate: SolidMaterial { density: g.plate_density_kg_per_m3, cp: g.plate_cp_J_per_kgK, kappa: g.plate_kappa_W_per_mK },
            cpcm_density: g.cpcm_density_kg_per_m3,
            cpcm_kappa: Conductivity::Constant(g.cpcm_kappa_W_per_mK),
        })
    }

    pub fn pcm_params(&self) -> Result<PcmThermalParams<f64>> {
        let p = &self.pcm;
        PcmThermalParams::new(p.cp_sol_J_per_kgK, p.cp_liq_J_per_kgK, p.h_fus_J_per_kg, p.t_pc_K, p.delta_t_pc_K)
    }

    pub fn fluid_params(&self) -> Result<FluidParams<f64>> {
        FluidParams::new(self.fluid.cp_f_J_per_kgK, self.fluid.u_W_per_m2K)
    }

    pub fn coarse_grid(&self) -> Result<GridSpec<f64>> {
        GridSpec::build(&self.geometry()?, self.grid.coarse_nx, self.grid.coarse_ny)
    }

    pub fn fine_grid(&self) -> Result<GridSpec<f64>> {
        GridSpec::build(&self.geometry()?, self.grid.fine_nx, self.grid.fine_ny)
    }

    pub fn soc_params(&self, grid: &GridSpec<f64>) -> Result<SocParams<f64>> {
        SocParams::from_grid(grid, &self.pcm_params()?, self.soc.t_min_K, self.soc.t_max_K)
    }

    fn parse_sensors(names: &[String]) -> Result<Vec<Sensor>> {
        let mut out = Vec::new();
        for n in names {
            let s = Sensor::parse(n)?;
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn withheld(&self) -> Result<Vec<Sensor>> {
        Self::parse_sensors(&self.estimator.withhold)
    }

    /// Configured sensors minus the withheld ones; never empty.
    pub fn estimator_sensors(&self) -> Result<Vec<Sensor>> {
        let all = Self::parse_sensors(&self.estimator.sensors)?;
        let withheld = self.withheld()?;
        let used: Vec<Sensor> = all.into_iter().filter(|s| !withheld.contains(s)).collect();
        if used.is_empty() {
            return Err(Error::config("the estimator needs at least one measured output; detectability is not guaranteed otherwise"));
        }
        Ok(used)
    }

    pub fn schedule(&self) -> Result<SampleSchedule<f64>> {
        SampleSchedule::for_rate(self.estimator.dt_predict_s, self.estimator.rate_S_per_s)
    }

    pub fn missing_policy(&self) -> MissingPolicy {
        match self.estimator.missing {
            MissingMode::Skip => MissingPolicy::Skip,
            MissingMode::Abort => MissingPolicy::Abort,
        }
    }

    pub fn ode(&self) -> Result<OdeConfig<f64>> {
        let s = &self.simulation;
        OdeConfig::new(s.rel_tol, s.abs_tol_K, s.max_dt_s)
    }

    pub fn profile(&self) -> Result<InputProfile<f64>> {
        if self.profile.segments.is_empty() {
            return Ok(super::profiles::synthetic_cycle());
        }
        let (mut t, mut m, mut ti) = (Vec::new(), Vec::new(), Vec::new());
        for seg in &self.profile.segments {
            t.push(seg[0]);
            m.push(seg[1]);
            ti.push(seg[2]);
        }
        InputProfile::new(t, m, ti).map_err(|e| Error::config(format!("profile: {e}")))
    }

    /// Estimator model on the coarse grid with the configured sensors.
    pub fn estimator_system(&self) -> Result<LpvSystem<f64>> {
        let grid = self.coarse_grid()?;
        let sensors = SensorMap::default_for(&grid, &self.estimator_sensors()?)?;
        LpvSystem::new(grid, self.fluid_params()?, self.pcm_params()?, sensors)
    }

    pub fn truth_model(&self) -> Result<ThermalModel<f64>> {
        Ok(ThermalModel::new(self.fine_grid()?, self.fluid_params()?, self.pcm_params()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.schedule().unwrap().update_every, 8);
        assert_eq!(cfg.estimator_sensors().unwrap(), Sensor::ALL.to_vec());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.estimator.withhold = vec!["tc3".into()];
        cfg.profile.segments = vec![[0.0, 0.1, 290.0], [10.0, 0.0, 295.0]];
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_formatting_but_not_values() {
        let a = ExperimentConfig::from_toml_str("[pcm]\nt_pc_K = 289.5\n[run]\nseed = 3\n").unwrap();
        let b = ExperimentConfig::from_toml_str("# comment\n[run]\n  seed=3\n\n[pcm]\nt_pc_K=289.50\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml_str("[pcm]\nt_pc_K = 289.6\n[run]\nseed = 3\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        let d = ExperimentConfig::from_toml_str("[pcm]\nt_pc_K = 289.5\n[run]\nseed = 3\nout_dir = \"x\"\n").unwrap();
        assert_eq!(a.hash(), d.hash());
        let e = ExperimentConfig::from_toml_str("[fluid]\nu_W_per_m2K = 3000\n").unwrap();
        assert_eq!(e.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("[pcm]\nt_pc_kelvin = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[estimator]\nwithhold = [\"tc1\", \"tc2\", \"tc3\", \"tc4\"]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[estimator]\nrate_S_per_s = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[estimator]\nsensors = [\"tc9\"]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[geometry]\nlength_m = -1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\nfine_nx = 20\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[run]\nmode = \"replay\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[soc]\nt_max_K = 285\n").is_err());
        let err = ExperimentConfig::from_toml_str("[estimator]\nsensors = []\n").unwrap_err();
        assert!(err.is_config_error());
    }
}
