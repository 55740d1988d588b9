#![allow(dead_code)]

use nalgebra::DVector;
use pcm_sdre::graph::{LpvSystem, Sensor, SensorMap};
use pcm_sdre::grid::{Conductivity, GridSpec, SolidMaterial, TesGeometry};
use pcm_sdre::harness::ExperimentConfig;
use pcm_sdre::material::{FluidParams, PcmThermalParams};
use rand::Rng;

pub fn config() -> ExperimentConfig {
    ExperimentConfig::default()
}

/// Default configuration with the truth on the estimator grid.
pub fn exact_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.fine_nx = cfg.grid.coarse_nx;
    cfg.grid.fine_ny = cfg.grid.coarse_ny;
    cfg
}

pub fn pcm() -> PcmThermalParams<f64> {
    config().pcm_params().unwrap()
}

pub fn fluid() -> FluidParams<f64> {
    config().fluid_params().unwrap()
}

pub fn coarse() -> GridSpec<f64> {
    config().coarse_grid().unwrap()
}

pub fn fine() -> GridSpec<f64> {
    config().fine_grid().unwrap()
}

pub fn system(sensors: &[Sensor]) -> LpvSystem<f64> {
    let grid = coarse();
    let map = SensorMap::default_for(&grid, sensors).unwrap();
    LpvSystem::new(grid, fluid(), pcm(), map).unwrap()
}

pub fn random_geometry<R: Rng>(rng: &mut R) -> TesGeometry<f64> {
    TesGeometry {
        length: rng.random_range(0.05..0.5),
        width: rng.random_range(0.02..0.2),
        fluid_height: rng.random_range(0.001..0.005),
        plate_thickness: rng.random_range(0.001..0.006),
        cpcm_height: rng.random_range(0.005..0.03),
        fluid_density: 1000.0,
        plate: SolidMaterial { density: 2700.0, cp: 900.0, kappa: rng.random_range(50.0..250.0) },
        cpcm_density: rng.random_range(700.0..1200.0),
        cpcm_kappa: Conductivity::Constant(rng.random_range(0.2..20.0)),
    }
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(270.0..310.0))
}

/// Largest minus smallest entry.
pub fn spread(x: &DVector<f64>) -> f64 {
    x.max() - x.min()
}
