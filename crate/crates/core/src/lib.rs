//! Phase-change thermal storage estimation: a finite-volume model of a
//! fluid/plate/CPCM cross section, its graph-Laplacian linear
//! parameter-varying form, exact frozen-in-time discretization, and a
//! continuous-discrete SDRE filter for temperature and state-of-charge
//! estimation, plus the simulation harness used to evaluate it.
//!
//! The numerical layers are generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`, which is what the harness and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretize;
pub mod error;
pub mod filter;
pub mod graph;
pub mod grid;
pub mod harness;
pub mod material;
pub mod ode;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GridSpec = grid::GridSpec<f64>;
pub type TesGeometry = grid::TesGeometry<f64>;
pub type PcmThermalParams = material::PcmThermalParams<f64>;
pub type FluidParams = material::FluidParams<f64>;
pub type SocParams = material::SocParams<f64>;
pub type ThermalGraph = graph::ThermalGraph<f64>;
pub type LpvSystem = graph::LpvSystem<f64>;
pub type SensorMap = graph::SensorMap<f64>;
pub type DetectabilityReport = graph::DetectabilityReport<f64>;
pub type DiscreteStep = discretize::DiscreteStep<f64>;
pub type NoiseModel = filter::NoiseModel<f64>;
pub type FilterState = filter::FilterState<f64>;
pub type SampleSchedule = filter::SampleSchedule<f64>;
pub type Trajectory = filter::Trajectory<f64>;
pub type StateVector = nalgebra::DVector<f64>;
