use super::{build_graph_on, laplacian, ThermalGraph};
use crate::error::{Error, Result};
use crate::grid::{CellRole, GridSpec};
use crate::material::{cp_eff_unchecked, FluidParams, PcmThermalParams};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// Diagonal of the capacitance matrix `M(x)` [J/K]: `m_j c_p,j`, with the
/// effective specific heat at `T_j` for CPCM cells.
pub fn capacitance_matrix<S: Real>(
    grid: &GridSpec<S>,
    fluid: &FluidParams<S>,
    pcm: &PcmThermalParams<S>,
    x: &DVector<S>,
) -> Result<DVector<S>> {
    check_state(grid, x)?;
    Ok(DVector::from_iterator(
        grid.n(),
        grid.cells().iter().zip(x.iter()).map(|(c, &t)| {
            let cp = match c.role {
                CellRole::Fluid => fluid.cp_f,
                CellRole::Plate => c.cp,
                CellRole::Cpcm => cp_eff_unchecked(t, pcm),
            };
            c.mass * cp
        }),
    ))
}

/// Advection column `B(x)` [K/kg]: `cp_f (T_{j-1} - T_j) / M_jj` on the fluid
/// cells, with `T_0 = t_in`, zero elsewhere.
pub fn input_matrix<S: Real>(
    grid: &GridSpec<S>,
    x: &DVector<S>,
    t_in: S,
    fluid: &FluidParams<S>,
    m_diag: &DVector<S>,
) -> Result<DVector<S>> {
    check_state(grid, x)?;
    if m_diag.len() != grid.n() {
        return Err(Error::input("capacitance length does not match grid"));
    }
    let mut b = DVector::zeros(grid.n());
    for j in 0..grid.nx() {
        let upstream = if j == 0 { t_in } else { x[j - 1] };
        b[j] = fluid.cp_f * (upstream - x[j]) / m_diag[j];
    }
    Ok(b)
}

/// `A(x) = -M(x)^-1 L(x)` and `B(x)` for the full lattice.
pub fn assemble<S: Real>(
    grid: &GridSpec<S>,
    fluid: &FluidParams<S>,
    pcm: &PcmThermalParams<S>,
    x: &DVector<S>,
    t_in: S,
) -> Result<(DMatrix<S>, DVector<S>)> {
    assemble_on(grid, fluid, pcm, x, t_in, &grid.lattice_edges())
}

fn assemble_on<S: Real>(
    grid: &GridSpec<S>,
    fluid: &FluidParams<S>,
    pcm: &PcmThermalParams<S>,
    x: &DVector<S>,
    t_in: S,
    pairs: &[(usize, usize)],
) -> Result<(DMatrix<S>, DVector<S>)> {
    let g = build_graph_on(grid, fluid, x, pairs)?;
    let m = capacitance_matrix(grid, fluid, pcm, x)?;
    if let Some(j) = m.iter().position(|v| !(*v > S::zero() && v.finite())) {
        return Err(Error::Numerical(format!("capacitance of cell {j} is {}", m[j])));
    }
    let mut a = laplacian(&g);
    for (i, mut row) in a.row_iter_mut().enumerate() {
        let scale = -S::one() / m[i];
        row.iter_mut().for_each(|v| *v *= scale);
    }
    let b = input_matrix(grid, x, t_in, fluid, &m)?;
    Ok((a, b))
}

fn check_state<S: Real>(grid: &GridSpec<S>, x: &DVector<S>) -> Result<()> {
    if x.len() != grid.n() {
        return Err(Error::input(format!("state has {} entries, grid has {} cells", x.len(), grid.n())));
    }
    if x.iter().any(|v| !v.finite()) {
        return Err(Error::input("state contains non-finite temperatures"));
    }
    Ok(())
}

/// Measured outputs, in the fixed output ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sensor {
    /// Fluid outlet thermocouple.
    Tc1,
    /// Mean of the TC2a/TC2b pair in the CPCM near the inlet.
    Tc2,
    /// Single thermocouple in the CPCM at mid length.
    Tc3,
    /// Mean of the TC4a/TC4b pair in the CPCM near the outlet.
    Tc4,
}

impl Sensor {
    pub const ALL: [Sensor; 4] = [Sensor::Tc1, Sensor::Tc2, Sensor::Tc3, Sensor::Tc4];

    pub fn name(self) -> &'static str {
        match self {
            Sensor::Tc1 => "tc1",
            Sensor::Tc2 => "tc2",
            Sensor::Tc3 => "tc3",
            Sensor::Tc4 => "tc4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tc1" => Ok(Sensor::Tc1),
            "tc2" => Ok(Sensor::Tc2),
            "tc3" => Ok(Sensor::Tc3),
            "tc4" => Ok(Sensor::Tc4),
            other => Err(Error::config(format!("unknown sensor '{other}' (expected tc1..tc4)"))),
        }
    }

    /// Names of the raw thermocouple channels averaged into this output.
    pub fn channels(self) -> &'static [&'static str] {
        match self {
            Sensor::Tc1 => &["tc1"],
            Sensor::Tc2 => &["tc2a", "tc2b"],
            Sensor::Tc3 => &["tc3"],
            Sensor::Tc4 => &["tc4a", "tc4b"],
        }
    }

    /// Whether the output is the mean of two thermocouples.
    pub fn is_averaged(self) -> bool {
        matches!(self, Sensor::Tc2 | Sensor::Tc4)
    }

    /// Default control volume on a grid: the outlet fluid cell for TC1 and the
    /// first CPCM layer at the inlet, middle and outlet columns for TC2-TC4.
    pub fn default_cell<S: Real>(self, grid: &GridSpec<S>) -> usize {
        let nx = grid.nx();
        let layer = if grid.ny() > 2 { 2 } else { 1 };
        match self {
            Sensor::Tc1 => grid.index(0, nx - 1),
            Sensor::Tc2 => grid.index(layer, 0),
            Sensor::Tc3 => grid.index(layer, nx / 2),
            Sensor::Tc4 => grid.index(layer, nx - 1),
        }
    }
}

/// Binary output matrix `C` with one row per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMap<S> {
    rows: Vec<(Sensor, usize)>,
    c: DMatrix<S>,
}

impl<S: Real> SensorMap<S> {
    pub fn rows(&self) -> &[(Sensor, usize)] {
        &self.rows
    }
    pub fn sensors(&self) -> Vec<Sensor> {
        self.rows.iter().map(|r| r.0).collect()
    }
    pub fn cells(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.1).collect()
    }
    pub fn c(&self) -> &DMatrix<S> {
        &self.c
    }
    pub fn p(&self) -> usize {
        self.rows.len()
    }

    /// Sensors at their default cells on `grid`.
    pub fn default_for(grid: &GridSpec<S>, sensors: &[Sensor]) -> Result<Self> {
        let rows: Vec<_> = sensors.iter().map(|&s| (s, s.default_cell(grid))).collect();
        sensor_map(&rows, grid.n())
    }
}

/// Builds `C` from `(sensor, control volume)` assignments. Rows are ordered
/// TC1..TC4 regardless of input order.
pub fn sensor_map<S: Real>(assignments: &[(Sensor, usize)], n: usize) -> Result<SensorMap<S>> {
    let mut rows = assignments.to_vec();
    rows.sort_by_key(|r| r.0);
    for &(s, cell) in &rows {
        if cell >= n {
            return Err(Error::config(format!("sensor {} maps to cell {cell}, grid has {n}", s.name())));
        }
    }
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 || w[0].1 == w[1].1 {
            log::warn!("duplicate output rows for {} and {}", w[0].0.name(), w[1].0.name());
        }
    }
    let mut c = DMatrix::zeros(rows.len(), n);
    for (r, &(_, cell)) in rows.iter().enumerate() {
        c[(r, cell)] = S::one();
    }
    Ok(SensorMap { rows, c })
}

/// The estimator's state-dependent model: lattice, materials, and output map.
#[derive(Debug, Clone)]
pub struct LpvSystem<S> {
    grid: GridSpec<S>,
    fluid: FluidParams<S>,
    pcm: PcmThermalParams<S>,
    sensors: SensorMap<S>,
    pairs: Vec<(usize, usize)>,
}

impl<S: Real> LpvSystem<S> {
    pub fn new(grid: GridSpec<S>, fluid: FluidParams<S>, pcm: PcmThermalParams<S>, sensors: SensorMap<S>) -> Result<Self> {
        if sensors.c().ncols() != grid.n() {
            return Err(Error::config("sensor map width does not match grid"));
        }
        let pairs = grid.lattice_edges();
        Ok(Self { grid, fluid, pcm, sensors, pairs })
    }

    /// Restricts heat exchange to a subset of the lattice faces.
    pub fn with_edges(mut self, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| !self.grid.adjacent(a, b)) {
            return Err(Error::config(format!("cells {a} and {b} are not lattice neighbours")));
        }
        self.pairs = pairs;
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec<S> {
        &self.grid
    }
    pub fn fluid(&self) -> &FluidParams<S> {
        &self.fluid
    }
    pub fn pcm(&self) -> &PcmThermalParams<S> {
        &self.pcm
    }
    pub fn sensors(&self) -> &SensorMap<S> {
        &self.sensors
    }
    pub fn c(&self) -> &DMatrix<S> {
        self.sensors.c()
    }
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn graph(&self, x: &DVector<S>) -> Result<ThermalGraph<S>> {
        build_graph_on(&self.grid, &self.fluid, x, &self.pairs)
    }

    /// `(A(x), B(x))` at state `x` and inlet temperature `t_in`.
    pub fn matrices(&self, x: &DVector<S>, t_in: S) -> Result<(DMatrix<S>, DVector<S>)> {
        assemble_on(&self.grid, &self.fluid, &self.pcm, x, t_in, &self.pairs)
    }
}
