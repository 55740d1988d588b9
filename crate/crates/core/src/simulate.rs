//! Truth generation: the nonlinear finite-volume energy balance integrated
//! with an adaptive Runge-Kutta pair, projection onto a coarser grid,
//! synthetic thermocouple measurements and error metrics.

use crate::discretize::discretize;
use crate::error::{Error, Result};
use crate::filter::{InputSeries, MeasurementSeries};
use crate::graph::{face_geometry, LpvSystem, Sensor, SensorMap};
use crate::grid::{CellRole, GridSpec};
use crate::material::{cp_eff_unchecked, specific_enthalpy_unchecked, FluidParams, PcmThermalParams};
use crate::ode::{Integrator, OdeConfig, OdeStats};
use crate::scalar::Real;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
struct Face<S> {
    a: usize,
    b: usize,
    area: S,
    dist: S,
    /// Conductance when neither side depends on temperature [W/K].
    fixed: Option<S>,
}

/// Right-hand side of the energy balance on a fixed grid, with the face
/// geometry precomputed.
#[derive(Debug, Clone)]
pub struct ThermalModel<S> {
    grid: GridSpec<S>,
    fluid: FluidParams<S>,
    pcm: PcmThermalParams<S>,
    faces: Vec<Face<S>>,
}

impl<S: Real> ThermalModel<S> {
    pub fn new(grid: GridSpec<S>, fluid: FluidParams<S>, pcm: PcmThermalParams<S>) -> Self {
        let faces = grid
            .lattice_edges()
            .into_iter()
            .map(|(a, b)| {
                let (area, dist) = face_geometry(&grid, a, b);
                let constant = |j: usize| grid.cell(j).role == CellRole::Fluid || grid.cell(j).kappa.is_constant();
                let mut face = Face { a, b, area, dist, fixed: None };
                if constant(a) && constant(b) {
                    let g = S::one()
                        / (half_resistance(&grid, &fluid, &face, a, S::zero()) + half_resistance(&grid, &fluid, &face, b, S::zero()));
                    face.fixed = Some(g);
                }
                face
            })
            .collect();
        Self { grid, fluid, pcm, faces }
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
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Heat capacity `m_j c_p,j(T_j)` of cell `j` [J/K].
    fn capacity(&self, j: usize, t: S) -> S {
        let cell = self.grid.cell(j);
        let cp = match cell.role {
            CellRole::Fluid => self.fluid.cp_f,
            CellRole::Plate => cell.cp,
            CellRole::Cpcm => cp_eff_unchecked(t, &self.pcm),
        };
        cell.mass * cp
    }

    /// Writes `dT/dt` [K/s] for flow `mdot` [kg/s] and inlet temperature `t_in` [K].
    pub fn rhs_into(&self, x: &DVector<S>, mdot: S, t_in: S, dx: &mut DVector<S>) -> Result<()> {
        let n = self.n();
        if x.len() != n || dx.len() != n {
            return Err(Error::input(format!("state has {} entries, grid has {n} cells", x.len())));
        }
        if let Some(j) = x.iter().position(|v| !v.finite()) {
            return Err(Error::Numerical(format!("non-finite temperature in cell {j}")));
        }
        if !(mdot >= S::zero() && mdot.finite() && t_in.finite()) {
            return Err(Error::input(format!("invalid inputs: mdot = {mdot} kg/s, t_in = {t_in} K")));
        }
        dx.fill(S::zero());
        let flow = mdot * self.fluid.cp_f;
        for j in 0..self.grid.nx() {
            let upstream = if j == 0 { t_in } else { x[j - 1] };
            dx[j] = flow * (upstream - x[j]);
        }
        for f in &self.faces {
            let g = match f.fixed {
                Some(g) => g,
                None => {
                    S::one()
                        / (half_resistance(&self.grid, &self.fluid, f, f.a, x[f.a])
                            + half_resistance(&self.grid, &self.fluid, f, f.b, x[f.b]))
                }
            };
            let q = g * (x[f.b] - x[f.a]);
            dx[f.a] += q;
            dx[f.b] -= q;
        }
        for j in 0..n {
            dx[j] /= self.capacity(j, x[j]);
        }
        Ok(())
    }

    pub fn rhs(&self, x: &DVector<S>, mdot: S, t_in: S) -> Result<DVector<S>> {
        let mut dx = DVector::zeros(self.n());
        self.rhs_into(x, mdot, t_in, &mut dx)?;
        Ok(dx)
    }

    /// Energy stored in all cells relative to uniform `t_pc` [J]: sensible
    /// for fluid and plate, sensible plus latent for the CPCM.
    pub fn stored_energy(&self, x: &DVector<S>) -> S {
        let t_pc = self.pcm.t_pc();
        self.grid.cells().iter().zip(x.iter()).fold(S::zero(), |acc, (c, &t)| {
            acc + match c.role {
                CellRole::Fluid => c.mass * self.fluid.cp_f * (t - t_pc),
                CellRole::Plate => c.mass * c.cp * (t - t_pc),
                CellRole::Cpcm => c.mass * specific_enthalpy_unchecked(t, &self.pcm),
            }
        })
    }

    /// Advective heat flow into the module, `mdot cp_f (T_in - T_outlet)` [W].
    pub fn boundary_flux(&self, x: &DVector<S>, mdot: S, t_in: S) -> S {
        mdot * self.fluid.cp_f * (t_in - x[self.grid.nx() - 1])
    }
}

fn half_resistance<S: Real>(grid: &GridSpec<S>, fluid: &FluidParams<S>, f: &Face<S>, j: usize, t: S) -> S {
    let cell = grid.cell(j);
    match cell.role {
        CellRole::Fluid => S::one() / (fluid.u * f.area),
        _ => f.dist / (S::lit(2.0) * cell.kappa.at(t) * f.area),
    }
}

/// `dT/dt` of the energy balance on `grid` [K/s].
pub fn rhs<S: Real>(
    x: &DVector<S>,
    mdot: S,
    t_in: S,
    grid: &GridSpec<S>,
    fluid: &FluidParams<S>,
    pcm: &PcmThermalParams<S>,
) -> Result<DVector<S>> {
    ThermalModel::new(grid.clone(), *fluid, *pcm).rhs(x, mdot, t_in)
}

/// Zero-order-hold input signals: value `k` applies on `[t[k], t[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputProfile<S> {
    pub t: Vec<S>,
    pub mdot: Vec<S>,
    pub t_in: Vec<S>,
}

impl<S: Real> InputProfile<S> {
    pub fn new(t: Vec<S>, mdot: Vec<S>, t_in: Vec<S>) -> Result<Self> {
        if t.is_empty() || mdot.len() != t.len() || t_in.len() != t.len() {
            return Err(Error::input("input profile needs equal, non-empty channels"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("input profile times must be strictly increasing"));
        }
        if mdot.iter().chain(&t_in).chain(&t).any(|v| !v.finite()) || mdot.iter().any(|m| *m < S::zero()) {
            return Err(Error::input("input profile values must be finite with mdot >= 0"));
        }
        Ok(Self { t, mdot, t_in })
    }

    pub fn constant(mdot: S, t_in: S) -> Self {
        Self { t: vec![S::zero()], mdot: vec![mdot], t_in: vec![t_in] }
    }

    /// `(mdot, t_in)` held at time `t`; the first value extends backwards.
    pub fn at(&self, t: S) -> (S, S) {
        let k = self.t.partition_point(|&s| s <= t).saturating_sub(1);
        (self.mdot[k], self.t_in[k])
    }

    /// Times where the held value changes.
    pub fn breakpoints(&self) -> Vec<S> {
        (1..self.t.len()).filter(|&k| self.mdot[k] != self.mdot[k - 1] || self.t_in[k] != self.t_in[k - 1]).map(|k| self.t[k]).collect()
    }

    /// Samples the held inputs at `times`.
    pub fn sample(&self, times: &[S]) -> InputSeries<S> {
        let (mdot, t_in) = times.iter().map(|&t| self.at(t)).unzip();
        InputSeries { t: times.to_vec(), mdot, t_in }
    }
}

/// States on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries<S> {
    pub t: Vec<S>,
    pub x: Vec<DVector<S>>,
}

/// `t0 + k dt` for `k = 0..` up to `t1` (inclusive within a small tolerance).
pub fn uniform_times<S: Real>(t0: S, t1: S, dt: S) -> Result<Vec<S>> {
    if !(dt > S::zero()) || !(t1 >= t0) {
        return Err(Error::input("uniform time grid needs dt > 0 and t1 >= t0"));
    }
    let count = ((t1 - t0) / dt + S::lit(1e-9)).floor().as_f64() as usize;
    Ok((0..=count).map(|k| t0 + dt * S::from_count(k)).collect())
}

/// Integrates `model` over `t_span` from `x0` under the held inputs, handing
/// the state every `dt_out` seconds to `on_output` (without storing it) and
/// every accepted step to `on_step`.
#[allow(clippy::too_many_arguments)]
pub fn integrate_streaming<S: Real, O, P>(
    model: &ThermalModel<S>,
    x0: DVector<S>,
    inputs: &InputProfile<S>,
    cfg: OdeConfig<S>,
    t_span: (S, S),
    dt_out: S,
    mut on_output: O,
    mut on_step: P,
) -> Result<OdeStats>
where
    O: FnMut(S, &DVector<S>) -> Result<()>,
    P: FnMut(S, &DVector<S>),
{
    let (t0, t1) = t_span;
    let times = uniform_times(t0, t1, dt_out)?;
    if x0.len() != model.n() {
        return Err(Error::input("initial state does not match the grid"));
    }
    on_output(times[0], &x0)?;
    let mut next = 1;
    let mut integ = Integrator::new(cfg, t0, x0)?;
    let mut stops: Vec<S> = inputs.breakpoints().into_iter().filter(|&b| b > t0 && b < t1).collect();
    stops.push(t1);
    for stop in stops {
        let (mdot, t_in) = inputs.at(integ.t());
        let mut f = |_: S, y: &DVector<S>, dy: &mut DVector<S>| model.rhs_into(y, mdot, t_in, dy);
        integ.advance(stop, &mut f, |step| {
            while next < times.len() && times[next] <= step.t1 {
                on_output(times[next], &step.interpolate(times[next]))?;
                next += 1;
            }
            on_step(step.t1, step.y1);
            Ok(())
        })?;
        integ.reset_derivative();
    }
    // an output instant within rounding of t1 may remain
    while next < times.len() {
        on_output(times[next], integ.y())?;
        next += 1;
    }
    Ok(integ.stats())
}

/// [`integrate_streaming`] collecting the outputs.
pub fn integrate_with<S: Real, P>(
    model: &ThermalModel<S>,
    x0: DVector<S>,
    inputs: &InputProfile<S>,
    cfg: OdeConfig<S>,
    t_span: (S, S),
    dt_out: S,
    on_step: P,
) -> Result<(StateSeries<S>, OdeStats)>
where
    P: FnMut(S, &DVector<S>),
{
    let mut series = StateSeries { t: Vec::new(), x: Vec::new() };
    let stats = integrate_streaming(
        model,
        x0,
        inputs,
        cfg,
        t_span,
        dt_out,
        |t, x| {
            series.t.push(t);
            series.x.push(x.clone());
            Ok(())
        },
        on_step,
    )?;
    Ok((series, stats))
}

pub fn integrate<S: Real>(
    model: &ThermalModel<S>,
    x0: DVector<S>,
    inputs: &InputProfile<S>,
    cfg: OdeConfig<S>,
    t_span: (S, S),
    dt_out: S,
) -> Result<StateSeries<S>> {
    integrate_with(model, x0, inputs, cfg, t_span, dt_out, |_, _| {}).map(|r| r.0)
}

/// Propagates the estimator model with frozen-in-time exact steps between
/// consecutive input instants (inputs held from the left).
pub fn propagate_frozen<S: Real>(sys: &LpvSystem<S>, x0: DVector<S>, inputs: &InputSeries<S>) -> Result<Vec<DVector<S>>> {
    let mut out = Vec::with_capacity(inputs.t.len());
    let mut x = x0;
    out.push(x.clone());
    for k in 1..inputs.t.len() {
        let (a, b) = sys.matrices(&x, inputs.t_in[k - 1])?;
        let step = discretize(&a, &b, inputs.t[k] - inputs.t[k - 1])?;
        x = step.apply(&x, inputs.mdot[k - 1]);
        out.push(x.clone());
    }
    Ok(out)
}

/// Role-preserving mass-weighted averaging from a fine grid onto a coarse
/// grid that it partitions: equal column groups, fluid to fluid, plate to
/// plate, and equal groups of CPCM layers.
#[derive(Debug, Clone)]
pub struct Projection<S> {
    /// For each coarse cell, its fine cells and their normalized weights.
    groups: Vec<Vec<(usize, S)>>,
    fine_n: usize,
}

impl<S: Real> Projection<S> {
    pub fn new(fine: &GridSpec<S>, coarse: &GridSpec<S>) -> Result<Self> {
        let (fx, fy, cx, cy) = (fine.nx(), fine.ny(), coarse.nx(), coarse.ny());
        let fine_cpcm = fy - 2;
        let coarse_cpcm = cy - 2;
        let partitions = fx % cx == 0 && ((coarse_cpcm == 0 && fine_cpcm == 0) || (coarse_cpcm > 0 && fine_cpcm % coarse_cpcm == 0));
        if !partitions {
            return Err(Error::config(format!("a {fx}x{fy} grid does not partition into {cx}x{cy}")));
        }
        let col_ratio = fx / cx;
        let layer_ratio = fine_cpcm.checked_div(coarse_cpcm).unwrap_or(0);
        let fine_layers = |layer: usize| -> std::ops::Range<usize> {
            match layer {
                0 => 0..1,
                1 => 1..2,
                l => 2 + (l - 2) * layer_ratio..2 + (l - 1) * layer_ratio,
            }
        };
        let rel = |a: S, b: S| (a - b).abs() <= S::lit(1e-9) * a.abs().max(b.abs());
        let mut groups = Vec::with_capacity(coarse.n());
        for j in 0..coarse.n() {
            let (layer, col) = coarse.position(j);
            let cols = col * col_ratio..(col + 1) * col_ratio;
            let mut members = Vec::new();
            let (mut mass, mut width, mut height) = (S::zero(), S::zero(), S::zero());
            for fl in fine_layers(layer) {
                height += fine.cell(fine.index(fl, cols.start)).dy;
                for fc in cols.clone() {
                    let i = fine.index(fl, fc);
                    members.push((i, fine.cell(i).mass));
                    mass += fine.cell(i).mass;
                    if fl == fine_layers(layer).start {
                        width += fine.cell(i).dx;
                    }
                }
            }
            let target = coarse.cell(j);
            if !rel(width, target.dx) || !rel(height, target.dy) {
                return Err(Error::config(format!(
                    "fine cells under coarse cell {j} span {width} x {height} m, expected {} x {} m",
                    target.dx, target.dy
                )));
            }
            for m in &mut members {
                m.1 /= mass;
            }
            groups.push(members);
        }
        Ok(Self { groups, fine_n: fine.n() })
    }

    pub fn apply(&self, x_fine: &DVector<S>) -> Result<DVector<S>> {
        if x_fine.len() != self.fine_n {
            return Err(Error::input(format!("fine state has {} entries, expected {}", x_fine.len(), self.fine_n)));
        }
        Ok(DVector::from_iterator(
            self.groups.len(),
            self.groups.iter().map(|g| g.iter().fold(S::zero(), |acc, &(i, w)| acc + w * x_fine[i])),
        ))
    }
}

pub fn project_fine_to_coarse<S: Real>(x_fine: &DVector<S>, fine: &GridSpec<S>, coarse: &GridSpec<S>) -> Result<DVector<S>> {
    Projection::new(fine, coarse)?.apply(x_fine)
}

/// One raw thermocouple channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannel<S> {
    pub name: String,
    /// Control volume read by the thermocouple.
    pub cell: usize,
    /// Noise standard deviation [K].
    pub noise_std: S,
}

/// Synthetic measurement configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSpec<S> {
    pub channels: Vec<RawChannel<S>>,
    /// Samples per second.
    pub sample_rate: S,
    pub seed: u64,
}

impl<S: Real> MeasurementSpec<S> {
    /// All six raw thermocouples (TC1, TC2a/b, TC3, TC4a/b) at the default
    /// cells of `grid`; both members of a pair read the same cell.
    pub fn thermocouples(grid: &GridSpec<S>, noise_std: S, sample_rate: S, seed: u64) -> Self {
        let channels = Sensor::ALL
            .iter()
            .flat_map(|&s| {
                let cell = s.default_cell(grid);
                s.channels().iter().map(move |name| RawChannel { name: (*name).to_string(), cell, noise_std })
            })
            .collect();
        Self { channels, sample_rate, seed }
    }
}

/// Raw channel samples; `values[k][c]` is channel `c` at `t[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurements<S> {
    pub t: Vec<S>,
    pub names: Vec<String>,
    pub values: Vec<Vec<S>>,
}

impl<S: Real> RawMeasurements<S> {
    pub fn channel(&self, name: &str) -> Option<Vec<S>> {
        let c = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|row| row[c]).collect())
    }

    /// Outputs for `sensors`, averaging the raw channels of each pair.
    pub fn outputs(&self, sensors: &SensorMap<S>) -> Result<MeasurementSeries<S>> {
        let mut idx = Vec::new();
        for s in sensors.sensors() {
            let cols: Option<Vec<usize>> = s.channels().iter().map(|name| self.names.iter().position(|n| n == name)).collect();
            idx.push(cols.ok_or_else(|| Error::input(format!("raw channels for {} are missing", s.name())))?);
        }
        let y = self
            .values
            .iter()
            .map(|row| {
                DVector::from_iterator(
                    idx.len(),
                    idx.iter().map(|cols| cols.iter().fold(S::zero(), |acc, &c| acc + row[c]) / S::from_count(cols.len())),
                )
            })
            .collect();
        Ok(MeasurementSeries { t: self.t.clone(), y })
    }
}

/// Samples `traj` at `spec.sample_rate` and adds seeded Gaussian noise.
pub fn synthesize_measurements<S: Real>(traj: &StateSeries<S>, spec: &MeasurementSpec<S>) -> Result<RawMeasurements<S>> {
    if traj.t.len() < 2 && !traj.t.is_empty() {
        return synthesize_at(traj, spec, &[0]);
    }
    if traj.t.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    let dt = traj.t[1] - traj.t[0];
    let ratio = (S::one() / (spec.sample_rate * dt)).as_f64();
    let stride = ratio.round();
    if !(spec.sample_rate > S::zero()) || stride < 1.0 || (ratio - stride).abs() > 1e-6 * stride {
        return Err(Error::input(format!("sample rate {} S/s is not a divisor of the trajectory rate", spec.sample_rate)));
    }
    let rows: Vec<usize> = (0..traj.t.len()).step_by(stride as usize).collect();
    synthesize_at(traj, spec, &rows)
}

fn synthesize_at<S: Real>(traj: &StateSeries<S>, spec: &MeasurementSpec<S>, rows: &[usize]) -> Result<RawMeasurements<S>> {
    let n = traj.x.first().map_or(0, |x| x.len());
    if let Some(c) = spec.channels.iter().find(|c| c.cell >= n || !(c.noise_std >= S::zero())) {
        return Err(Error::input(format!("channel {} has cell {} or invalid noise std", c.name, c.cell)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(rows.len());
    for &k in rows {
        let x = &traj.x[k];
        values.push(
            spec.channels
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x[c.cell] + c.noise_std * S::lit(z)
                })
                .collect(),
        );
    }
    Ok(RawMeasurements {
        t: rows.iter().map(|&k| traj.t[k]).collect(),
        names: spec.channels.iter().map(|c| c.name.clone()).collect(),
        values,
    })
}

/// Per-step RMS temperature error over all control volumes.
pub fn rmse_over_cells<S: Real>(x_hat: &[DVector<S>], truth: &[DVector<S>]) -> Result<Vec<S>> {
    if x_hat.len() != truth.len() {
        return Err(Error::input(format!("{} estimates against {} truth states", x_hat.len(), truth.len())));
    }
    x_hat
        .iter()
        .zip(truth)
        .map(|(a, b)| {
            if a.len() != b.len() || a.is_empty() {
                return Err(Error::input("state lengths differ"));
            }
            Ok(((a - b).norm_squared() / S::from_count(a.len())).sqrt())
        })
        .collect()
}

/// RMS over time of the error of one control volume against a reference.
pub fn rmse_over_time<S: Real>(estimate: &[S], reference: &[S]) -> Result<S> {
    if estimate.len() != reference.len() || estimate.is_empty() {
        return Err(Error::input(format!("series lengths {} and {} must match and be non-empty", estimate.len(), reference.len())));
    }
    let sum = estimate.iter().zip(reference).fold(S::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
    Ok((sum / S::from_count(estimate.len())).sqrt())
}
