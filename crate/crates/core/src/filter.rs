//! Continuous-discrete state-dependent Riccati equation (SDRE) filter.
//!
//! The LPV model is frozen at the current estimate and discretized exactly
//! over each prediction interval; prediction may run several times between
//! measurement updates.

use crate::discretize::discretize;
use crate::error::{Error, Result};
use crate::graph::{LpvSystem, SensorMap};
use crate::material::{state_of_charge, total_enthalpy, SocParams};
use crate::scalar::Real;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Thermocouple noise variance [K²].
pub const THERMOCOUPLE_VARIANCE: f64 = 0.007;
/// Default process noise intensity [K²].
pub const PROCESS_NOISE: f64 = 1e-7;
/// Diagonal shift applied when a covariance loses positive definiteness.
pub const JITTER: f64 = 1e-12;
/// Estimates outside this range [K] are treated as divergence.
pub const PLAUSIBLE_TEMPERATURE_K: (f64, f64) = (0.0, 1e4);

/// Process (`w`, n×n) and measurement (`v`, p×p) noise covariances [K²].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<S> {
    w: DMatrix<S>,
    v: DMatrix<S>,
}

impl<S: Real> NoiseModel<S> {
    pub fn new(w: DMatrix<S>, v: DMatrix<S>) -> Result<Self> {
        if !w.is_square() || !v.is_square() {
            return Err(Error::config("noise covariances must be square"));
        }
        if !is_symmetric(&w) || !is_symmetric(&v) {
            return Err(Error::config("noise covariances must be symmetric"));
        }
        if w.nrows() > 0 {
            let min = SymmetricEigen::new(w.clone()).eigenvalues.min();
            if min < -S::lit(1e-12) * w.amax().max(S::one()) {
                return Err(Error::config("process noise covariance must be positive semidefinite"));
            }
        }
        if v.nrows() > 0 && Cholesky::new(v.clone()).is_none() {
            return Err(Error::config("measurement noise covariance must be positive definite"));
        }
        Ok(Self { w, v })
    }

    /// `W = w_scale I_n` and a diagonal `V` with variance `sigma2` for single
    /// thermocouples and `sigma2 / 2` for averaged pairs.
    pub fn thermocouples(n: usize, sensors: &SensorMap<S>, sigma2: S, w_scale: S) -> Result<Self> {
        let diag: Vec<S> = sensors.sensors().iter().map(|s| if s.is_averaged() { sigma2 * S::lit(0.5) } else { sigma2 }).collect();
        Self::new(DMatrix::identity(n, n) * w_scale, DMatrix::from_diagonal(&DVector::from_vec(diag)))
    }

    /// Default thermocouple noise (σ² = 0.007 K²) and `W = 1e-7 I`.
    pub fn default_for(n: usize, sensors: &SensorMap<S>) -> Result<Self> {
        Self::thermocouples(n, sensors, S::lit(THERMOCOUPLE_VARIANCE), S::lit(PROCESS_NOISE))
    }

    pub fn w(&self) -> &DMatrix<S> {
        &self.w
    }
    pub fn v(&self) -> &DMatrix<S> {
        &self.v
    }
}

fn is_symmetric<S: Real>(m: &DMatrix<S>) -> bool {
    let scale = m.amax().max(S::one());
    (m - m.transpose()).amax() <= S::lit(1e-12) * scale
}

/// Estimate, error covariance, step index and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<S> {
    pub x_hat: DVector<S>,
    pub p: DMatrix<S>,
    pub k: usize,
    pub t: S,
}

impl<S: Real> FilterState<S> {
    pub fn new(x_hat: DVector<S>, p: DMatrix<S>, t: S) -> Result<Self> {
        let n = x_hat.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::input("covariance size does not match state"));
        }
        if x_hat.iter().any(|v| !v.finite()) {
            return Err(Error::input("initial estimate is not finite"));
        }
        if !is_symmetric(&p) || Cholesky::new(p.clone()).is_none() {
            return Err(Error::input("initial covariance must be symmetric positive definite"));
        }
        Ok(Self { x_hat, p, k: 0, t })
    }

    /// Every state at `t0_temp` with covariance `p0 I`.
    pub fn uniform(n: usize, t0_temp: S, p0: S, t: S) -> Result<Self> {
        Self::new(DVector::from_element(n, t0_temp), DMatrix::identity(n, n) * p0, t)
    }

    pub fn trace_p(&self) -> S {
        self.p.trace()
    }
}

/// Symmetrizes `p` in place and shifts its diagonal if it is not positive
/// definite. Returns true when a shift was applied.
pub(crate) fn condition_covariance<S: Real>(p: &mut DMatrix<S>) -> bool {
    let sym = (&*p + p.transpose()) * S::lit(0.5);
    *p = sym;
    if Cholesky::new(p.clone()).is_some() {
        return false;
    }
    let min = SymmetricEigen::new(p.clone()).eigenvalues.min();
    let shift = S::lit(JITTER) - min.min(S::zero());
    for i in 0..p.nrows() {
        p[(i, i)] += shift;
    }
    true
}

fn diverged<S: Real>(fs: &FilterState<S>, reason: &str) -> Error {
    Error::Divergence { step: fs.k, t: fs.t.as_f64(), reason: reason.into() }
}

/// Prediction over `dt`: `x+ = Phi x + Gamma u`, `P+ = Phi P Phi' + W`, with
/// `A`, `B` evaluated at the current estimate.
pub fn predict<S: Real>(fs: &FilterState<S>, sys: &LpvSystem<S>, u: S, t_in: S, noise: &NoiseModel<S>, dt: S) -> Result<FilterState<S>> {
    if fs.x_hat.iter().any(|v| !v.finite()) {
        return Err(diverged(fs, "non-finite estimate before prediction"));
    }
    let (lo, hi) = (S::lit(PLAUSIBLE_TEMPERATURE_K.0), S::lit(PLAUSIBLE_TEMPERATURE_K.1));
    if let Some(v) = fs.x_hat.iter().find(|&&v| !(v > lo && v < hi)) {
        return Err(diverged(fs, &format!("estimate {:e} K left the plausible range", v.as_f64())));
    }
    let (a, b) = sys.matrices(&fs.x_hat, t_in).map_err(|e| diverged(fs, &e.to_string()))?;
    let step = discretize(&a, &b, dt)?;
    let x_hat = step.apply(&fs.x_hat, u);
    let mut p = &step.phi * &fs.p * step.phi.transpose() + noise.w();
    if x_hat.iter().any(|v| !v.finite()) || p.iter().any(|v| !v.finite()) {
        return Err(diverged(fs, "non-finite prediction"));
    }
    condition_covariance(&mut p);
    Ok(FilterState { x_hat, p, k: fs.k + 1, t: fs.t + dt })
}

/// `K = P C' (C P C' + V)^-1`, solved through a Cholesky factorization of the
/// innovation covariance.
pub fn kalman_gain<S: Real>(p_pred: &DMatrix<S>, c: &DMatrix<S>, v: &DMatrix<S>) -> Result<DMatrix<S>> {
    if c.ncols() != p_pred.nrows() || v.nrows() != c.nrows() || !v.is_square() {
        return Err(Error::input("gain dimensions do not match"));
    }
    let cp = c * p_pred;
    let s = &cp * c.transpose() + v;
    let s = (&s + s.transpose()) * S::lit(0.5);
    match Cholesky::new(s.clone()) {
        Some(chol) => Ok(chol.solve(&cp).transpose()),
        None => {
            let eig = SymmetricEigen::new(s).eigenvalues;
            Err(Error::Numerical(format!(
                "innovation covariance not positive definite (eigenvalues in [{:e}, {:e}])",
                eig.min().as_f64(),
                eig.max().as_f64()
            )))
        }
    }
}

/// Diagnostics of one measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateInfo<S> {
    pub innovation: DVector<S>,
    pub gain: DMatrix<S>,
    /// True when the posterior covariance needed a diagonal shift.
    pub jittered: bool,
}

/// Measurement update with innovation `y - C x_hat`; `P+ = (I - K C) P`.
pub fn update<S: Real>(fs: &FilterState<S>, y: &DVector<S>, c: &DMatrix<S>, v: &DMatrix<S>) -> Result<(FilterState<S>, UpdateInfo<S>)> {
    let n = fs.x_hat.len();
    if c.ncols() != n || y.len() != c.nrows() {
        return Err(Error::input(format!(
            "measurement of length {} with a {}x{} output matrix for {n} states",
            y.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    if y.iter().any(|v| !v.finite()) {
        return Err(Error::input("measurement contains non-finite values"));
    }
    let gain = kalman_gain(&fs.p, c, v)?;
    let innovation = y - c * &fs.x_hat;
    let x_hat = &fs.x_hat + &gain * &innovation;
    let mut p = (DMatrix::identity(n, n) - &gain * c) * &fs.p;
    let jittered = condition_covariance(&mut p);
    Ok((FilterState { x_hat, p, k: fs.k, t: fs.t }, UpdateInfo { innovation, gain, jittered }))
}

/// Prediction interval and update decimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSchedule<S> {
    /// Prediction interval [s].
    pub dt_predict: S,
    /// One update every this many prediction steps.
    pub update_every: usize,
}

impl<S: Real> SampleSchedule<S> {
    pub fn new(dt_predict: S, update_every: usize) -> Result<Self> {
        if !(dt_predict > S::zero()) || update_every == 0 {
            return Err(Error::config("schedule needs dt_predict > 0 and update_every >= 1"));
        }
        Ok(Self { dt_predict, update_every })
    }

    /// Schedule for a measurement rate [samples/s]; the sample interval must
    /// be an integer multiple of `dt_predict`.
    pub fn for_rate(dt_predict: S, rate: S) -> Result<Self> {
        if !(rate > S::zero()) {
            return Err(Error::config("sample rate must be positive"));
        }
        let ratio = (S::one() / (rate * dt_predict)).as_f64();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
            return Err(Error::config(format!("sample interval 1/{rate} s is not a multiple of {dt_predict} s")));
        }
        Self::new(dt_predict, n as usize)
    }

    pub fn sample_interval(&self) -> S {
        self.dt_predict * S::from_count(self.update_every)
    }
}

/// Piecewise-constant inputs at the prediction instants.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSeries<S> {
    pub t: Vec<S>,
    /// Mass flow rate [kg/s].
    pub mdot: Vec<S>,
    /// Inlet temperature [K].
    pub t_in: Vec<S>,
}

/// Output samples; a row containing non-finite values counts as missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries<S> {
    pub t: Vec<S>,
    pub y: Vec<DVector<S>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Continue with prediction only.
    Skip,
    Abort,
}

/// Per-step record of a filter run.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub t: Vec<S>,
    pub x_hat: Vec<DVector<S>>,
    pub soc: Vec<S>,
    pub trace_p: Vec<S>,
    /// Innovation norm at update steps.
    pub innovation_norm: Vec<Option<S>>,
    /// `(time, innovation)` for every applied update.
    pub innovations: Vec<(S, DVector<S>)>,
    pub jitter_events: usize,
    pub skipped_updates: usize,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Self {
            t: Vec::new(),
            x_hat: Vec::new(),
            soc: Vec::new(),
            trace_p: Vec::new(),
            innovation_norm: Vec::new(),
            innovations: Vec::new(),
            jitter_events: 0,
            skipped_updates: 0,
        }
    }
}

/// Filter configuration shared across a run.
#[derive(Debug, Clone)]
pub struct FilterSetup<'a, S> {
    pub sys: &'a LpvSystem<S>,
    pub noise: &'a NoiseModel<S>,
    pub soc: &'a SocParams<S>,
    pub schedule: SampleSchedule<S>,
    pub missing: MissingPolicy,
}

/// Runs the filter over `inputs`, updating every `update_every` prediction
/// steps (including the initial instant) with the measurement whose timestamp
/// lies within half a prediction interval.
pub fn run_filter<S: Real>(
    initial: FilterState<S>,
    setup: &FilterSetup<'_, S>,
    inputs: &InputSeries<S>,
    measurements: &MeasurementSeries<S>,
) -> Result<Trajectory<S>> {
    run_filter_with(initial, setup, inputs, measurements, |_, _| {})
}

/// [`run_filter`] with a callback invoked after every step with the full
/// filter state and the update diagnostics, if an update was applied.
pub fn run_filter_with<S: Real, F>(
    initial: FilterState<S>,
    setup: &FilterSetup<'_, S>,
    inputs: &InputSeries<S>,
    measurements: &MeasurementSeries<S>,
    mut observe: F,
) -> Result<Trajectory<S>>
where
    F: FnMut(&FilterState<S>, Option<&UpdateInfo<S>>),
{
    let sys = setup.sys;
    let n = sys.n();
    let p_out = sys.c().nrows();
    if initial.x_hat.len() != n {
        return Err(Error::input("initial estimate does not match the model size"));
    }
    if setup.noise.w().nrows() != n || setup.noise.v().nrows() != p_out {
        return Err(Error::input("noise covariances do not match the model"));
    }
    let len = inputs.t.len();
    if len == 0 || inputs.mdot.len() != len || inputs.t_in.len() != len {
        return Err(Error::input("input series must be non-empty with equal channel lengths"));
    }
    check_increasing(&inputs.t, "input")?;
    check_increasing(&measurements.t, "measurement")?;
    if measurements.y.len() != measurements.t.len() {
        return Err(Error::input("measurement rows and timestamps differ in length"));
    }
    if let Some(bad) = measurements.y.iter().position(|y| y.len() != p_out) {
        return Err(Error::input(format!("measurement row {bad} has the wrong number of outputs")));
    }
    let dt_nom = setup.schedule.dt_predict;
    for w in inputs.t.windows(2) {
        let dt = w[1] - w[0];
        if (dt - dt_nom).abs() > S::lit(0.01) * dt_nom {
            return Err(Error::input(format!("input interval {dt} s at t = {} s differs from dt_predict {dt_nom} s", w[0])));
        }
    }

    let tol = dt_nom * S::lit(0.5);
    let mut traj = Trajectory::default();
    let mut next_meas = 0usize;
    let mut fs = initial;
    fs.t = inputs.t[0];

    for k in 0..len {
        if k > 0 {
            let dt = inputs.t[k] - inputs.t[k - 1];
            fs = predict(&fs, sys, inputs.mdot[k - 1], inputs.t_in[k - 1], setup.noise, dt)?;
            fs.t = inputs.t[k];
        }
        let mut info = None;
        if k % setup.schedule.update_every == 0 {
            let t = inputs.t[k];
            if next_meas < measurements.t.len() && measurements.t[next_meas] < t - tol {
                return Err(Error::input(format!(
                    "measurement at t = {} s does not align with an update instant",
                    measurements.t[next_meas]
                )));
            }
            let row =
                (next_meas < measurements.t.len() && (measurements.t[next_meas] - t).abs() <= tol).then(|| &measurements.y[next_meas]);
            if row.is_some() {
                next_meas += 1;
            }
            match row.filter(|y| y.iter().all(|v| v.finite())) {
                Some(y) => {
                    let (next, upd) = update(&fs, y, sys.c(), setup.noise.v())?;
                    fs = next;
                    if upd.jittered {
                        traj.jitter_events += 1;
                    }
                    info = Some(upd);
                }
                None => match setup.missing {
                    MissingPolicy::Skip => traj.skipped_updates += 1,
                    MissingPolicy::Abort => {
                        return Err(Error::input(format!("missing measurement at update instant t = {t} s")));
                    }
                },
            }
        }
        let h = total_enthalpy(&fs.x_hat, sys.grid(), sys.pcm()).map_err(|e| diverged(&fs, &e.to_string()))?;
        traj.t.push(fs.t);
        traj.x_hat.push(fs.x_hat.clone());
        traj.soc.push(state_of_charge(h, setup.soc)?);
        traj.trace_p.push(fs.trace_p());
        traj.innovation_norm.push(info.as_ref().map(|i| i.innovation.norm()));
        if let Some(i) = &info {
            traj.innovations.push((fs.t, i.innovation.clone()));
        }
        observe(&fs, info.as_ref());
    }
    Ok(traj)
}

fn check_increasing<S: Real>(t: &[S], what: &str) -> Result<()> {
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::input(format!("{what} timestamps not strictly increasing at row {}", i + 1)));
    }
    Ok(())
}
