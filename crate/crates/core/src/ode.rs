//! Adaptive explicit Runge-Kutta integration with the Bogacki-Shampine 3(2)
//! embedded pair (first-same-as-last), cubic Hermite dense output and
//! max-norm error control.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::DVector;

/// Integrator tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig<S> {
    pub rel_tol: S,
    pub abs_tol: S,
    /// Largest step [s].
    pub max_dt: S,
    /// Steps below this abort the integration as stiff [s].
    pub min_dt: S,
}

impl<S: Real> OdeConfig<S> {
    pub fn new(rel_tol: S, abs_tol: S, max_dt: S) -> Result<Self> {
        let cfg = Self { rel_tol, abs_tol, max_dt, min_dt: S::lit(1e-12) };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: S| v > S::zero() && v.finite();
        if !(pos(self.rel_tol) && pos(self.abs_tol) && pos(self.max_dt) && pos(self.min_dt)) {
            return Err(Error::config("integrator tolerances and step limits must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// An accepted step, with enough data for cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct StepData<'a, S> {
    pub t0: S,
    pub t1: S,
    pub y0: &'a DVector<S>,
    pub y1: &'a DVector<S>,
    pub f0: &'a DVector<S>,
    pub f1: &'a DVector<S>,
}

impl<S: Real> StepData<'_, S> {
    /// Hermite interpolant at `t` in `[t0, t1]`.
    pub fn interpolate(&self, t: S) -> DVector<S> {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = S::lit(2.0);
        let three = S::lit(3.0);
        let h00 = two * s3 - three * s2 + S::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        self.y0 * h00 + self.f0 * (h10 * h) + self.y1 * h01 + self.f1 * (h11 * h)
    }
}

/// Stateful Bogacki-Shampine integrator. The state can be advanced over
/// consecutive intervals (for example between input breakpoints) while the
/// step-size controller carries over.
pub struct Integrator<S> {
    cfg: OdeConfig<S>,
    t: S,
    y: DVector<S>,
    f: Option<DVector<S>>,
    h: Option<S>,
    stats: OdeStats,
}

impl<S: Real> Integrator<S> {
    pub fn new(cfg: OdeConfig<S>, t0: S, y0: DVector<S>) -> Result<Self> {
        cfg.validate()?;
        if y0.iter().any(|v| !v.finite()) {
            return Err(Error::input("initial state is not finite"));
        }
        Ok(Self { cfg, t: t0, y: y0, f: None, h: None, stats: OdeStats::default() })
    }

    pub fn t(&self) -> S {
        self.t
    }
    pub fn y(&self) -> &DVector<S> {
        &self.y
    }
    pub fn stats(&self) -> OdeStats {
        self.stats
    }

    /// Forgets the cached derivative, e.g. after the right-hand side changed
    /// discontinuously at the current time.
    pub fn reset_derivative(&mut self) {
        self.f = None;
    }

    fn eval<F>(&mut self, rhs: &mut F, t: S, y: &DVector<S>) -> Result<DVector<S>>
    where
        F: FnMut(S, &DVector<S>, &mut DVector<S>) -> Result<()>,
    {
        let mut out = DVector::zeros(y.len());
        rhs(t, y, &mut out)?;
        self.stats.evaluations += 1;
        if out.iter().any(|v| !v.finite()) {
            return Err(Error::Numerical(format!("non-finite derivative at t = {t}")));
        }
        Ok(out)
    }

    fn error_norm(&self, err: &DVector<S>, y0: &DVector<S>, y1: &DVector<S>) -> S {
        let mut worst = S::zero();
        for i in 0..err.len() {
            let scale = self.cfg.abs_tol + self.cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            worst = worst.max(err[i].abs() / scale);
        }
        worst
    }

    fn initial_step(&self, f0: &DVector<S>, span: S) -> S {
        let mut rate = S::zero();
        for i in 0..f0.len() {
            let scale = self.cfg.abs_tol + self.cfg.rel_tol * self.y[i].abs();
            rate = rate.max(f0[i].abs() / scale);
        }
        let guess = if rate > S::zero() { S::lit(0.8) / rate.powf(S::one() / S::lit(3.0)) } else { span };
        guess.min(self.cfg.max_dt).min(span).max(self.cfg.min_dt)
    }

    /// Advances to exactly `t_end`, calling `on_step` after every accepted step.
    pub fn advance<F, O>(&mut self, t_end: S, rhs: &mut F, mut on_step: O) -> Result<()>
    where
        F: FnMut(S, &DVector<S>, &mut DVector<S>) -> Result<()>,
        O: FnMut(&StepData<'_, S>) -> Result<()>,
    {
        let half = S::lit(0.5);
        let three_quarters = S::lit(0.75);
        let (b1, b2, b3) = (S::lit(2.0 / 9.0), S::lit(1.0 / 3.0), S::lit(4.0 / 9.0));
        let (e1, e2, e3, e4) = (S::lit(-5.0 / 72.0), S::lit(1.0 / 12.0), S::lit(1.0 / 9.0), S::lit(-1.0 / 8.0));
        let third = S::one() / S::lit(3.0);

        while self.t < t_end {
            let remaining = t_end - self.t;
            if remaining <= S::lit(1e-14) * self.t.abs().max(S::one()) {
                self.t = t_end;
                break;
            }
            let f0 = match self.f.take() {
                Some(f) => f,
                None => {
                    let (t, y) = (self.t, self.y.clone());
                    self.eval(rhs, t, &y)?
                }
            };
            let mut h = match self.h {
                Some(h) => h,
                None => self.initial_step(&f0, remaining),
            };
            loop {
                h = h.min(self.cfg.max_dt);
                let last = h >= remaining;
                if last {
                    h = remaining;
                }
                let t = self.t;
                let y = self.y.clone();
                let k2 = self.eval(rhs, t + h * half, &(&y + &f0 * (h * half)))?;
                let k3 = self.eval(rhs, t + h * three_quarters, &(&y + &k2 * (h * three_quarters)))?;
                let y1 = &y + (&f0 * b1 + &k2 * b2 + &k3 * b3) * h;
                let t1 = if last { t_end } else { t + h };
                let k4 = self.eval(rhs, t1, &y1)?;
                let err = (&f0 * e1 + &k2 * e2 + &k3 * e3 + &k4 * e4) * h;
                let norm = self.error_norm(&err, &y, &y1);
                let factor = if norm > S::zero() {
                    (S::lit(0.8) * (S::one() / norm).powf(third)).min(S::lit(5.0)).max(S::lit(0.2))
                } else {
                    S::lit(5.0)
                };
                if norm <= S::one() {
                    self.stats.accepted += 1;
                    on_step(&StepData { t0: t, t1, y0: &y, y1: &y1, f0: &f0, f1: &k4 })?;
                    self.t = t1;
                    self.y = y1;
                    self.f = Some(k4);
                    // a truncated final step says nothing about the natural step size
                    if !last || factor < S::one() {
                        self.h = Some(h * factor);
                    } else if self.h.is_none() {
                        self.h = Some(h);
                    }
                    break;
                }
                self.stats.rejected += 1;
                h *= factor.min(S::lit(0.9));
                if h < self.cfg.min_dt {
                    return Err(Error::Stiffness {
                        t: t.as_f64(),
                        h: h.as_f64(),
                        hint: "the problem is too stiff for an explicit pair; refine tolerances or coarsen the grid".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Integrates from `t0` to the last of `out_times` (ascending, all `>= t0`),
/// returning the interpolated state at each output time. Integration never
/// steps across an entry of `breakpoints`.
pub fn integrate<S: Real, F>(
    cfg: OdeConfig<S>,
    t0: S,
    y0: DVector<S>,
    breakpoints: &[S],
    out_times: &[S],
    mut rhs: F,
) -> Result<(Vec<DVector<S>>, OdeStats)>
where
    F: FnMut(S, &DVector<S>, &mut DVector<S>) -> Result<()>,
{
    if out_times.windows(2).any(|w| w[1] < w[0]) || out_times.first().is_some_and(|&t| t < t0) {
        return Err(Error::input("output times must be ascending and not before t0"));
    }
    let mut out = Vec::with_capacity(out_times.len());
    let Some(&t_end) = out_times.last() else {
        return Ok((out, OdeStats::default()));
    };
    let mut integ = Integrator::new(cfg, t0, y0)?;
    let mut next = 0;
    while next < out_times.len() && out_times[next] <= t0 {
        out.push(integ.y().clone());
        next += 1;
    }
    let mut stops: Vec<S> = breakpoints.iter().copied().filter(|&b| b > t0 && b < t_end).collect();
    stops.push(t_end);
    for stop in stops {
        integ.advance(stop, &mut rhs, |step| {
            while next < out_times.len() && out_times[next] <= step.t1 {
                out.push(step.interpolate(out_times[next]));
                next += 1;
            }
            Ok(())
        })?;
        integ.reset_derivative();
    }
    Ok((out, integ.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(tol: f64) -> OdeConfig<f64> {
        OdeConfig::new(tol, tol * 1e-3, 10.0).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let (ys, stats) = integrate(cfg(1e-8), 0.0, DVector::from_element(1, 1.0), &[], &times, |_, y, dy| {
            dy[0] = -y[0];
            Ok(())
        })
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-7, "t = {t}");
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn third_order_convergence() {
        // fixed tolerance sweep on y' = cos(t) y, y = exp(sin t)
        let err = |tol: f64| {
            let (ys, _) = integrate(cfg(tol), 0.0, DVector::from_element(1, 1.0), &[], &[3.0], |t, y, dy| {
                dy[0] = t.cos() * y[0];
                Ok(())
            })
            .unwrap();
            (ys[0][0] - 3.0f64.sin().exp()).abs()
        };
        let coarse = err(1e-5);
        let fine = err(1e-8);
        assert!(fine < coarse / 50.0, "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn respects_breakpoints() {
        let mut seen = Vec::new();
        let mut integ = Integrator::new(cfg(1e-6), 0.0, DVector::from_element(1, 0.0)).unwrap();
        let mut rhs = |t: f64, _: &DVector<f64>, dy: &mut DVector<f64>| {
            dy[0] = if t < 1.0 { 1.0 } else { -1.0 };
            Ok(())
        };
        integ
            .advance(1.0, &mut rhs, |s| {
                seen.push(s.t1);
                Ok(())
            })
            .unwrap();
        assert_eq!(*seen.last().unwrap(), 1.0);
        integ.reset_derivative();
        integ.advance(2.0, &mut rhs, |_| Ok(())).unwrap();
        assert!((integ.y()[0]).abs() < 1e-10);
    }

    #[test]
    fn stiffness_is_reported() {
        let mut c = cfg(1e-6);
        c.min_dt = 1e-3;
        c.max_dt = 1e-3;
        // eigenvalue -1e6: the error control needs steps far below 1e-3
        let r = integrate(c, 0.0, DVector::from_element(1, 1.0), &[], &[1.0], |_, y, dy| {
            dy[0] = -1e6 * y[0];
            Ok(())
        });
        assert!(matches!(r, Err(Error::Stiffness { .. })));
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(OdeConfig::new(0.0, 1e-6, 1.0).is_err());
        assert!(OdeConfig::new(1e-6, 1e-6, -1.0).is_err());
    }
}
