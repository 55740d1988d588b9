//! Thermodynamic primitives of the composite phase-change material (CPCM):
//! effective specific heat, melt fraction, specific and total enthalpy, and
//! the enthalpy-based state of charge.
//!
//! All temperatures are absolute (kelvin).

use crate::error::{Error, Result};
use crate::grid::{CellRole, GridSpec};
use crate::scalar::{clamp_exp_arg, sigmoid, Real};
use nalgebra::DVector;

/// Thermal properties of the CPCM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcmThermalParams<S> {
    cp_sol: S,
    cp_liq: S,
    h_fus: S,
    t_pc: S,
    delta_t_pc: S,
}

impl<S: Real> PcmThermalParams<S> {
    /// `cp_sol`, `cp_liq` in J/(kg·K), `h_fus` in J/kg, `t_pc` and the latent
    /// band width `delta_t_pc` in K.
    pub fn new(cp_sol: S, cp_liq: S, h_fus: S, t_pc: S, delta_t_pc: S) -> Result<Self> {
        let all_finite = [cp_sol, cp_liq, h_fus, t_pc, delta_t_pc].iter().all(|v| v.finite());
        if !all_finite {
            return Err(Error::config("PCM parameters must be finite"));
        }
        if cp_sol <= S::zero() || cp_liq <= S::zero() {
            return Err(Error::config("solid and liquid specific heats must be positive"));
        }
        if h_fus <= S::zero() {
            return Err(Error::config("enthalpy of fusion must be positive"));
        }
        if delta_t_pc <= S::zero() {
            return Err(Error::config("latent band width must be positive"));
        }
        if t_pc <= S::zero() {
            return Err(Error::config("phase-change temperature must be absolute (K) and positive"));
        }
        Ok(Self { cp_sol, cp_liq, h_fus, t_pc, delta_t_pc })
    }

    /// Builds the parameters from the width parameter `alpha` [1/K] instead of
    /// the band width.
    pub fn with_alpha(cp_sol: S, cp_liq: S, h_fus: S, t_pc: S, alpha: S) -> Result<Self> {
        if !(alpha > S::zero()) {
            return Err(Error::config("alpha must be positive"));
        }
        Self::new(cp_sol, cp_liq, h_fus, t_pc, S::lit(8.0) / alpha)
    }

    pub fn cp_sol(&self) -> S {
        self.cp_sol
    }
    pub fn cp_liq(&self) -> S {
        self.cp_liq
    }
    pub fn h_fus(&self) -> S {
        self.h_fus
    }
    pub fn t_pc(&self) -> S {
        self.t_pc
    }
    pub fn delta_t_pc(&self) -> S {
        self.delta_t_pc
    }

    /// Width parameter `alpha = 8 / delta_t_pc` [1/K].
    pub fn alpha(&self) -> S {
        S::lit(8.0) / self.delta_t_pc
    }
}

/// Working-fluid properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams<S> {
    /// Specific heat [J/(kg·K)].
    pub cp_f: S,
    /// Convective heat transfer coefficient [W/(m²·K)].
    pub u: S,
}

impl<S: Real> FluidParams<S> {
    pub fn new(cp_f: S, u: S) -> Result<Self> {
        if !(cp_f > S::zero() && cp_f.finite()) {
            return Err(Error::config("fluid specific heat must be positive"));
        }
        if !(u > S::zero() && u.finite()) {
            return Err(Error::config("convective coefficient must be positive"));
        }
        Ok(Self { cp_f, u })
    }
}

fn check_temp<S: Real>(t: S) -> Result<()> {
    if t.finite() {
        Ok(())
    } else {
        Err(Error::input(format!("non-finite temperature {t}")))
    }
}

#[inline]
pub(crate) fn cp_eff_unchecked<S: Real>(t: S, p: &PcmThermalParams<S>) -> S {
    let z = clamp_exp_arg(p.alpha() * (t - p.t_pc));
    let s = sigmoid(z);
    // 1 / (2 + e^-z + e^z) == s (1 - s)
    let bump = s * sigmoid(-z);
    p.cp_sol + (p.cp_liq - p.cp_sol) * s + p.h_fus * p.alpha() * bump
}

/// Effective specific heat of the CPCM at temperature `t` [J/(kg·K)].
///
/// Sensible heat blends from `cp_sol` to `cp_liq` through the melt fraction
/// and the latent heat appears as a bell-shaped bump centred on `t_pc`.
pub fn effective_specific_heat<S: Real>(t: S, p: &PcmThermalParams<S>) -> Result<S> {
    check_temp(t)?;
    Ok(cp_eff_unchecked(t, p))
}

/// Liquid volume fraction of the CPCM, in (0, 1).
pub fn melt_fraction<S: Real>(t: S, p: &PcmThermalParams<S>) -> Result<S> {
    check_temp(t)?;
    Ok(sigmoid(p.alpha() * (t - p.t_pc)))
}

/// `ln((1 + e^z) / 2)` without overflow.
#[inline]
fn log_half_one_plus_exp<S: Real>(z: S) -> S {
    let softplus = if z > S::zero() { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - S::lit(std::f64::consts::LN_2)
}

#[inline]
pub(crate) fn specific_enthalpy_unchecked<S: Real>(t: S, p: &PcmThermalParams<S>) -> S {
    let alpha = p.alpha();
    let dt = t - p.t_pc;
    let z = alpha * dt;
    let half = S::lit(0.5);
    p.h_fus * half * (half * z).tanh() + dt * p.cp_sol + (p.cp_liq - p.cp_sol) / alpha * log_half_one_plus_exp(z)
}

/// Specific enthalpy of the CPCM relative to `t_pc` [J/kg]; the
/// antiderivative of [`effective_specific_heat`] that vanishes at `t_pc`.
pub fn specific_enthalpy<S: Real>(t: S, p: &PcmThermalParams<S>) -> Result<S> {
    check_temp(t)?;
    Ok(specific_enthalpy_unchecked(t, p))
}

/// Stored energy: sum of `m_j h(T_j)` over the CPCM cells [J].
pub fn total_enthalpy<S: Real>(x: &DVector<S>, grid: &GridSpec<S>, p: &PcmThermalParams<S>) -> Result<S> {
    if x.len() != grid.n() {
        return Err(Error::input(format!("state has {} entries, grid has {} cells", x.len(), grid.n())));
    }
    let mut h = S::zero();
    for (j, cell) in grid.cells().iter().enumerate() {
        if cell.role == CellRole::Cpcm {
            check_temp(x[j])?;
            h += cell.mass * specific_enthalpy_unchecked(x[j], p);
        }
    }
    Ok(h)
}

/// State-of-charge bounds. `h_min`/`h_max` are always derived from the grid by
/// evaluating the total enthalpy at uniform `t_min`/`t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocParams<S> {
    t_min: S,
    t_max: S,
    h_min: S,
    h_max: S,
}

impl<S: Real> SocParams<S> {
    pub fn from_grid(grid: &GridSpec<S>, p: &PcmThermalParams<S>, t_min: S, t_max: S) -> Result<Self> {
        if !(t_min < p.t_pc() && p.t_pc() < t_max) {
            return Err(Error::config(format!(
                "SOC temperatures must bracket the phase-change temperature: {t_min} < {} < {t_max}",
                p.t_pc()
            )));
        }
        let h_min = total_enthalpy(&DVector::from_element(grid.n(), t_min), grid, p)?;
        let h_max = total_enthalpy(&DVector::from_element(grid.n(), t_max), grid, p)?;
        if !(h_min < h_max) {
            return Err(Error::config("grid has no CPCM mass; SOC is undefined"));
        }
        Ok(Self { t_min, t_max, h_min, h_max })
    }

    #[cfg(test)]
    pub(crate) fn from_raw(t_min: S, t_max: S, h_min: S, h_max: S) -> Self {
        Self { t_min, t_max, h_min, h_max }
    }

    pub fn t_min(&self) -> S {
        self.t_min
    }
    pub fn t_max(&self) -> S {
        self.t_max
    }
    pub fn h_min(&self) -> S {
        self.h_min
    }
    pub fn h_max(&self) -> S {
        self.h_max
    }
}

/// Piecewise-linear state of charge: 1 at (or below) minimum stored energy, 0
/// at (or above) maximum.
pub fn state_of_charge<S: Real>(h: S, s: &SocParams<S>) -> Result<S> {
    if !(s.h_min < s.h_max) {
        return Err(Error::config("SOC bounds require h_min < h_max"));
    }
    if !h.finite() {
        return Err(Error::input("non-finite enthalpy"));
    }
    Ok(if h < s.h_min {
        S::one()
    } else if h > s.h_max {
        S::zero()
    } else {
        (s.h_max - h) / (s.h_max - s.h_min)
    })
}
