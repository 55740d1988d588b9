//! Synthetic driving profiles. These are made-up charge/discharge cycles with
//! flow steps up to 0.183 kg/s and inlet temperatures on both sides of the
//! latent band; they are not recorded data.

use crate::simulate::InputProfile;

/// `(start [s], mdot [kg/s], T_in [K])` of the default 1200 s cycle.
pub const SYNTHETIC_CYCLE: [(f64, f64, f64); 10] = [
    (0.0, 0.05, 284.0),
    (60.0, 0.183, 297.0),
    (240.0, 0.0, 297.0),
    (330.0, 0.12, 291.0),
    (480.0, 0.183, 283.0),
    (660.0, 0.0, 283.0),
    (750.0, 0.08, 300.0),
    (900.0, 0.183, 288.0),
    (1020.0, 0.0, 288.0),
    (1080.0, 0.15, 282.0),
];

/// The default synthetic cycle as held inputs.
pub fn synthetic_cycle() -> InputProfile<f64> {
    let (t, rest): (Vec<f64>, Vec<(f64, f64)>) = SYNTHETIC_CYCLE.iter().map(|&(t, m, ti)| (t, (m, ti))).unzip();
    let (mdot, t_in) = rest.into_iter().unzip();
    InputProfile::new(t, mdot, t_in).expect("built-in profile is valid")
}

/// The synthetic cycle repeated back to back `times` times with period `period` [s].
pub fn repeated_cycle(times: usize, period: f64) -> InputProfile<f64> {
    let (mut t, mut mdot, mut t_in) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..times {
        for &(s, m, ti) in &SYNTHETIC_CYCLE {
            t.push(s + r as f64 * period);
            mdot.push(m);
            t_in.push(ti);
        }
    }
    InputProfile::new(t, mdot, t_in).expect("repeated profile is valid")
}

/// Constant flow with an inlet step at `t_step`.
pub fn inlet_step(mdot: f64, t_before: f64, t_after: f64, t_step: f64) -> InputProfile<f64> {
    InputProfile::new(vec![0.0, t_step], vec![mdot, mdot], vec![t_before, t_after]).expect("step profile is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_crosses_latent_band_and_flow_range() {
        let p = synthetic_cycle();
        assert!(p.t_in.iter().any(|&t| t < 285.5) && p.t_in.iter().any(|&t| t > 293.5));
        assert!(p.mdot.contains(&0.0));
        assert!(p.mdot.iter().all(|&m| (0.0..=0.183).contains(&m)));
    }

    #[test]
    fn repeats_are_periodic() {
        let p = repeated_cycle(3, 1200.0);
        assert_eq!(p.at(100.0), p.at(2500.0));
        assert_eq!(p.t.len(), 30);
    }
}
