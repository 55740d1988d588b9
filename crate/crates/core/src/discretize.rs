//! Frozen-in-time exact discretization of `x' = A x + B u` with the input held
//! constant over the step.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

/// One discrete step: `x_{k+1} = Phi x_k + Gamma u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStep<S> {
    pub phi: DMatrix<S>,
    pub gamma: DVector<S>,
    pub dt: S,
}

impl<S: Real> DiscreteStep<S> {
    pub fn apply(&self, x: &DVector<S>, u: S) -> DVector<S> {
        &self.phi * x + &self.gamma * u
    }

    /// Largest `|sum_j Phi_ij - 1|`; zero when `A 1 = 0`.
    pub fn row_sum_defect(&self) -> S {
        self.phi.row_iter().map(|r| (r.sum() - S::one()).abs()).fold(S::zero(), |a, b| a.max(b))
    }

    /// Smallest entry of `Phi`; nonnegative for compartmental `A`.
    pub fn min_phi_entry(&self) -> S {
        self.phi.iter().copied().fold(S::max_value().unwrap_or(S::one()), |a, b| a.min(b))
    }
}

const THETA: [(usize, f64); 4] =
    [(3, 1.495_585_217_958_292e-2), (5, 2.539_398_330_063_23e-1), (7, 9.504_178_996_162_932e-1), (9, 2.097_847_961_257_068)];
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1512.0, 56.0, 1.0];
const PADE_9: [f64; 10] =
    [17_643_225_600.0, 8_821_612_800.0, 2_075_673_600.0, 302_702_400.0, 30_270_240.0, 2_162_160.0, 110_880.0, 3960.0, 90.0, 1.0];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn norm1<S: Real>(a: &DMatrix<S>) -> S {
    a.column_iter().map(|c| c.iter().fold(S::zero(), |acc, v| acc + v.abs())).fold(S::zero(), |a, b| a.max(b))
}

/// `(U, V)` of the degree-m Padé approximant for m in {3, 5, 7, 9}.
fn pade_low<S: Real>(a: &DMatrix<S>, coeffs: &[f64]) -> (DMatrix<S>, DMatrix<S>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in 0..coeffs.len() / 2 {
        v += &power * S::lit(coeffs[2 * k]);
        u += &power * S::lit(coeffs[2 * k + 1]);
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade_13<S: Real>(a: &DMatrix<S>) -> (DMatrix<S>, DMatrix<S>) {
    let n = a.nrows();
    let b = |k: usize| S::lit(PADE_13[k]);
    let id = DMatrix::<S>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = a * (&a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    (u, v)
}

fn solve_pade<S: Real>(u: DMatrix<S>, v: DMatrix<S>) -> Result<DMatrix<S>> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p).ok_or_else(|| Error::Numerical("singular Padé denominator in matrix exponential".into()))
}

/// `exp(A dt)` by scaling and squaring with a Padé approximant whose degree is
/// chosen from the 1-norm of `A dt`.
pub fn matrix_exponential<S: Real>(a: &DMatrix<S>, dt: S) -> Result<DMatrix<S>> {
    if !a.is_square() {
        return Err(Error::input(format!("matrix exponential of non-square {}x{} matrix", a.nrows(), a.ncols())));
    }
    if !dt.finite() || a.iter().any(|v| !v.finite()) {
        return Err(Error::input("matrix exponential of non-finite input"));
    }
    let n = a.nrows();
    if dt == S::zero() {
        return Ok(DMatrix::identity(n, n));
    }
    let scaled = a * dt;
    let norm = norm1(&scaled);
    for &(m, theta) in &THETA {
        if norm <= S::lit(theta) {
            let coeffs: &[f64] = match m {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(&scaled, coeffs);
            return solve_pade(u, v);
        }
    }
    let ratio = (norm / S::lit(THETA_13)).as_f64();
    let squarings = ratio.log2().ceil().max(0.0) as i32;
    let reduced = scaled * S::lit(0.5f64.powi(squarings));
    let (u, v) = pade_13(&reduced);
    let mut e = solve_pade(u, v)?;
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}

/// `Phi = exp(A dt)` and `Gamma = int_0^dt exp(A s) B ds`, both read from the
/// exponential of the augmented matrix `[[A, B], [0, 0]]`; valid for singular `A`.
pub fn discretize<S: Real>(a: &DMatrix<S>, b: &DVector<S>, dt: S) -> Result<DiscreteStep<S>> {
    if !(dt > S::zero()) || !dt.finite() {
        return Err(Error::input(format!("discretization step must be positive, got {dt}")));
    }
    let n = a.nrows();
    if !a.is_square() || b.len() != n {
        return Err(Error::input("A must be square and B must match its size"));
    }
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, 1)).copy_from(b);
    let e = matrix_exponential(&aug, dt)?;
    Ok(DiscreteStep { phi: e.view((0, 0), (n, n)).into_owned(), gamma: e.view((0, n), (n, 1)).column(0).into_owned(), dt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Truncated Taylor series with many terms, computed on a scaled matrix
    /// and squared back: an independent reference for small test matrices.
    fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let s = 10;
        let scaled = a / 2f64.powi(s);
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn zero_step_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matrix_exponential(&a, 0.0).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn scalar_decay() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let e = matrix_exponential(&a, 0.1).unwrap();
        assert_relative_eq!(e[(0, 0)], (-0.1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(e[(0, 0)], 0.904_837_418_035_959_6, max_relative = 1e-15);
    }

    #[test]
    fn nilpotent_terminates() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        for &dt in &[0.01f64, 1.0, 37.0] {
            let e = matrix_exponential(&a, dt).unwrap();
            let expect = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
            assert!((e - expect).amax() <= 1e-13 * dt.max(1.0));
        }
    }

    #[test]
    fn every_pade_degree_matches_taylor() {
        let base = DMatrix::from_row_slice(3, 3, &[-0.4, 0.3, 0.1, 0.2, -0.5, 0.3, 0.05, 0.25, -0.3]);
        let base = &base / norm1(&base);
        // norms straddle each degree threshold and the squaring branch
        for &scale in &[0.01, 0.2, 0.9, 2.0, 5.0, 40.0] {
            let e = matrix_exponential(&base, scale).unwrap();
            let reference = taylor_expm(&(&base * scale));
            let rel = (&e - &reference).amax() / reference.amax();
            assert!(rel < 1e-12, "scale {scale}: relative error {rel:e}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_element(1, 1, f64::NAN);
        assert!(matches!(matrix_exponential(&a, 1.0), Err(Error::InvalidInput(_))));
        let b = DVector::from_element(1, 1.0);
        assert!(discretize(&DMatrix::from_element(1, 1, -1.0), &b, 0.0).is_err());
    }

    #[test]
    fn zero_dynamics_gamma_is_dt_b() {
        let a = DMatrix::zeros(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let step = discretize(&a, &b, 0.25).unwrap();
        assert!((step.gamma - &b * 0.25).amax() < 1e-15);
        assert_eq!(step.phi, DMatrix::identity(3, 3));
    }

    #[test]
    fn tiny_step_gamma_first_order() {
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 3.0, 1.0, -1.0]);
        let b = DVector::from_vec(vec![2.0, 0.0]);
        let dt = 1e-9;
        let step = discretize(&a, &b, dt).unwrap();
        assert_relative_eq!(step.gamma[0], dt * 2.0, max_relative = 1e-6);
    }

    #[test]
    fn gamma_closed_form_for_invertible_a() {
        // A - eps I is invertible; Gamma = A^-1 (e^{A dt} - I) B.
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.5, 0.5, 1.0, -1.0, 0.0, 0.2, 0.3, -0.5]) - DMatrix::identity(3, 3) * 0.1;
        let b = DVector::from_vec(vec![1.0, 0.5, -0.25]);
        for &dt in &[0.0125, 0.5, 3.0] {
            let step = discretize(&a, &b, dt).unwrap();
            let expected = a.clone().lu().solve(&((&step.phi - DMatrix::identity(3, 3)) * &b)).unwrap();
            assert!((&step.gamma - &expected).amax() < 1e-10, "dt {dt}");
        }
    }

    #[test]
    fn two_state_closed_form() {
        // A = k [[-1, 1], [1, -1]], eigenvalues 0 and -2k:
        // e^{A t} = 1/2 [[1 + e, 1 - e], [1 - e, 1 + e]] with e = exp(-2 k t).
        let k: f64 = 0.7;
        let a = DMatrix::from_row_slice(2, 2, &[-k, k, k, -k]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let t = 0.9;
        let step = discretize(&a, &b, t).unwrap();
        let e = (-2.0 * k * t).exp();
        let phi = DMatrix::from_row_slice(2, 2, &[1.0 + e, 1.0 - e, 1.0 - e, 1.0 + e]) * 0.5;
        assert!((&step.phi - phi).amax() < 1e-14);
        // Gamma = int_0^t first column of e^{A s} ds
        let g0 = 0.5 * (t + (1.0 - e) / (2.0 * k));
        let g1 = 0.5 * (t - (1.0 - e) / (2.0 * k));
        assert_relative_eq!(step.gamma[0], g0, max_relative = 1e-13);
        assert_relative_eq!(step.gamma[1], g1, max_relative = 1e-13);
        assert!(step.row_sum_defect() < 1e-15);
        assert!(step.min_phi_entry() > 0.0);
    }

    #[test]
    fn f32_instantiation() {
        let a = DMatrix::<f32>::from_element(1, 1, -1.0);
        let e = matrix_exponential(&a, 0.5).unwrap();
        assert!((e[(0, 0)] - (-0.5f32).exp()).abs() < 1e-6);
    }
}
