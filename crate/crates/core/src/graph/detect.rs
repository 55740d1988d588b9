//! Numerical uniform-detectability evidence for the pair `(Phi(x), C)`.
//!
//! The structural argument: a connected conduction graph drives every
//! unforced trajectory towards the consensus direction `1`, so only that
//! direction needs to be seen by the sensors, which holds whenever some row of
//! `C` has a non-zero sum. The finite-horizon observability gramian evaluated
//! on sample states is reported alongside as numerical evidence; its bound is
//! taken over the span of the component indicators, the only modes that do
//! not decay without measurement.

use super::LpvSystem;
use crate::discretize::matrix_exponential;
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone)]
pub struct DetectabilityReport<S> {
    /// Conduction graph is connected at every sample state.
    pub connected: bool,
    /// Some row of `C` has a non-zero sum.
    pub c_rowsum_ok: bool,
    /// Largest number of graph components seen over the samples.
    pub components: usize,
    /// Smallest gramian quadratic form over unit vectors in the span of the
    /// component indicators (the non-decaying modes), minimised over samples.
    pub gramian_marginal_min: S,
    /// Unit direction attaining `gramian_marginal_min`.
    pub weakest_marginal_direction: DVector<S>,
    /// Smallest quadratic form over unit vectors orthogonal to `1`.
    pub gramian_min_offspan: S,
    /// `z' W z` for `z = 1/sqrt(n)`, minimised over samples.
    pub gramian_consensus: S,
    /// A component indicator invisible to every sensor, if any.
    pub null_direction: Option<DVector<S>>,
    pub detectable: bool,
}

impl<S: Real> DetectabilityReport<S> {
    /// Lower bound of the gramian on the modes that do not decay on their own.
    pub fn gramian_lower_bound(&self) -> S {
        self.gramian_marginal_min
    }
}

/// Finite-horizon observability gramian `sum_{i=0..q} (Phi^i)' C' C Phi^i`.
pub fn gramian<S: Real>(phi: &DMatrix<S>, c: &DMatrix<S>, q: usize) -> DMatrix<S> {
    let n = phi.nrows();
    let ctc = c.transpose() * c;
    let mut w = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    for i in 0..=q {
        w += power.transpose() * &ctc * &power;
        if i < q {
            power = phi * power;
        }
    }
    w
}

/// Orthonormal basis of the complement of `span{1}` as columns.
fn consensus_complement<S: Real>(n: usize) -> DMatrix<S> {
    let mut m = DMatrix::<S>::identity(n, n);
    m.column_mut(0).fill(S::one());
    let q = m.qr().q();
    q.columns(1, n - 1).into_owned()
}

/// Smallest eigenpair of the symmetric `basis' W basis`, mapped back.
fn min_on_subspace<S: Real>(w: &DMatrix<S>, basis: &DMatrix<S>) -> (S, DVector<S>) {
    let eig = SymmetricEigen::new(basis.transpose() * w * basis);
    let (k, &lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty spectrum");
    (lam, basis * eig.eigenvectors.column(k))
}

/// Checks detectability of `sys` over the sample states with step `dt` and a
/// horizon of `q` steps.
pub fn check_detectability<S: Real>(sys: &LpvSystem<S>, x_samples: &[DVector<S>], dt: S, q: usize) -> Result<DetectabilityReport<S>> {
    if x_samples.is_empty() {
        return Err(Error::input("detectability check needs at least one sample state"));
    }
    if !(dt > S::zero()) {
        return Err(Error::input("detectability step must be positive"));
    }
    let n = sys.n();
    let c = sys.c();
    let c_rowsum_ok = c.row_iter().any(|r| r.sum() != S::zero());
    let complement = if n > 1 { Some(consensus_complement::<S>(n)) } else { None };
    let ones = DVector::from_element(n, S::one() / S::from_count(n).sqrt());
    let big = S::max_value().unwrap_or(S::one());

    let mut connected = true;
    let mut components = 1;
    let mut marginal_min = big;
    let mut weakest_marginal = ones.clone();
    let mut min_offspan = big;
    let mut min_consensus = big;
    let mut null_direction = None;
    for x in x_samples {
        let graph = sys.graph(x)?;
        let (labels, count) = graph.components();
        connected &= count == 1;
        components = components.max(count);
        let (a, _) = sys.matrices(x, x[0])?;
        let phi = matrix_exponential(&a, dt)?;
        let w = gramian(&phi, c, q);

        let mut indicators = DMatrix::zeros(n, count);
        for (j, &label) in labels.iter().enumerate() {
            indicators[(j, label)] = S::one();
        }
        for mut col in indicators.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        let (lam, dir) = min_on_subspace(&w, &indicators);
        if lam < marginal_min {
            marginal_min = lam;
            weakest_marginal = dir;
        }
        if null_direction.is_none() {
            null_direction = indicators.column_iter().find(|z| (c * z).amax() == S::zero()).map(|z| z.into_owned());
        }

        min_consensus = min_consensus.min((ones.transpose() * &w * &ones)[(0, 0)]);
        match &complement {
            Some(basis) => min_offspan = min_offspan.min(min_on_subspace(&w, basis).0),
            None => min_offspan = min_offspan.min(min_consensus),
        }
    }
    Ok(DetectabilityReport {
        connected,
        c_rowsum_ok,
        components,
        gramian_marginal_min: marginal_min,
        weakest_marginal_direction: weakest_marginal,
        gramian_min_offspan: min_offspan,
        gramian_consensus: min_consensus,
        null_direction,
        detectable: connected && c_rowsum_ok,
    })
}
