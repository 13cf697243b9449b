//! Norm-preservation penalty on the backward error flow.
//!
//! For each `k = 1..T−1`, with `r = ∂E/∂x_{k+1}` and the one-step transport
//! `z = diag(σ′(x_k)) W_recᵀ r`:
//!
//! ```text
//! ratio_k = ‖z‖ / ‖r‖,   Ω_k = (ratio_k − 1)²,   Ω = Σ_k Ω_k
//! ```
//!
//! The immediate gradient freezes `x_k` and `r` and differentiates only through
//! the explicit `W_rec` in `z`:
//!
//! ```text
//! ∂⁺Ω_k/∂W_rec[a][b] = 2 (ratio_k − 1) / (‖r‖ ‖z‖) · r[a] · z[b] σ′(x_k)[b]
//! ```

use crate::error::{mismatch, Result};
use crate::grad::transport;
use crate::linalg::{Matrix, Vector};
use crate::model::{RnnParams, Trajectory};
use crate::scalar::Scalar;

/// Error vectors with norm below this carry no signal and are left out of Ω.
pub const MIN_SIGNAL_NORM: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaReport<T> {
    pub omega_total: T,
    /// `ratio[k−1]` for k = 1..T−1; `None` when the term was skipped.
    pub ratio: Vec<Option<T>>,
    /// `omega_k[k−1] = (ratio_k − 1)²` for included terms.
    pub omega_k: Vec<Option<T>>,
    /// Terms dropped because `‖∂E/∂x_{k+1}‖` was below [`MIN_SIGNAL_NORM`].
    pub skipped: usize,
    /// True when no term could be formed (every error vector was zero).
    pub degenerate: bool,
}

impl<T: Scalar> OmegaReport<T> {
    pub fn included(&self) -> usize {
        self.ratio.iter().filter(|r| r.is_some()).count()
    }

    /// Mean of the included ratios (0 when degenerate).
    pub fn mean_ratio(&self) -> T {
        let (sum, count) = self
            .ratio
            .iter()
            .flatten()
            .fold((T::zero(), 0usize), |(s, c), &r| (s + r, c + 1));
        if count == 0 {
            T::zero()
        } else {
            sum / T::lit(count as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaGradient<T> {
    /// `∂⁺Ω/∂W_rec`, n×n.
    pub grad: Matrix<T>,
    pub report: OmegaReport<T>,
    /// Terms with a non-zero signal whose transported vector vanished exactly;
    /// the norm is not differentiable there, so they contribute no gradient.
    pub zero_transport_skipped: usize,
}

struct Term<T> {
    k: usize,
    r_norm: T,
    z: Vector<T>,
    ratio: T,
}

fn terms<'a, T: Scalar>(
    params: &'a RnnParams<T>,
    traj: &'a Trajectory<T>,
    deltas: &'a [Vector<T>],
) -> Result<(Vec<Term<T>>, usize)> {
    let len = traj.len();
    if deltas.len() != len {
        return Err(mismatch("omega (error signals)", len, deltas.len()));
    }
    let floor = T::lit(MIN_SIGNAL_NORM);
    let mut out = Vec::with_capacity(len.saturating_sub(1));
    let mut skipped = 0;
    for k in 1..len {
        let r = &deltas[k];
        let r_norm = r.norm();
        if r_norm < floor {
            skipped += 1;
            continue;
        }
        let z = transport(params, traj, k, r);
        let ratio = z.norm() / r_norm;
        out.push(Term { k, r_norm, z, ratio });
    }
    Ok((out, skipped))
}

fn report_from<T: Scalar>(len: usize, terms: &[Term<T>], skipped: usize) -> OmegaReport<T> {
    let slots = len.saturating_sub(1);
    let mut ratio = vec![None; slots];
    let mut omega_k = vec![None; slots];
    let mut total = T::zero();
    for term in terms {
        let d = term.ratio - T::one();
        let w = d * d;
        ratio[term.k - 1] = Some(term.ratio);
        omega_k[term.k - 1] = Some(w);
        total += w;
    }
    OmegaReport {
        omega_total: total,
        ratio,
        omega_k,
        skipped,
        degenerate: terms.is_empty(),
    }
}

/// Ω for one trajectory, given `deltas[t−1] = ∂E/∂x_t` for t = 1..=T.
pub fn omega<T: Scalar>(params: &RnnParams<T>, traj: &Trajectory<T>, deltas: &[Vector<T>]) -> Result<OmegaReport<T>> {
    let (terms, skipped) = terms(params, traj, deltas)?;
    Ok(report_from(traj.len(), &terms, skipped))
}

/// Ω and its immediate gradient with respect to `W_rec`.
pub fn omega_grad_immediate<T: Scalar>(
    params: &RnnParams<T>,
    traj: &Trajectory<T>,
    deltas: &[Vector<T>],
) -> Result<OmegaGradient<T>> {
    let (terms, skipped) = terms(params, traj, deltas)?;
    let n = params.hidden();
    let mut grad = Matrix::zeros(n, n);
    let mut zero_transport = 0;
    let mut right = vec![T::zero(); n];
    for term in &terms {
        let z_norm = term.z.norm();
        if z_norm == T::zero() {
            zero_transport += 1;
            continue;
        }
        let coef = (term.ratio - T::one()) * T::lit(2.0) / (term.r_norm * z_norm);
        if coef == T::zero() {
            continue;
        }
        for ((dst, &z), &s) in right.iter_mut().zip(term.z.iter()).zip(traj.slopes[term.k].iter()) {
            *dst = z * s;
        }
        grad.add_outer(coef, &deltas[term.k], &right);
    }
    Ok(OmegaGradient {
        grad,
        report: report_from(traj.len(), &terms, skipped),
        zero_transport_skipped: zero_transport,
    })
}

/// Central finite differences of Ω in `W_rec` with the trajectory and error
/// signals held fixed, the oracle for [`omega_grad_immediate`].
pub fn fd_omega_wrec<T: Scalar>(
    params: &RnnParams<T>,
    traj: &Trajectory<T>,
    deltas: &[Vector<T>],
    eps: T,
) -> Result<Matrix<T>> {
    let n = params.hidden();
    let mut probe = params.clone();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n * n {
        let orig = params.w_rec.as_slice()[i];
        probe.w_rec.as_mut_slice()[i] = orig + eps;
        let plus = omega(&probe, traj, deltas)?.omega_total;
        probe.w_rec.as_mut_slice()[i] = orig - eps;
        let minus = omega(&probe, traj, deltas)?.omega_total;
        probe.w_rec.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (plus - minus) / (eps + eps);
    }
    Ok(out)
}
