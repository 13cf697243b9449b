//! Backpropagation through time in sum-of-products form.
//!
//! Jacobians use the transposed (gradient) layout: `step_jacobian(x_{i−1})` has
//! entry `[b][a] = ∂x_i[a] / ∂x_{i−1}[b]`, which equals `diag(σ′(x_{i−1})) W_recᵀ`.
//! An error vector `e = ∂E/∂x_i` is carried back one step by `J · e`, and
//! `∂x_t/∂x_k = J(x_k) J(x_{k+1}) ⋯ J(x_{t−1})`.
//!
//! The training path never materialises a Jacobian: it runs the usual reverse
//! sweep `δ_k = e_k + diag(σ′(x_k)) W_recᵀ δ_{k+1}`, which equals
//! `Σ_{t≥k} (∂x_t/∂x_k) e_t`. Per-(t,k) temporal components are opt-in
//! diagnostics with O(T²) cost.

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{LossOutput, ParamGrads, RnnParams, Trajectory};
use crate::scalar::Scalar;

/// How per-step costs are combined within one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeReduction {
    /// E = Σ_t E_t.
    #[default]
    Sum,
    /// E = (1/T) Σ_t E_t.
    Mean,
}

/// `diag(σ′(x_prev)) · W_recᵀ`, the one-step Jacobian in gradient layout.
pub fn step_jacobian<T: Scalar>(params: &RnnParams<T>, x_prev: &Vector<T>) -> Result<Matrix<T>> {
    let n = params.hidden();
    if x_prev.len() != n {
        return Err(mismatch("step_jacobian", n, x_prev.len()));
    }
    let mut j = params.w_rec.transpose();
    for (b, &x) in x_prev.iter().enumerate() {
        let s = params.activation.derivative(x);
        j.row_mut(b).iter_mut().for_each(|v| *v *= s);
    }
    Ok(j)
}

/// `∂x_t / ∂x_k` for `0 ≤ k < t ≤ T`, as the ordered product of step Jacobians.
pub fn jacobian_product<T: Scalar>(params: &RnnParams<T>, traj: &Trajectory<T>, k: usize, t: usize) -> Result<Matrix<T>> {
    if k >= t || t > traj.len() {
        return Err(Error::InvalidStep(format!(
            "jacobian_product needs 0 ≤ k < t ≤ T, got k={k}, t={t}, T={}",
            traj.len()
        )));
    }
    let mut acc = step_jacobian(params, traj.state(k))?;
    for i in k + 1..t {
        acc = acc.matmul(&step_jacobian(params, traj.state(i))?)?;
    }
    Ok(acc)
}

/// Carries an error vector `r = ∂E/∂x_{k+1}` back to `x_k`: `diag(σ′(x_k)) W_recᵀ r`.
pub fn transport<T: Scalar>(params: &RnnParams<T>, traj: &Trajectory<T>, k: usize, r: &Vector<T>) -> Vector<T> {
    let mut z = Vector::zeros(params.hidden());
    transport_into(&params.w_rec, &traj.slopes[k], r, &mut z);
    z
}

#[inline]
fn transport_into<T: Scalar>(w_rec: &Matrix<T>, slopes: &[T], r: &[T], out: &mut [T]) {
    w_rec.matvec_transposed_into(r, out);
    for (o, &s) in out.iter_mut().zip(slopes) {
        *o *= s;
    }
}

/// The immediate partial `∂⁺x_k / ∂W_rec`: every row equals `σ(x_{k−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmediatePartial<T> {
    pub row: Vector<T>,
}

impl<T: Scalar> ImmediatePartial<T> {
    /// Contracts with an error vector: returns the rank-one matrix `e ⊗ σ(x_{k−1})`.
    pub fn contract(&self, e: &Vector<T>) -> Matrix<T> {
        let mut m = Matrix::zeros(e.len(), self.row.len());
        m.add_outer(T::one(), e, &self.row);
        m
    }
}

pub fn immediate_partial_wrec<T: Scalar>(traj: &Trajectory<T>, k: usize) -> Result<ImmediatePartial<T>> {
    if k == 0 || k > traj.len() {
        return Err(Error::InvalidStep(format!("immediate partial needs 1 ≤ k ≤ T, got k={k}")));
    }
    Ok(ImmediatePartial {
        row: traj.activated[k - 1].clone(),
    })
}

/// Error signals injected by the loss: `∂E_t/∂x_t` per step and readout gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSignal<T> {
    /// `d_states[t−1] = ∂E_t/∂x_t` (immediate, through the readout only).
    pub d_states: Vec<Vector<T>>,
    pub d_readout_w: Option<Matrix<T>>,
    pub d_readout_b: Option<Vector<T>>,
}

impl<T: Scalar> ErrorSignal<T> {
    /// Signals acting directly on the states, with no readout involvement.
    pub fn on_states(d_states: Vec<Vector<T>>) -> Self {
        Self {
            d_states,
            d_readout_w: None,
            d_readout_b: None,
        }
    }

    pub fn scale(&mut self, s: T) {
        for d in &mut self.d_states {
            d.iter_mut().for_each(|v| *v *= s);
        }
        if let Some(w) = &mut self.d_readout_w {
            w.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        }
        if let Some(b) = &mut self.d_readout_b {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
}

impl<T: Scalar> From<LossOutput<T>> for ErrorSignal<T> {
    fn from(l: LossOutput<T>) -> Self {
        Self {
            d_states: l.d_states,
            d_readout_w: Some(l.d_readout_w),
            d_readout_b: Some(l.d_readout_b),
        }
    }
}

/// Per-(t,k) view of one scoring step's contribution to `∂E_t/∂W_rec`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalDiagnostics<T> {
    /// Scoring step.
    pub t: usize,
    /// `‖(∂x_t/∂x_k) ∂E_t/∂x_t‖` for k = 0..=t.
    pub transported_norms: Vec<T>,
    /// Temporal components of `∂E_t/∂W_rec`, `components[k−1]` for k = 1..=t.
    pub components: Vec<Matrix<T>>,
    /// Frobenius norms of `components`.
    pub component_norms: Vec<T>,
}

impl<T: Scalar> TemporalDiagnostics<T> {
    /// `Σ_k` of the temporal components, i.e. `∂E_t/∂W_rec`.
    pub fn total(&self) -> Matrix<T> {
        let mut acc = Matrix::zeros(self.components[0].rows(), self.components[0].cols());
        for c in &self.components {
            acc.axpy(T::one(), c);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport<T> {
    pub grads: ParamGrads<T>,
    /// Accumulated `δ_t = ∂E/∂x_t` for t = 1..=T (`deltas[t−1]`).
    pub deltas: Vec<Vector<T>>,
    pub diagnostics: Option<TemporalDiagnostics<T>>,
}

/// Reverse-sweep BPTT.
pub fn bptt<T: Scalar>(params: &RnnParams<T>, traj: &Trajectory<T>, signal: &ErrorSignal<T>) -> Result<GradientReport<T>> {
    let len = traj.len();
    let n = params.hidden();
    if signal.d_states.len() != len {
        return Err(mismatch("bptt (error signals)", len, signal.d_states.len()));
    }
    if let Some(d) = signal.d_states.iter().find(|d| d.len() != n) {
        return Err(mismatch("bptt (error signal width)", n, d.len()));
    }
    let mut grads = ParamGrads::zeros_like(params);
    let mut deltas = vec![Vector::zeros(n); len];
    let mut carried = Vector::<T>::zeros(n);
    for t in (1..=len).rev() {
        let mut delta = signal.d_states[t - 1].clone();
        if t < len {
            transport_into(&params.w_rec, &traj.slopes[t], &deltas[t], &mut carried);
            for (d, &c) in delta.iter_mut().zip(carried.iter()) {
                *d += c;
            }
        }
        if !delta.is_finite() {
            return Err(Error::NonFiniteGradient { t: len, k: t });
        }
        grads.w_rec.add_outer(T::one(), &delta, &traj.activated[t - 1]);
        add_outer_sparse(&mut grads.w_in, &delta, &traj.inputs[t - 1]);
        crate::linalg::axpy(&mut grads.b, T::one(), &delta);
        deltas[t - 1] = delta;
    }
    if let Some(w) = &signal.d_readout_w {
        grads.readout_w = w.clone();
    }
    if let Some(b) = &signal.d_readout_b {
        grads.readout_b = b.clone();
    }
    Ok(GradientReport {
        grads,
        deltas,
        diagnostics: None,
    })
}

/// `m += left ⊗ right`, skipping zero entries of `right` (one-hot inputs).
fn add_outer_sparse<T: Scalar>(m: &mut Matrix<T>, left: &[T], right: &[T]) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for (j, &r) in right.iter().enumerate() {
        if r != T::zero() {
            for (i, &l) in left.iter().enumerate() {
                data[i * cols + j] += l * r;
            }
        }
    }
}

/// [`bptt`] plus explicit temporal components for scoring step `t`.
pub fn bptt_with_diagnostics<T: Scalar>(
    params: &RnnParams<T>,
    traj: &Trajectory<T>,
    signal: &ErrorSignal<T>,
    t: usize,
) -> Result<GradientReport<T>> {
    let mut report = bptt(params, traj, signal)?;
    if t == 0 || t > traj.len() {
        return Err(Error::InvalidStep(format!("diagnostic step t={t} outside 1..={}", traj.len())));
    }
    let e_t = &signal.d_states[t - 1];
    let mut transported = e_t.clone();
    let mut norms = vec![T::zero(); t + 1];
    let mut components = vec![Matrix::zeros(0, 0); t];
    norms[t] = transported.norm();
    for k in (0..=t).rev() {
        if k < t {
            transported = transport(params, traj, k, &transported);
            if !transported.is_finite() {
                return Err(Error::NonFiniteGradient { t, k });
            }
            norms[k] = transported.norm();
        }
        if k >= 1 {
            components[k - 1] = immediate_partial_wrec(traj, k)?.contract(&transported);
        }
    }
    let component_norms = components.iter().map(Matrix::frobenius_norm).collect();
    report.diagnostics = Some(TemporalDiagnostics {
        t,
        transported_norms: norms,
        components,
        component_norms,
    });
    Ok(report)
}

/// `‖(∂x_t/∂x_k) e_t‖` for every `k = 0..=t` (index k).
pub fn component_norms<T: Scalar>(params: &RnnParams<T>, traj: &Trajectory<T>, t: usize, e_t: &Vector<T>) -> Result<Vec<T>> {
    if t > traj.len() {
        return Err(Error::InvalidStep(format!("t={t} beyond sequence length {}", traj.len())));
    }
    if e_t.len() != params.hidden() {
        return Err(mismatch("component_norms", params.hidden(), e_t.len()));
    }
    let mut norms = vec![T::zero(); t + 1];
    let mut v = e_t.clone();
    norms[t] = v.norm();
    for k in (0..t).rev() {
        v = transport(params, traj, k, &v);
        norms[k] = v.norm();
    }
    Ok(norms)
}

/// Finite-difference oracle for the gradient, independent of the reverse sweep.
pub mod check {
    use super::*;
    use crate::model::{forward, loss, LossSpec, BLOCK_NAMES};

    /// Central finite differences of the total loss with respect to every parameter.
    pub fn fd_gradient<T: Scalar>(
        params: &RnnParams<T>,
        x0: &Vector<T>,
        inputs: &[Vector<T>],
        spec: &LossSpec<T>,
        eps: T,
    ) -> Result<ParamGrads<T>> {
        let mut grads = ParamGrads::zeros_like(params);
        let mut probe = params.clone();
        let eval = |p: &RnnParams<T>| -> Result<T> {
            let traj = forward(p, x0, inputs)?;
            Ok(loss(p, &traj, spec)?.total)
        };
        for block in 0..5 {
            let len = params.blocks()[block].len();
            for i in 0..len {
                let orig = params.blocks()[block][i];
                probe.blocks_mut()[block][i] = orig + eps;
                let plus = eval(&probe)?;
                probe.blocks_mut()[block][i] = orig - eps;
                let minus = eval(&probe)?;
                probe.blocks_mut()[block][i] = orig;
                grads.blocks_mut()[block][i] = (plus - minus) / (eps + eps);
            }
        }
        Ok(grads)
    }

    /// Richardson extrapolation of central differences taken at `h` and `h/2`:
    /// `(4·D(h/2) − D(h)) / 3`, accurate to O(h⁴).
    pub fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
        coarse.iter().zip(fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect()
    }

    /// Comparison of one parameter block.
    #[derive(Debug, Clone, PartialEq, Serialize)]
    pub struct BlockError {
        pub block: String,
        pub max_abs_error: f64,
        pub max_rel_error: f64,
    }

    /// Relative error of one entry. The denominator is floored at `floor` so that
    /// entries which vanish analytically are judged on an absolute scale instead
    /// of dividing rounding noise by zero.
    pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        if denom == 0.0 {
            0.0
        } else {
            (analytic - numeric).abs() / denom
        }
    }

    /// Denominator floor used by [`compare`]: relative to the largest entry of
    /// the block, so a block is judged on its own scale.
    pub const REL_FLOOR: f64 = 1e-4;

    pub fn compare_slices(name: &str, analytic: &[f64], numeric: &[f64]) -> BlockError {
        let scale = analytic
            .iter()
            .chain(numeric)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (REL_FLOOR * scale).max(1e-12);
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for (&a, &n) in analytic.iter().zip(numeric) {
            max_abs = max_abs.max((a - n).abs());
            max_rel = max_rel.max(rel_error(a, n, floor));
        }
        BlockError {
            block: name.to_string(),
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        }
    }

    /// Block-by-block comparison of an analytic gradient against the oracle.
    pub fn compare<T: Scalar>(analytic: &ParamGrads<T>, numeric: &ParamGrads<T>) -> Vec<BlockError> {
        let f = |s: &[T]| s.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>();
        BLOCK_NAMES
            .iter()
            .zip(analytic.blocks().iter().zip(numeric.blocks()))
            .map(|(name, (a, n))| compare_slices(name, &f(a), &f(n)))
            .collect()
    }
}
