//! The recurrent network `x_t = W_rec σ(x_{t−1}) + W_in u_t + b` with a linear
//! readout `y_t = V σ(x_t) + c`, deterministic forward propagation and the
//! losses used by the synthetic tasks.
//!
//! States `x_t` are pre-activations: the nonlinearity is applied when a state is
//! read, both by the recurrence and by the readout.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{dot, Matrix, Vector};
use crate::scalar::Scalar;

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Sigmoid, Activation::Identity];

    /// Upper bound on `|σ′|`.
    pub fn gamma<T: Scalar>(self) -> T {
        match self {
            Activation::Tanh | Activation::Identity => T::one(),
            Activation::Sigmoid => T::lit(0.25),
        }
    }

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        self.value_and_slope(x).1
    }

    #[inline]
    pub fn value_and_slope<T: Scalar>(self, x: T) -> (T, T) {
        match self {
            Activation::Tanh => {
                let y = x.tanh();
                (y, T::one() - y * y)
            }
            Activation::Sigmoid => {
                let y = T::one() / (T::one() + (-x).exp());
                (y, y * (T::one() - y))
            }
            Activation::Identity => (x, T::one()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

/// Model parameters θ = (W_rec, W_in, b) plus the readout (V, c).
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams<T> {
    /// n×n recurrent weights.
    pub w_rec: Matrix<T>,
    /// n×m input weights.
    pub w_in: Matrix<T>,
    /// Recurrent bias, length n.
    pub b: Vector<T>,
    /// o×n readout weights.
    pub readout_w: Matrix<T>,
    /// Readout bias, length o.
    pub readout_b: Vector<T>,
    pub activation: Activation,
}

impl<T: Scalar> RnnParams<T> {
    pub fn new(
        w_rec: Matrix<T>,
        w_in: Matrix<T>,
        b: Vector<T>,
        readout_w: Matrix<T>,
        readout_b: Vector<T>,
        activation: Activation,
    ) -> Result<Self> {
        let p = Self {
            w_rec,
            w_in,
            b,
            readout_w,
            readout_b,
            activation,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks mutual consistency of all blocks and finiteness of every entry.
    pub fn validate(&self) -> Result<()> {
        let n = self.w_rec.rows();
        if !self.w_rec.is_square() {
            return Err(Error::NotSquare {
                op: "RnnParams (W_rec)",
                rows: self.w_rec.rows(),
                cols: self.w_rec.cols(),
            });
        }
        if self.w_in.rows() != n {
            return Err(mismatch("RnnParams (W_in rows)", n, self.w_in.rows()));
        }
        if self.b.len() != n {
            return Err(mismatch("RnnParams (b)", n, self.b.len()));
        }
        if self.readout_w.cols() != n {
            return Err(mismatch("RnnParams (readout cols)", n, self.readout_w.cols()));
        }
        if self.readout_b.len() != self.readout_w.rows() {
            return Err(mismatch("RnnParams (readout bias)", self.readout_w.rows(), self.readout_b.len()));
        }
        let finite = self.w_rec.is_finite()
            && self.w_in.is_finite()
            && self.b.is_finite()
            && self.readout_w.is_finite()
            && self.readout_b.is_finite();
        if !finite {
            return Err(Error::NonFinite {
                what: "parameters".into(),
            });
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.readout_w.rows()
    }

    /// Parameter blocks in canonical order (see [`BLOCK_NAMES`]).
    pub fn blocks(&self) -> [&[T]; 5] {
        [
            self.w_rec.as_slice(),
            self.w_in.as_slice(),
            &self.b,
            self.readout_w.as_slice(),
            &self.readout_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [T]; 5] {
        [
            self.w_rec.as_mut_slice(),
            self.w_in.as_mut_slice(),
            &mut self.b,
            self.readout_w.as_mut_slice(),
            &mut self.readout_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

/// Names of the parameter blocks in the order used by `blocks()`.
pub const BLOCK_NAMES: [&str; 5] = ["W_rec", "W_in", "b", "readout_W", "readout_b"];

/// Gradient with the same block layout as [`RnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub w_rec: Matrix<T>,
    pub w_in: Matrix<T>,
    pub b: Vector<T>,
    pub readout_w: Matrix<T>,
    pub readout_b: Vector<T>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn zeros_like(p: &RnnParams<T>) -> Self {
        Self {
            w_rec: Matrix::zeros(p.w_rec.rows(), p.w_rec.cols()),
            w_in: Matrix::zeros(p.w_in.rows(), p.w_in.cols()),
            b: Vector::zeros(p.b.len()),
            readout_w: Matrix::zeros(p.readout_w.rows(), p.readout_w.cols()),
            readout_b: Vector::zeros(p.readout_b.len()),
        }
    }

    pub fn blocks(&self) -> [&[T]; 5] {
        [
            self.w_rec.as_slice(),
            self.w_in.as_slice(),
            &self.b,
            self.readout_w.as_slice(),
            &self.readout_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [T]; 5] {
        [
            self.w_rec.as_mut_slice(),
            self.w_in.as_mut_slice(),
            &mut self.b,
            self.readout_w.as_mut_slice(),
            &mut self.readout_b,
        ]
    }

    /// Global 2-norm over all blocks.
    pub fn norm(&self) -> T {
        crate::linalg::norm2(&self.to_flat())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Concatenation of every block in canonical order.
    pub fn to_flat(&self) -> Vec<T> {
        self.blocks().concat()
    }

    /// Overwrites every block from a flat vector produced by [`Self::to_flat`].
    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        let total: usize = self.blocks().iter().map(|b| b.len()).sum();
        if flat.len() != total {
            return Err(mismatch("ParamGrads::set_flat", total, flat.len()));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: T, other: &Self) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            crate::linalg::axpy(a, s, b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// One forward pass: inputs `u_1..u_T`, states `x_0..x_T` and cached `σ(x_t)`, `σ′(x_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub inputs: Vec<Vector<T>>,
    pub states: Vec<Vector<T>>,
    pub activated: Vec<Vector<T>>,
    pub slopes: Vec<Vector<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Sequence length T (number of inputs).
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// State `x_t`, `0 ≤ t ≤ T`.
    pub fn state(&self, t: usize) -> &Vector<T> {
        &self.states[t]
    }

    /// Copy of the trajectory with `x_t` replaced (caches refreshed for that step only).
    /// Later states are left untouched; used for probing the readout in isolation.
    pub fn with_state(&self, t: usize, x: Vector<T>, activation: Activation) -> Self {
        let mut out = self.clone();
        let (a, s): (Vec<T>, Vec<T>) = x.iter().map(|&v| activation.value_and_slope(v)).unzip();
        out.activated[t] = a.into();
        out.slopes[t] = s.into();
        out.states[t] = x;
        out
    }
}

/// Runs the recurrence from `x0` over `inputs`.
pub fn forward<T: Scalar>(params: &RnnParams<T>, x0: &Vector<T>, inputs: &[Vector<T>]) -> Result<Trajectory<T>> {
    let n = params.hidden();
    let m = params.input_dim();
    if x0.len() != n {
        return Err(mismatch("forward (x0)", n, x0.len()));
    }
    if let Some((i, u)) = inputs.iter().enumerate().find(|(_, u)| u.len() != m) {
        return Err(mismatch("forward (input)", m, format!("{} at step {}", u.len(), i + 1)));
    }
    let act = params.activation;
    let len = inputs.len();
    let mut states = Vec::with_capacity(len + 1);
    let mut activated = Vec::with_capacity(len + 1);
    let mut slopes = Vec::with_capacity(len + 1);

    let cache = |x: &Vector<T>| -> (Vector<T>, Vector<T>) {
        let (a, s): (Vec<T>, Vec<T>) = x.iter().map(|&v| act.value_and_slope(v)).unzip();
        (a.into(), s.into())
    };
    let (a0, s0) = cache(x0);
    states.push(x0.clone());
    activated.push(a0);
    slopes.push(s0);

    for (t, u) in inputs.iter().enumerate() {
        let mut x = params.b.clone();
        params.w_rec.matvec_acc(&activated[t], &mut x);
        input_acc(&params.w_in, u, &mut x);
        if !x.is_finite() {
            return Err(Error::NonFiniteState { step: t + 1 });
        }
        let (a, s) = cache(&x);
        states.push(x);
        activated.push(a);
        slopes.push(s);
    }
    Ok(Trajectory {
        inputs: inputs.to_vec(),
        states,
        activated,
        slopes,
    })
}

/// Forward pass from the zero initial state.
pub fn forward_from_zero<T: Scalar>(params: &RnnParams<T>, inputs: &[Vector<T>]) -> Result<Trajectory<T>> {
    forward(params, &Vector::zeros(params.hidden()), inputs)
}

/// `out += W_in u`, skipping zero input entries (one-hot inputs are mostly zero).
#[inline]
fn input_acc<T: Scalar>(w_in: &Matrix<T>, u: &[T], out: &mut [T]) {
    let nz = u.iter().filter(|v| **v != T::zero()).count();
    if nz * 4 < u.len() {
        let cols = w_in.cols();
        let data = w_in.as_slice();
        for (j, &uj) in u.iter().enumerate() {
            if uj != T::zero() {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += data[i * cols + j] * uj;
                }
            }
        }
    } else {
        w_in.matvec_acc(u, out);
    }
}

/// Readout `V σ(x_t) + c`.
pub fn readout<T: Scalar>(params: &RnnParams<T>, x: &Vector<T>) -> Result<Vector<T>> {
    if x.len() != params.hidden() {
        return Err(mismatch("readout", params.hidden(), x.len()));
    }
    let h: Vec<T> = x.iter().map(|&v| params.activation.apply(v)).collect();
    Ok(readout_activated(params, &h))
}

fn readout_activated<T: Scalar>(params: &RnnParams<T>, h: &[T]) -> Vector<T> {
    let mut y = params.readout_b.clone();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += dot(params.readout_w.row(i), h);
    }
    y
}

/// Per-sequence loss.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec<T> {
    /// Softmax cross-entropy on the final step's readout.
    SoftmaxFinal { label: usize },
    /// Softmax cross-entropy at every step with a label (`labels[t−1]` for step t).
    SoftmaxPerStep { labels: Vec<Option<usize>> },
    /// `Σ_i (y_T,i − target_i)²` on the final step's readout.
    SquaredFinal { target: Vector<T> },
}

impl<T: Scalar> LossSpec<T> {
    /// Steps (1-based) that contribute to the loss for a sequence of length `len`.
    pub fn scored_steps(&self, len: usize) -> Vec<usize> {
        match self {
            LossSpec::SoftmaxFinal { .. } | LossSpec::SquaredFinal { .. } => vec![len],
            LossSpec::SoftmaxPerStep { labels } => labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.map(|_| i + 1))
                .collect(),
        }
    }
}

/// Loss value and the error signals it injects into the network.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    /// E = Σ_t E_t.
    pub total: T,
    /// E_t for t = 1..T (`per_step[t−1]`); unscored steps are 0.
    pub per_step: Vec<T>,
    /// Immediate ∂E_t/∂x_t through the readout, `d_states[t−1]` for step t.
    pub d_states: Vec<Vector<T>>,
    pub d_readout_w: Matrix<T>,
    pub d_readout_b: Vector<T>,
    /// Readout at each scored step (`outputs[t−1]`).
    pub outputs: Vec<Option<Vector<T>>>,
}

fn softmax_xent<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    let loss = z.ln() + max - logits[label];
    let mut grad: Vec<T> = exps.into_iter().map(|e| e / z).collect();
    grad[label] -= T::one();
    Ok((loss, grad))
}

/// Evaluates `spec` on a trajectory.
pub fn loss<T: Scalar>(params: &RnnParams<T>, traj: &Trajectory<T>, spec: &LossSpec<T>) -> Result<LossOutput<T>> {
    let len = traj.len();
    let n = params.hidden();
    let o = params.output_dim();
    let mut out = LossOutput {
        total: T::zero(),
        per_step: vec![T::zero(); len],
        d_states: vec![Vector::zeros(n); len],
        d_readout_w: Matrix::zeros(o, n),
        d_readout_b: Vector::zeros(o),
        outputs: vec![None; len],
    };
    if len == 0 {
        return Ok(out);
    }
    let score = |t: usize, out: &mut LossOutput<T>, f: &dyn Fn(&[T]) -> Result<(T, Vec<T>)>| -> Result<()> {
        let h = &traj.activated[t];
        let y = readout_activated(params, h);
        let (e, dy) = f(&y)?;
        out.per_step[t - 1] = e;
        out.total += e;
        out.d_readout_w.add_outer(T::one(), &dy, h);
        crate::linalg::axpy(&mut out.d_readout_b, T::one(), &dy);
        let mut dx = params.readout_w.matvec_transposed(&Vector::from_vec(dy))?;
        for (d, &s) in dx.iter_mut().zip(traj.slopes[t].iter()) {
            *d *= s;
        }
        out.d_states[t - 1] = dx;
        out.outputs[t - 1] = Some(y);
        Ok(())
    };
    match spec {
        LossSpec::SoftmaxFinal { label } => {
            let label = *label;
            score(len, &mut out, &|y| softmax_xent(y, label))?;
        }
        LossSpec::SoftmaxPerStep { labels } => {
            if labels.len() != len {
                return Err(mismatch("loss (per-step labels)", len, labels.len()));
            }
            for (i, l) in labels.iter().enumerate() {
                if let Some(label) = *l {
                    score(i + 1, &mut out, &|y| softmax_xent(y, label))?;
                }
            }
        }
        LossSpec::SquaredFinal { target } => {
            if target.len() != o {
                return Err(mismatch("loss (regression target)", o, target.len()));
            }
            score(len, &mut out, &|y| {
                let mut e = T::zero();
                let mut g = Vec::with_capacity(y.len());
                for (&yi, &ti) in y.iter().zip(target.iter()) {
                    let r = yi - ti;
                    e += r * r;
                    g.push(r + r);
                }
                Ok((e, g))
            })?;
        }
    }
    Ok(out)
}

/// Gaussian initialisation: every weight ~ N(0, 0.1²), biases 0.
pub fn init_params<T: Scalar>(n: usize, m: usize, o: usize, activation: Activation, seed: u64) -> Result<RnnParams<T>> {
    init_params_with_std(n, m, o, activation, seed, INIT_STD)
}

pub fn init_params_with_std<T: Scalar>(
    n: usize,
    m: usize,
    o: usize,
    activation: Activation,
    seed: u64,
    std: f64,
) -> Result<RnnParams<T>> {
    if n == 0 || m == 0 || o == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive (n={n}, m={m}, o={o})"
        )));
    }
    let dist = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| -> Result<Matrix<T>> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| T::lit(dist.sample(&mut rng))).collect())
    };
    let w_rec = draw(n, n)?;
    let w_in = draw(n, m)?;
    let readout_w = draw(o, n)?;
    RnnParams::new(w_rec, w_in, Vector::zeros(n), readout_w, Vector::zeros(o), activation)
}

/// On-disk parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: CheckpointDims,
    pub activation: Activation,
    pub seed: u64,
    pub w_rec: Vec<f64>,
    pub w_in: Vec<f64>,
    pub b: Vec<f64>,
    pub readout_w: Vec<f64>,
    pub readout_b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointDims {
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(params: &RnnParams<T>, seed: u64) -> Self {
        let f = |s: &[T]| s.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>();
        Self {
            dims: CheckpointDims {
                hidden: params.hidden(),
                input: params.input_dim(),
                output: params.output_dim(),
            },
            activation: params.activation,
            seed,
            w_rec: f(params.w_rec.as_slice()),
            w_in: f(params.w_in.as_slice()),
            b: f(&params.b),
            readout_w: f(params.readout_w.as_slice()),
            readout_b: f(&params.readout_b),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<RnnParams<T>> {
        let CheckpointDims { hidden, input, output } = self.dims;
        let conv = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let b = conv(&self.b);
        let readout_b = conv(&self.readout_b);
        RnnParams::new(
            Matrix::from_vec(hidden, hidden, conv(&self.w_rec))?,
            Matrix::from_vec(hidden, input, conv(&self.w_in))?,
            b.into(),
            Matrix::from_vec(output, hidden, conv(&self.readout_w))?,
            readout_b.into(),
            self.activation,
        )
    }

    pub fn to_json(&self) -> String {
        crate::serialize::to_json_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("checkpoint: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_net(w: f64, b: f64, act: Activation) -> RnnParams<f64> {
        RnnParams::new(
            Matrix::from_vec(1, 1, vec![w]).unwrap(),
            Matrix::zeros(1, 1),
            Vector::from_vec(vec![b]),
            Matrix::identity(1),
            Vector::zeros(1),
            act,
        )
        .unwrap()
    }

    fn silent(len: usize) -> Vec<Vector<f64>> {
        vec![Vector::zeros(1); len]
    }

    #[test]
    fn gamma_values() {
        assert_eq!(Activation::Tanh.gamma::<f64>(), 1.0);
        assert_eq!(Activation::Sigmoid.gamma::<f64>(), 0.25);
        assert_eq!(Activation::Identity.gamma::<f64>(), 1.0);
    }

    #[test]
    fn zero_weights_give_bias_states() {
        let mut p = init_params::<f64>(3, 2, 1, Activation::Tanh, 1).unwrap();
        p.w_rec = Matrix::zeros(3, 3);
        p.w_in = Matrix::zeros(3, 2);
        p.b = Vector::from_vec(vec![0.1, -0.2, 0.3]);
        let inputs = vec![Vector::from_vec(vec![1.0, 2.0]); 4];
        let traj = forward(&p, &Vector::from_vec(vec![5.0, 5.0, 5.0]), &inputs).unwrap();
        for t in 1..=4 {
            assert_eq!(traj.state(t), &p.b);
        }
    }

    #[test]
    fn linear_unit_is_geometric() {
        let p = scalar_net(2.0, 0.0, Activation::Identity);
        let traj = forward(&p, &Vector::from_vec(vec![0.5]), &silent(3)).unwrap();
        assert_eq!(traj.state(3)[0], 4.0);
    }

    #[test]
    fn sigmoid_unit_settles_on_symmetric_attractors() {
        let p = scalar_net(5.0, -2.5, Activation::Sigmoid);
        let hi = forward(&p, &Vector::from_vec(vec![5.0]), &silent(50)).unwrap();
        let lo = forward(&p, &Vector::from_vec(vec![-5.0]), &silent(50)).unwrap();
        let (xh, xl) = (hi.state(50)[0], lo.state(50)[0]);
        // Stationarity of x = 5σ(x) − 2.5 and odd symmetry.
        assert!((xh - (5.0 * Activation::Sigmoid.apply(xh) - 2.5)).abs() < 1e-6);
        assert!((xh - 1.776_029).abs() < 1e-5, "{xh}");
        assert!((xh + xl).abs() < 1e-9);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let p = init_params::<f64>(3, 2, 1, Activation::Tanh, 1).unwrap();
        assert!(forward(&p, &Vector::zeros(2), &[]).is_err());
        assert!(forward(&p, &Vector::zeros(3), &[Vector::zeros(3)]).is_err());
    }

    #[test]
    fn forward_names_non_finite_step() {
        let p = scalar_net(1e200, 0.0, Activation::Identity);
        let err = forward(&p, &Vector::from_vec(vec![1.0]), &silent(5)).unwrap_err();
        assert_eq!(err, Error::NonFiniteState { step: 2 });
    }

    #[test]
    fn readout_cases() {
        let p = scalar_net(1.0, 0.0, Activation::Identity);
        let x = Vector::from_vec(vec![0.7]);
        assert_eq!(readout(&p, &x).unwrap(), x);
        let mut q = init_params::<f64>(4, 2, 3, Activation::Tanh, 3).unwrap();
        q.readout_w = Matrix::zeros(3, 4);
        q.readout_b = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(readout(&q, &Vector::from_vec(vec![0.1; 4])).unwrap(), q.readout_b);
    }

    #[test]
    fn readout_matches_loop_oracle() {
        let mut p = init_params::<f64>(6, 2, 3, Activation::Tanh, 9).unwrap();
        p.readout_b = Vector::from_vec(vec![0.3, -0.1, 0.2]);
        let x = Vector::from_vec(vec![0.5, -1.0, 2.0, 0.0, 0.25, -0.75]);
        let got = readout(&p, &x).unwrap();
        for i in 0..3 {
            let mut s = 0.0;
            for j in 0..6 {
                s += p.readout_w.get(i, j) * x[j].tanh();
            }
            assert_eq!(got[i], p.readout_b[i] + s);
        }
    }

    #[test]
    fn squared_error_zero_at_target() {
        let p = scalar_net(0.0, 0.3, Activation::Identity);
        let traj = forward(&p, &Vector::zeros(1), &silent(3)).unwrap();
        let out = loss(&p, &traj, &LossSpec::SquaredFinal { target: Vector::from_vec(vec![0.3]) }).unwrap();
        assert_eq!(out.total, 0.0);
        assert!(out.d_states.iter().all(|d| d.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn equal_logits_cost_ln2_per_scored_step() {
        let mut p = init_params::<f64>(3, 1, 2, Activation::Tanh, 1).unwrap();
        p.readout_w = Matrix::zeros(2, 3);
        let traj = forward_from_zero(&p, &vec![Vector::zeros(1); 4]).unwrap();
        let fin = loss(&p, &traj, &LossSpec::SoftmaxFinal { label: 0 }).unwrap();
        assert!((fin.total - 2f64.ln()).abs() < 1e-15);
        let per = loss(
            &p,
            &traj,
            &LossSpec::SoftmaxPerStep {
                labels: vec![Some(0), None, Some(1), Some(0)],
            },
        )
        .unwrap();
        assert!((per.total - 3.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(per.per_step[1], 0.0);
        let sum: f64 = per.per_step.iter().sum();
        assert!((sum - per.total).abs() <= 1e-12 * per.total);
    }

    #[test]
    fn label_out_of_range_is_error() {
        let p = init_params::<f64>(3, 1, 2, Activation::Tanh, 1).unwrap();
        let traj = forward_from_zero(&p, &vec![Vector::zeros(1); 2]).unwrap();
        assert_eq!(
            loss(&p, &traj, &LossSpec::SoftmaxFinal { label: 2 }).unwrap_err(),
            Error::LabelOutOfRange { label: 2, classes: 2 }
        );
    }

    #[test]
    fn init_is_deterministic_and_zero_bias() {
        let a = init_params::<f64>(5, 3, 2, Activation::Tanh, 42).unwrap();
        let b = init_params::<f64>(5, 3, 2, Activation::Tanh, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.b.iter().all(|v| *v == 0.0));
        assert_ne!(a, init_params::<f64>(5, 3, 2, Activation::Tanh, 43).unwrap());
        assert!(init_params::<f64>(0, 3, 2, Activation::Tanh, 1).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = init_params::<f64>(4, 3, 2, Activation::Sigmoid, 5).unwrap();
        let json = Checkpoint::from_params(&p, 5).to_json();
        let back = Checkpoint::from_json(&json).unwrap().to_params::<f64>().unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn activation_parses() {
        assert_eq!("TANH".parse::<Activation>().unwrap(), Activation::Tanh);
        assert!("relu".parse::<Activation>().is_err());
    }
}
