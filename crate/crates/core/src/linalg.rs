//! Dense row-major vectors and matrices plus the spectral tools the
//! gradient analysis needs (power iteration, operator 2-norm, spectral radius).
//!
//! Summation order is fixed (left to right along each row) so that every
//! product is bit-reproducible for identical inputs.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{mismatch, Error, Result};
use crate::scalar::Scalar;

/// Default iteration cap for [`power_iteration`].
pub const POWER_MAX_ITERS: usize = 10_000;
/// Default eigenvalue-change tolerance for [`power_iteration`].
pub const POWER_TOL: f64 = 1e-10;
/// Number of seeded random restarts used by [`spectral_radius`].
pub const RADIUS_RESTARTS: usize = 8;
/// Power used by the `‖M^k‖^(1/k)` growth-rate fallback.
pub const GROWTH_POWER: u32 = 64;

const RESTART_SEED: u64 = 0x5EED_7AD1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn filled(len: usize, value: T) -> Self {
        Self {
            data: vec![value; len],
        }
    }

    /// Unit vector along `axis`.
    pub fn basis(len: usize, axis: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[axis] = T::one();
        v
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Self {
            data: values.iter().map(|&v| T::lit(v)).collect(),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.len() != other.len() {
            return Err(mismatch("dot", self.len(), other.len()));
        }
        Ok(dot(&self.data, &other.data))
    }

    /// Euclidean norm.
    pub fn norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(mismatch("vector add", self.len(), other.len()));
        }
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(mismatch("vector sub", self.len(), other.len()));
        }
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        axpy(&mut self.data, s, &other.data);
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).collect(),
        }
    }

    /// Returns `self / ‖self‖`, or an error for the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == T::zero() || !n.is_finite() {
            return Err(Error::ZeroVector { op: "normalize" });
        }
        Ok(self.scaled(T::one() / n))
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T: Scalar> From<Vec<T>> for Vector<T> {
    fn from(data: Vec<T>) -> Self {
        Self { data }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from row-major storage, checking shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(mismatch("Matrix::from_vec", rows * cols, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: "matrix entries".into(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(mismatch("Matrix::from_rows", format!("rows of length {c}"), "ragged rows"));
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(mismatch(
                "matrix add",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-T::one()))
    }

    /// `self += s * other` over matching shapes.
    pub fn axpy(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        axpy(&mut self.data, s, &other.data);
    }

    /// `self += s * (left ⊗ right)`, i.e. a rank-1 update with `left` indexing rows.
    pub fn add_outer(&mut self, s: T, left: &[T], right: &[T]) {
        debug_assert_eq!(left.len(), self.rows);
        debug_assert_eq!(right.len(), self.cols);
        for (i, &l) in left.iter().enumerate() {
            let f = s * l;
            if f != T::zero() {
                axpy(self.row_mut(i), f, right);
            }
        }
    }

    /// `M · v`.
    pub fn matvec(&self, v: &Vector<T>) -> Result<Vector<T>> {
        if self.cols != v.len() {
            return Err(mismatch("matvec", self.cols, v.len()));
        }
        let mut out = Vector::zeros(self.rows);
        self.matvec_into(v, &mut out);
        Ok(out)
    }

    /// `out = M · v` without shape checks beyond debug assertions.
    pub(crate) fn matvec_into(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(self.cols, v.len());
        debug_assert_eq!(self.rows, out.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `out += M · v`.
    pub(crate) fn matvec_acc(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(self.cols, v.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(i), v);
        }
    }

    /// `Mᵀ · v`.
    pub fn matvec_transposed(&self, v: &Vector<T>) -> Result<Vector<T>> {
        if self.rows != v.len() {
            return Err(mismatch("matvec_transposed", self.rows, v.len()));
        }
        let mut out = Vector::zeros(self.cols);
        self.matvec_transposed_into(v, &mut out);
        Ok(out)
    }

    /// `out = Mᵀ · v`, accumulated row by row.
    pub(crate) fn matvec_transposed_into(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(self.rows, v.len());
        debug_assert_eq!(self.cols, out.len());
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, &vi) in v.iter().enumerate() {
            if vi != T::zero() {
                axpy(out, vi, self.row(i));
            }
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(mismatch("matmul", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != T::zero() {
                    let (row_out, row_b) = (
                        &mut out.data[i * other.cols..(i + 1) * other.cols],
                        &other.data[k * other.cols..(k + 1) * other.cols],
                    );
                    axpy(row_out, a, row_b);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Solves `M x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &Vector<T>) -> Result<Vector<T>> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op: "solve",
                rows: self.rows,
                cols: self.cols,
            });
        }
        if rhs.len() != self.rows {
            return Err(mismatch("solve", self.rows, rhs.len()));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = rhs.as_slice().to_vec();
        let scale = self.max_abs().max(T::min_positive_value());
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p * n + col].abs().partial_cmp(&a[q * n + col].abs()).unwrap())
                .unwrap();
            if a[pivot * n + col].abs() <= T::epsilon() * scale * T::lit(1e-3) {
                return Err(Error::Singular { op: "solve" });
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f != T::zero() {
                    for j in col..n {
                        let v = a[col * n + j];
                        a[r * n + j] -= f * v;
                    }
                    let xc = x[col];
                    x[r] -= f * xc;
                }
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in col + 1..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Ok(Vector::from_vec(x))
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn norm2<T: Scalar>(v: &[T]) -> T {
    // Scaled accumulation so that huge or tiny transported error vectors do not
    // overflow or underflow before the square root.
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let mut s = T::zero();
    for &x in v {
        let y = x / scale;
        s += y * y;
    }
    scale * s.sqrt()
}

/// Outcome of [`power_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration<T> {
    /// Rayleigh-quotient estimate of the dominant eigenvalue (signed).
    pub eigenvalue: T,
    /// Unit-norm iterate at return.
    pub eigenvector: Vector<T>,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on a square matrix.
///
/// Convergence requires both `|λ_k − λ_{k−1}| ≤ tol` and a small eigen-residual
/// `‖Mv − λv‖ ≤ √tol · max(1, |λ|)`. The residual test is what reports
/// `converged = false` for a tied dominant modulus (e.g. `diag(1, −1)`), where the
/// Rayleigh quotient can sit still while the iterate keeps flipping.
pub fn power_iteration<T: Scalar>(
    m: &Matrix<T>,
    v0: &Vector<T>,
    max_iters: usize,
    tol: T,
) -> Result<PowerIteration<T>> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            op: "power_iteration",
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if v0.len() != m.cols() {
        return Err(mismatch("power_iteration", m.cols(), v0.len()));
    }
    let mut v = v0
        .normalized()
        .map_err(|_| Error::ZeroVector { op: "power_iteration" })?;
    let mut w = Vector::zeros(v.len());
    let mut prev = T::nan();
    let mut estimate = T::zero();
    let residual_tol = tol.sqrt();
    for it in 1..=max_iters {
        m.matvec_into(&v, &mut w);
        let wn = w.norm();
        if wn == T::zero() || !wn.is_finite() {
            return Ok(PowerIteration {
                eigenvalue: T::zero(),
                eigenvector: v,
                converged: false,
                iterations: it,
            });
        }
        estimate = dot(&v, &w);
        let mut residual = T::zero();
        for (&wi, &vi) in w.iter().zip(v.iter()) {
            let r = wi - estimate * vi;
            residual += r * r;
        }
        let residual = residual.sqrt();
        let settled = (estimate - prev).abs() <= tol;
        if settled && residual <= residual_tol * estimate.abs().max(T::one()) {
            return Ok(PowerIteration {
                eigenvalue: estimate,
                eigenvector: v,
                converged: true,
                iterations: it,
            });
        }
        prev = estimate;
        for (vi, &wi) in v.iter_mut().zip(w.iter()) {
            *vi = wi / wn;
        }
    }
    Ok(PowerIteration {
        eigenvalue: estimate,
        eigenvector: v,
        converged: false,
        iterations: max_iters,
    })
}

fn seeded_start<T: Scalar>(n: usize, restart: u64) -> Vector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    rng.set_stream(restart);
    Vector::from_vec(
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z)
            })
            .collect(),
    )
}

/// Largest singular value, via power iteration on `MᵀM`.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>) -> T {
    if m.rows() == 0 || m.cols() == 0 || m.max_abs() == T::zero() {
        return T::zero();
    }
    let gram = m.transpose().matmul(m).expect("MᵀM shapes agree");
    let mut best = T::zero();
    // Two seeded starts guard against a start orthogonal to the top singular vector.
    for restart in 0..2 {
        let v0 = seeded_start::<T>(m.cols(), restart);
        if let Ok(p) = power_iteration(&gram, &v0, POWER_MAX_ITERS, T::lit(POWER_TOL) * gram.max_abs().max(T::one())) {
            best = best.max(p.eigenvalue);
        }
    }
    best.max(T::zero()).sqrt()
}

/// `‖M^(2^s)‖₂^(1/2^s)` for `2^s = power`, computed by normalized repeated squaring.
///
/// Converges to the spectral radius from above as the power grows, and handles
/// complex-dominant and defective cases where power iteration cannot settle.
pub fn growth_rate<T: Scalar>(m: &Matrix<T>, power: u32) -> Result<T> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            op: "growth_rate",
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !power.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("growth power {power} must be a power of two")));
    }
    let f = m.frobenius_norm();
    if f == T::zero() {
        return Ok(T::zero());
    }
    // M^(2^s) = exp(log_scale) * p, with ‖p‖_F = 1.
    let mut p = m.scaled(T::one() / f);
    let mut log_scale = f.ln();
    for _ in 0..power.trailing_zeros() {
        let sq = p.matmul(&p)?;
        let n = sq.frobenius_norm();
        if n == T::zero() {
            return Ok(T::zero());
        }
        log_scale = log_scale + log_scale + n.ln();
        p = sq.scaled(T::one() / n);
    }
    let two_norm = spectral_norm(&p);
    Ok(((log_scale + two_norm.ln()) / T::lit(power as f64)).exp())
}

/// Dominant eigenvalue modulus `|λ₁|`.
///
/// Power iteration from [`RADIUS_RESTARTS`] seeded starts; the largest converged
/// modulus wins. When no restart converges (complex-dominant pair, tied moduli of
/// opposite sign, defective blocks) the growth-rate estimate at `k = 64` is returned.
pub fn spectral_radius<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            op: "spectral_radius",
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.max_abs() == T::zero() {
        return Ok(T::zero());
    }
    let tol = T::lit(POWER_TOL) * m.max_abs().max(T::one());
    let mut best: Option<T> = None;
    for restart in 0..RADIUS_RESTARTS as u64 {
        let v0 = seeded_start::<T>(m.rows(), restart);
        let p = power_iteration(m, &v0, POWER_MAX_ITERS, tol)?;
        if p.converged {
            let r = p.eigenvalue.abs();
            best = Some(best.map_or(r, |b| b.max(r)));
        }
    }
    match best {
        Some(r) => Ok(r),
        None => growth_rate(m, GROWTH_POWER),
    }
}
