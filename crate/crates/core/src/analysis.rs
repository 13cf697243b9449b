//! Dynamical-systems diagnostics: gradient-flow conditions, eigen-decomposition of
//! the exploding direction, and the single-unit sigmoid map `x ← w σ(x) + b`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grad::{bptt, ErrorSignal};
use crate::linalg::{spectral_norm, spectral_radius, Matrix, Vector};
use crate::model::{forward, Activation, RnnParams};
use crate::scalar::Scalar;
use crate::serialize::fmt17;

/// Largest matrix handled by [`exploding_direction`].
pub const MAX_DIRECTION_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `|λ₁|` of `W_rec`.
    pub spectral_radius: f64,
    /// `‖W_rec‖₂`.
    pub spectral_norm: f64,
    pub gamma: f64,
    /// `‖W_rec‖₂ · γ < 1`: every long-term component contracts.
    pub vanishing_sufficient: bool,
    /// `|λ₁| > 1/γ`: necessary for explosion.
    pub exploding_necessary: bool,
    /// Per-step contraction factor `‖W_rec‖₂ · γ` when it is below 1.
    pub eta: Option<f64>,
}

pub fn check_conditions<T: Scalar>(params: &RnnParams<T>) -> Result<ConditionReport> {
    let w = &params.w_rec;
    let radius = spectral_radius(w)?.to_f64_lossy();
    let norm = spectral_norm(w).to_f64_lossy();
    let gamma: f64 = params.activation.gamma();
    let eta = norm * gamma;
    Ok(ConditionReport {
        spectral_radius: radius,
        spectral_norm: norm,
        gamma,
        vanishing_sufficient: eta < 1.0,
        exploding_necessary: radius > 1.0 / gamma,
        eta: (eta < 1.0).then_some(eta),
    })
}

/// Exact versus single-eigenmode transport of an error vector over `l` steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    /// `(W_rec)^l e`, the row `e·(W_recᵀ)^l` written as a column.
    pub exact: Vec<f64>,
    /// `c_j λ_j^l q_j` for the kept eigenpair.
    pub approx: Vec<f64>,
    /// `‖exact − approx‖ / ‖exact‖`.
    pub rel_error: f64,
    pub eigenvalue: f64,
    pub coefficient: f64,
    /// Unit right eigenvector `q_j`.
    pub eigenvector: Vec<f64>,
    /// All eigenvalues `(re, im)`, by decreasing modulus.
    pub spectrum: Vec<(f64, f64)>,
}

fn char_poly(a: &Matrix<f64>) -> Vec<f64> {
    // Faddeev–LeVerrier; coefficients c[0..=n] of det(λI − A), c[n] = 1.
    let n = a.rows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = Matrix::zeros(n, n);
    for k in 1..=n {
        let mut next = a.matmul(&m).expect("square");
        for i in 0..n {
            next[(i, i)] += c[n - k + 1];
        }
        let am = a.matmul(&next).expect("square");
        c[n - k] = -(0..n).map(|i| am[(i, i)]).sum::<f64>() / k as f64;
        m = next;
    }
    c
}

fn poly_eval(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    // Durand–Kerner on the monic polynomial, then a few Newton polishing steps.
    let n = c.len() - 1;
    let radius = 1.0 + c[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * radius / 2.0).collect();
    for _ in 0..5_000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                denom = Complex64::new(1e-300, 0.0);
            }
            let step = poly_eval(c, z[i]) / denom;
            z[i] -= step;
            moved = moved.max(step.norm() / z[i].norm().max(1.0));
        }
        if moved < 1e-15 {
            break;
        }
    }
    let deriv: Vec<f64> = (1..=n).map(|k| k as f64 * c[k]).collect();
    for zi in &mut z {
        for _ in 0..3 {
            let d = poly_eval(&deriv, *zi);
            if d.norm() == 0.0 {
                break;
            }
            *zi -= poly_eval(c, *zi) / d;
        }
    }
    z
}

/// Eigenvector of `a` for the real eigenvalue `lambda` by shifted inverse iteration.
fn inverse_iteration(a: &Matrix<f64>, lambda: f64) -> Result<Vector<f64>> {
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    let mut v = Vector::from_vec((0..n).map(|i| 1.0 + 0.1 * i as f64).collect());
    let mut shift = lambda + 1e-10 * scale;
    for _ in 0..50 {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= shift;
        }
        match shifted.solve(&v) {
            Ok(w) => {
                let next = w.normalized()?;
                let aligned = if crate::linalg::dot(&next, &v) < 0.0 { next.scaled(-1.0) } else { next };
                let delta = aligned.sub(&v)?.norm();
                v = aligned;
                if delta < 1e-14 {
                    break;
                }
            }
            Err(Error::Singular { .. }) => shift += 1e-9 * scale,
            Err(e) => return Err(e),
        }
    }
    Ok(v)
}

/// Dominant-mode approximation of `e·(W_recᵀ)^l`.
///
/// Keeps the largest-modulus eigenpair whose expansion coefficient
/// `c_j = p_j·e / p_j·q_j` (left eigenvector `p_j`, right `q_j`) is non-negligible.
/// Requires `n ≤ 8`, distinct eigenvalues and a real kept eigenvalue strictly
/// dominating the remaining ones.
pub fn exploding_direction(w_rec: &Matrix<f64>, error_row: &Vector<f64>, l: u32) -> Result<DirectionReport> {
    let n = w_rec.rows();
    if !w_rec.is_square() {
        return Err(Error::NotSquare {
            op: "exploding_direction",
            rows: w_rec.rows(),
            cols: w_rec.cols(),
        });
    }
    if n == 0 || n > MAX_DIRECTION_DIM {
        return Err(Error::Unsupported(format!(
            "eigen-expansion supports 1 ≤ n ≤ {MAX_DIRECTION_DIM}, got n = {n}"
        )));
    }
    if error_row.len() != n {
        return Err(crate::error::mismatch("exploding_direction", n, error_row.len()));
    }
    let e_norm = error_row.norm();
    if e_norm == 0.0 {
        return Err(Error::ZeroVector { op: "exploding_direction" });
    }

    let mut exact = error_row.clone();
    for _ in 0..l {
        exact = w_rec.matvec(&exact)?;
    }

    let scale = w_rec.max_abs().max(1e-300);
    let mut eig = poly_roots(&char_poly(w_rec));
    for z in &mut eig {
        if z.im.abs() <= 1e-8 * scale.max(z.norm()) {
            z.im = 0.0;
        }
    }
    eig.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    for i in 0..n {
        for j in i + 1..n {
            if (eig[i] - eig[j]).norm() <= 1e-6 * scale {
                return Err(Error::Unsupported(
                    "repeated eigenvalue: matrix may not be diagonalizable".into(),
                ));
            }
        }
    }

    let wt = w_rec.transpose();
    for (idx, lam) in eig.iter().enumerate() {
        if lam.im != 0.0 {
            return Err(Error::Unsupported(format!(
                "kept eigenvalue {lam} is complex; only real dominant modes are expanded"
            )));
        }
        let q = inverse_iteration(w_rec, lam.re)?;
        let p = inverse_iteration(&wt, lam.re)?;
        let pq = crate::linalg::dot(&p, &q);
        if pq.abs() < 1e-12 {
            return Err(Error::Unsupported("left and right eigenvectors are orthogonal".into()));
        }
        let c = crate::linalg::dot(&p, error_row) / pq;
        if c.abs() <= 1e-10 * e_norm {
            continue;
        }
        if let Some(next) = eig.get(idx + 1) {
            if next.norm() >= lam.norm() * (1.0 - 1e-9) {
                return Err(Error::Unsupported(format!(
                    "no strictly dominant mode: |{lam}| ties with |{next}|"
                )));
            }
        }
        // Rayleigh-type refinement from both eigenvectors.
        let lambda = crate::linalg::dot(&p, &w_rec.matvec(&q)?) / pq;
        let approx = q.scaled(c * lambda.powi(l as i32));
        let exact_norm = exact.norm();
        let rel_error = if exact_norm == 0.0 {
            approx.norm()
        } else {
            exact.sub(&approx)?.norm() / exact_norm
        };
        return Ok(DirectionReport {
            exact: exact.into_vec(),
            approx: approx.into_vec(),
            rel_error,
            eigenvalue: lambda,
            coefficient: c,
            eigenvector: q.into_vec(),
            spectrum: eig.iter().map(|z| (z.re, z.im)).collect(),
        });
    }
    Err(Error::Unsupported("error vector has no component on any real eigenmode".into()))
}

/// `x ← w σ(x) + b` with the logistic σ.
pub fn sigmoid_map(w: f64, b: f64, x: f64) -> f64 {
    w * Activation::Sigmoid.apply(x) + b
}

/// Attractors found at one bias value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorSet {
    pub b: f64,
    /// Stable fixed points, ascending.
    pub attractors: Vec<f64>,
    /// Starts whose orbit settled on a cycle instead of a point.
    pub non_point: usize,
    /// Starts that landed exactly on a repelling fixed point.
    pub unstable: usize,
    /// Starts that neither converged nor cycled within the budget.
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationReport {
    pub w: f64,
    pub points: Vec<AttractorSet>,
    /// Bias values where the attractor count changes, refined by bisection.
    pub boundaries: Vec<f64>,
}

impl BifurcationReport {
    /// `b,count,attractors` rows; attractors are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b,count,attractors,non_point,unstable,unconverged\n");
        for p in &self.points {
            let list: Vec<String> = p.attractors.iter().map(|&a| fmt17(a)).collect();
            out += &format!(
                "{},{},{},{},{},{}\n",
                fmt17(p.b),
                p.attractors.len(),
                list.join(";"),
                p.non_point,
                p.unstable,
                p.unconverged
            );
        }
        out
    }
}

/// Settings for [`bifurcation_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub iters: usize,
    pub tol: f64,
    /// Explicit starting states; `None` uses 21 points evenly spread over `[−w−|b|, w+|b|]`.
    pub x0: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            iters: 100_000,
            tol: 1e-8,
            x0: None,
        }
    }
}

fn default_starts(w: f64, b: f64) -> Vec<f64> {
    let r = w.abs() + b.abs();
    (0..21).map(|i| -r + 2.0 * r * i as f64 / 20.0).collect()
}

enum Endpoint {
    Point(f64),
    Unstable,
    Cycle,
    Unconverged,
}

fn settle(w: f64, b: f64, x0: f64, cfg: &SweepConfig) -> Endpoint {
    let mut prev2 = f64::NAN;
    let mut prev = x0;
    for _ in 0..cfg.iters {
        let x = sigmoid_map(w, b, prev);
        if (x - prev).abs() < cfg.tol {
            return polish(w, b, x);
        }
        prev2 = prev;
        prev = x;
    }
    if (prev - prev2).abs() >= cfg.tol && (sigmoid_map(w, b, prev) - prev2).abs() < cfg.tol {
        Endpoint::Cycle
    } else {
        Endpoint::Unconverged
    }
}

fn polish(w: f64, b: f64, mut x: f64) -> Endpoint {
    // Newton on g(x) = wσ(x) + b − x pins slowly converged orbits onto the fixed point.
    for _ in 0..50 {
        let (s, ds) = Activation::Sigmoid.value_and_slope(x);
        let g = w * s + b - x;
        let dg = w * ds - 1.0;
        if dg == 0.0 {
            break;
        }
        let step = g / dg;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    // Unstable fixed points (|f′| ≥ 1) are not attractors.
    if (w * Activation::Sigmoid.derivative(x)).abs() >= 1.0 {
        Endpoint::Unstable
    } else {
        Endpoint::Point(x)
    }
}

/// Attractor set of the single-unit map at `(w, b)`.
pub fn attractors_at(w: f64, b: f64, cfg: &SweepConfig) -> AttractorSet {
    let starts = cfg.x0.clone().unwrap_or_else(|| default_starts(w, b));
    let mut points = Vec::new();
    let (mut non_point, mut unstable, mut unconverged) = (0, 0, 0);
    for &x0 in &starts {
        match settle(w, b, x0, cfg) {
            Endpoint::Point(x) => points.push(x),
            Endpoint::Unstable => unstable += 1,
            Endpoint::Cycle => non_point += 1,
            Endpoint::Unconverged => unconverged += 1,
        }
    }
    points.sort_by(|a, c| a.partial_cmp(c).unwrap());
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for x in points {
        match clusters.last_mut() {
            Some(c) if x - c[c.len() - 1] <= 10.0 * cfg.tol => c.push(x),
            _ => clusters.push(vec![x]),
        }
    }
    AttractorSet {
        b,
        attractors: clusters.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect(),
        non_point,
        unstable,
        unconverged,
    }
}

/// Attractor sets over `b_grid`, with count changes located by bisection to `1e-10`.
pub fn bifurcation_sweep(w: f64, b_grid: &[f64], cfg: &SweepConfig) -> BifurcationReport {
    let points: Vec<AttractorSet> = b_grid.par_iter().map(|&b| attractors_at(w, b, cfg)).collect();
    let mut boundaries = Vec::new();
    for pair in points.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        if lo.attractors.len() == hi.attractors.len() {
            continue;
        }
        let count_lo = lo.attractors.len();
        let (mut a, mut c) = (lo.b, hi.b);
        while (c - a).abs() > 1e-10 {
            let mid = 0.5 * (a + c);
            if attractors_at(w, mid, cfg).attractors.len() == count_lo {
                a = mid;
            } else {
                c = mid;
            }
        }
        boundaries.push(0.5 * (a + c));
    }
    BifurcationReport { w, points, boundaries }
}

/// Evenly spaced grid with `n ≥ 2` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub const SURFACE_X0: f64 = 0.5;
pub const SURFACE_STEPS: usize = 50;
pub const SURFACE_TARGET: f64 = 0.7;

/// One cell of the single-unit error surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceCell {
    pub e: f64,
    pub de_dw: f64,
    pub de_db: f64,
    pub grad_norm: f64,
    pub saturated: bool,
}

/// Error `E = (σ(x_50) − 0.7)²` of `x_t = w σ(x_{t−1}) + b`, `x_0 = 0.5`, and its gradient.
///
/// Scalar forward and reverse sweep; [`surface_cell_bptt`] is the same quantity
/// through the general network code.
pub fn surface_cell(w: f64, b: f64) -> SurfaceCell {
    let mut x = [0.0; SURFACE_STEPS + 1];
    x[0] = SURFACE_X0;
    for t in 1..=SURFACE_STEPS {
        x[t] = w * sigmoid(x[t - 1]) + b;
    }
    let h = sigmoid(x[SURFACE_STEPS]);
    let diff = h - SURFACE_TARGET;
    if !diff.is_finite() {
        return SurfaceCell::SATURATED;
    }
    let mut delta = 2.0 * diff * h * (1.0 - h);
    let (mut dw, mut db) = (0.0, 0.0);
    for t in (1..=SURFACE_STEPS).rev() {
        let a = sigmoid(x[t - 1]);
        dw += delta * a;
        db += delta;
        delta *= w * a * (1.0 - a);
    }
    SurfaceCell {
        e: diff * diff,
        de_dw: dw,
        de_db: db,
        grad_norm: dw.hypot(db),
        saturated: false,
    }
}

impl SurfaceCell {
    const SATURATED: SurfaceCell = SurfaceCell {
        e: f64::NAN,
        de_dw: f64::NAN,
        de_db: f64::NAN,
        grad_norm: f64::NAN,
        saturated: true,
    };
}

fn sigmoid(x: f64) -> f64 {
    Activation::Sigmoid.apply(x)
}

/// [`surface_cell`] computed with [`forward`] and [`bptt`] on a one-unit network.
pub fn surface_cell_bptt(w: f64, b: f64) -> SurfaceCell {
    let Ok(params) = single_unit(w, b, Activation::Sigmoid) else {
        return SurfaceCell::SATURATED;
    };
    let inputs = vec![Vector::zeros(1); SURFACE_STEPS];
    let Ok(traj) = forward(&params, &Vector::from_vec(vec![SURFACE_X0]), &inputs) else {
        return SurfaceCell::SATURATED;
    };
    let h = traj.activated[SURFACE_STEPS][0];
    let diff = h - SURFACE_TARGET;
    let mut d_states = vec![Vector::zeros(1); SURFACE_STEPS];
    d_states[SURFACE_STEPS - 1][0] = 2.0 * diff * traj.slopes[SURFACE_STEPS][0];
    let Ok(report) = bptt(&params, &traj, &ErrorSignal::on_states(d_states)) else {
        return SurfaceCell::SATURATED;
    };
    let (dw, db) = (report.grads.w_rec[(0, 0)], report.grads.b[0]);
    SurfaceCell {
        e: diff * diff,
        de_dw: dw,
        de_db: db,
        grad_norm: dw.hypot(db),
        saturated: false,
    }
}

pub fn single_unit(w: f64, b: f64, activation: Activation) -> Result<RnnParams<f64>> {
    RnnParams::new(
        Matrix::from_vec(1, 1, vec![w])?,
        Matrix::zeros(1, 1),
        Vector::from_vec(vec![b]),
        Matrix::identity(1),
        Vector::zeros(1),
        activation,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceScan {
    pub w_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    /// `cells[i][j]` at `(w_grid[i], b_grid[j])`.
    pub cells: Vec<Vec<SurfaceCell>>,
}

impl SurfaceScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w,b,E,gradnorm,saturated\n");
        for (i, &w) in self.w_grid.iter().enumerate() {
            for (j, &b) in self.b_grid.iter().enumerate() {
                let c = &self.cells[i][j];
                out += &format!(
                    "{},{},{},{},{}\n",
                    fmt17(w),
                    fmt17(b),
                    fmt17(c.e),
                    fmt17(c.grad_norm),
                    u8::from(c.saturated)
                );
            }
        }
        out
    }

    /// Gradient norms of all unsaturated cells.
    pub fn grad_norms(&self) -> Vec<f64> {
        self.cells.iter().flatten().filter(|c| !c.saturated).map(|c| c.grad_norm).collect()
    }

    /// `max / median` of the gradient norm over unsaturated cells.
    pub fn wall_ratio(&self) -> f64 {
        let mut g = self.grad_norms();
        if g.is_empty() {
            return f64::NAN;
        }
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = g.len() / 2;
        let median = if g.len() % 2 == 0 { 0.5 * (g[mid - 1] + g[mid]) } else { g[mid] };
        g[g.len() - 1] / median
    }
}

pub fn error_surface_scan(w_grid: &[f64], b_grid: &[f64]) -> SurfaceScan {
    let cells = w_grid
        .par_iter()
        .map(|&w| b_grid.iter().map(|&b| surface_cell(w, b)).collect())
        .collect();
    SurfaceScan {
        w_grid: w_grid.to_vec(),
        b_grid: b_grid.to_vec(),
        cells,
    }
}

/// Distance between two trajectories that differ only in their initial state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceTrace {
    /// `‖x_t(a) − x_t(b)‖` under the given inputs, t = 0..=T.
    pub driven: Vec<f64>,
    /// The same with every input zeroed (the autonomous map alone).
    pub autonomous: Vec<f64>,
}

pub fn divergence_probe<T: Scalar>(
    params: &RnnParams<T>,
    inputs: &[Vector<T>],
    x0_a: &Vector<T>,
    x0_b: &Vector<T>,
) -> Result<DivergenceTrace> {
    let distances = |inputs: &[Vector<T>]| -> Result<Vec<f64>> {
        let a = forward(params, x0_a, inputs)?;
        let b = forward(params, x0_b, inputs)?;
        a.states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| Ok(x.sub(y)?.norm().to_f64_lossy()))
            .collect()
    };
    let silent = vec![Vector::zeros(params.input_dim()); inputs.len()];
    Ok(DivergenceTrace {
        driven: distances(inputs)?,
        autonomous: distances(&silent)?,
    })
}
