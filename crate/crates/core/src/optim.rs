//! Minibatch SGD with gradient clipping, the Ω regularizer and success-based stopping.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{bptt, ErrorSignal, TimeReduction};
use crate::linalg::norm2;
use crate::model::{forward_from_zero, loss, ParamGrads, RnnParams};
use crate::regularizer::omega_grad_immediate;
use crate::scalar::Scalar;
use crate::serialize::fmt17;
use crate::tasks::{mixed_sample, TaskKind, TaskSample, TaskSpec, Target};

/// Absolute error below which a regression sequence counts as solved.
pub const REGRESSION_TOLERANCE: f64 = 0.04;
/// Largest test error rate that still counts as success.
pub const SUCCESS_ERROR_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    #[default]
    None,
    Norm,
    Elementwise,
}

impl ClipKind {
    pub fn name(self) -> &'static str {
        match self {
            ClipKind::None => "none",
            ClipKind::Norm => "norm",
            ClipKind::Elementwise => "elementwise",
        }
    }
}

impl FromStr for ClipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(ClipKind::None),
            "norm" => Ok(ClipKind::Norm),
            "elementwise" | "element-wise" => Ok(ClipKind::Elementwise),
            other => Err(Error::InvalidArgument(format!("unknown clip kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPolicy {
    pub kind: ClipKind,
    pub threshold: f64,
}

impl Default for ClipPolicy {
    fn default() -> Self {
        Self::none()
    }
}

impl ClipPolicy {
    pub fn none() -> Self {
        Self {
            kind: ClipKind::None,
            threshold: 0.0,
        }
    }

    pub fn norm(threshold: f64) -> Self {
        Self {
            kind: ClipKind::Norm,
            threshold,
        }
    }

    pub fn elementwise(threshold: f64) -> Self {
        Self {
            kind: ClipKind::Elementwise,
            threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ClipKind::None && !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "clip threshold must be positive and finite, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

fn check_clip_input<T: Scalar>(g: &[T], threshold: T) -> Result<()> {
    if !(threshold > T::zero()) {
        return Err(Error::InvalidArgument(format!("clip threshold must be positive, got {threshold}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient passed to clipping".into(),
        });
    }
    Ok(())
}

/// Rescales `g` to norm `threshold` when `‖g‖ ≥ threshold`; otherwise returns it unchanged.
pub fn clip_norm<T: Scalar>(g: &[T], threshold: T) -> Result<Vec<T>> {
    let mut out = g.to_vec();
    clip_norm_in_place(&mut out, threshold)?;
    Ok(out)
}

/// In-place [`clip_norm`]; returns whether the rescaling fired.
pub fn clip_norm_in_place<T: Scalar>(g: &mut [T], threshold: T) -> Result<bool> {
    check_clip_input(g, threshold)?;
    let norm = norm2(g);
    if norm >= threshold && norm > T::zero() {
        let s = threshold / norm;
        g.iter_mut().for_each(|v| *v *= s);
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Clamps every entry into `[−threshold, threshold]`.
pub fn clip_elementwise<T: Scalar>(g: &[T], threshold: T) -> Result<Vec<T>> {
    let mut out = g.to_vec();
    clip_elementwise_in_place(&mut out, threshold)?;
    Ok(out)
}

/// In-place [`clip_elementwise`]; returns whether any entry was clamped.
pub fn clip_elementwise_in_place<T: Scalar>(g: &mut [T], threshold: T) -> Result<bool> {
    check_clip_input(g, threshold)?;
    let mut fired = false;
    for v in g.iter_mut() {
        if v.abs() > threshold {
            *v = threshold.copysign(*v);
            fired = true;
        }
    }
    Ok(fired)
}

/// Norms around one clipping decision on the full parameter gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipOutcome<T> {
    pub norm_before: T,
    pub norm_after: T,
    pub fired: bool,
}

/// Applies `policy` to the concatenation of every gradient block.
pub fn apply_clip<T: Scalar>(policy: &ClipPolicy, grads: &mut ParamGrads<T>) -> Result<ClipOutcome<T>> {
    let mut flat = grads.to_flat();
    let norm_before = norm2(&flat);
    let threshold = T::lit(policy.threshold);
    let fired = match policy.kind {
        ClipKind::None => {
            if !norm_before.is_finite() {
                return Err(Error::NonFinite {
                    what: "gradient".into(),
                });
            }
            false
        }
        ClipKind::Norm => clip_norm_in_place(&mut flat, threshold)?,
        ClipKind::Elementwise => clip_elementwise_in_place(&mut flat, threshold)?,
    };
    if fired {
        grads.set_flat(&flat)?;
    }
    Ok(ClipOutcome {
        norm_before,
        norm_after: if fired { norm2(&flat) } else { norm_before },
        fired,
    })
}

/// `θ ← θ − lr·g` on every block, readout included.
pub fn sgd_step<T: Scalar>(params: &mut RnnParams<T>, grads: &ParamGrads<T>, lr: T) -> Result<()> {
    let (p, g) = (params.blocks_mut(), grads.blocks());
    for (i, (pb, gb)) in p.into_iter().zip(g).enumerate() {
        if pb.len() != gb.len() {
            return Err(crate::error::mismatch(
                crate::model::BLOCK_NAMES[i],
                pb.len(),
                gb.len(),
            ));
        }
        for (w, &d) in pb.iter_mut().zip(gb) {
            *w -= lr * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSchedule {
    /// α_t = α0.
    #[default]
    #[serde(alias = "constant")]
    Const,
    /// α_t = α0 / t, t the 1-based epoch index.
    InvT,
}

impl AlphaSchedule {
    pub fn alpha(self, alpha0: f64, epoch: usize) -> f64 {
        match self {
            AlphaSchedule::Const => alpha0,
            AlphaSchedule::InvT => alpha0 / epoch.max(1) as f64,
        }
    }
}

impl FromStr for AlphaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "const" | "constant" => Ok(AlphaSchedule::Const),
            "inv-t" | "inv_t" | "1/t" => Ok(AlphaSchedule::InvT),
            other => Err(Error::InvalidArgument(format!("unknown alpha schedule '{other}'"))),
        }
    }
}

/// Training hyperparameters. An epoch is `eval_every` updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Halve the learning rate whenever an epoch's mean training error exceeds the previous one.
    pub lr_halving: bool,
    pub clip: ClipPolicy,
    /// Regularizer weight; 0 disables Ω.
    pub alpha0: f64,
    pub alpha_schedule: AlphaSchedule,
    pub batch_size: usize,
    pub max_updates: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub time_reduction: TimeReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            lr_halving: false,
            clip: ClipPolicy::none(),
            alpha0: 0.0,
            alpha_schedule: AlphaSchedule::Const,
            batch_size: 16,
            max_updates: 10_000,
            eval_every: 1_000,
            seed: 0,
            time_reduction: TimeReduction::Sum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return bad(format!("alpha0 must be non-negative, got {}", self.alpha0));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive".into());
        }
        self.clip.validate()
    }
}

/// One row per update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateRow {
    pub update: usize,
    /// Mean minibatch error E.
    pub loss: f64,
    pub grad_norm: f64,
    pub grad_norm_clipped: f64,
    pub clip_fired: bool,
    /// Mean minibatch Ω (0 when the regularizer is off).
    pub omega: f64,
    pub alpha: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub update: usize,
    pub error_rate: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub updates: Vec<UpdateRow>,
    pub evals: Vec<EvalRow>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str =
        "update,loss,grad_norm,grad_norm_clipped,clip_fired,omega,alpha,lr,test_error,success";

    /// One line per update; the test columns are filled on evaluation updates only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let mut evals = self.evals.iter().peekable();
        for r in &self.updates {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},",
                r.update,
                fmt17(r.loss),
                fmt17(r.grad_norm),
                fmt17(r.grad_norm_clipped),
                u8::from(r.clip_fired),
                fmt17(r.omega),
                fmt17(r.alpha),
                fmt17(r.lr)
            );
            if let Some(e) = evals.next_if(|e| e.update == r.update) {
                let _ = write!(out, "{},{}", fmt17(e.error_rate), u8::from(e.success));
            } else {
                out.push(',');
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Succeeded,
    BudgetExhausted,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: RnnParams<T>,
    pub log: TrainLog,
    pub status: TrainStatus,
    pub last_eval: Option<Evaluation>,
    /// Description of the failure when `status` is `Diverged`.
    pub divergence: Option<String>,
}

/// Per-sequence correctness rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Every scored step's argmax must equal its label.
    Argmax,
    /// Only the last scored step counts (random permutation: the one predictable symbol).
    ArgmaxLast,
    /// `|y − target| < tolerance` on the final readout.
    AbsError { tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRule {
    pub scoring: Scoring,
    pub max_error_rate: f64,
}

impl SuccessRule {
    pub fn for_task(kind: TaskKind) -> Self {
        let scoring = match kind {
            TaskKind::Addition | TaskKind::Multiplication => Scoring::AbsError {
                tolerance: REGRESSION_TOLERANCE,
            },
            TaskKind::RandomPermutation => Scoring::ArgmaxLast,
            _ => Scoring::Argmax,
        };
        Self {
            scoring,
            max_error_rate: SUCCESS_ERROR_RATE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub error_rate: f64,
    pub errors: usize,
    pub total: usize,
    pub success: bool,
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

fn sample_correct<T: Scalar>(params: &RnnParams<T>, sample: &TaskSample, scoring: Scoring) -> Result<bool> {
    let traj = forward_from_zero(params, &sample.inputs_as::<T>())?;
    let out = loss(params, &traj, &sample.loss_spec::<T>())?;
    let at = |t: usize| out.outputs[t - 1].as_ref().expect("scored step has an output");
    Ok(match (&sample.target, scoring) {
        (Target::Scalar(y), Scoring::AbsError { tolerance }) => {
            let pred = at(sample.len())[0].to_f64_lossy();
            (pred - y).abs() < tolerance
        }
        (Target::Class(c), Scoring::Argmax | Scoring::ArgmaxLast) => argmax(at(sample.len())) == *c,
        (Target::Sequence(labels), Scoring::Argmax) => sample
            .scored_steps
            .iter()
            .zip(labels)
            .all(|(&t, &l)| argmax(at(t)) == l),
        (Target::Sequence(labels), Scoring::ArgmaxLast) => match (sample.scored_steps.last(), labels.last()) {
            (Some(&t), Some(&l)) => argmax(at(t)) == l,
            _ => true,
        },
        (target, scoring) => {
            return Err(Error::InvalidArgument(format!(
                "scoring {scoring:?} does not apply to target {target:?}"
            )))
        }
    })
}

/// Error rate of `params` on `test` under `rule`.
pub fn evaluate<T: Scalar>(params: &RnnParams<T>, test: &[TaskSample], rule: &SuccessRule) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs a non-empty test set".into()));
    }
    let correct: Vec<bool> = test
        .par_iter()
        .map(|s| sample_correct(params, s, rule.scoring))
        .collect::<Result<_>>()?;
    let errors = correct.iter().filter(|c| !**c).count();
    let error_rate = errors as f64 / test.len() as f64;
    Ok(Evaluation {
        error_rate,
        errors,
        total: test.len(),
        success: error_rate <= rule.max_error_rate,
    })
}

/// Held-out samples and the rule that decides success.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub samples: Vec<TaskSample>,
    pub rule: SuccessRule,
}

impl EvalSet {
    /// `n` samples from `spec` re-seeded with `seed`, scored by the task's own rule.
    pub fn for_task(spec: &TaskSpec, n: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            samples: spec.with_seed(seed).samples(0, n)?,
            rule: SuccessRule::for_task(spec.kind),
        })
    }
}

/// Infinite indexed stream of training sequences.
pub trait SampleSource: Sync {
    fn sample(&self, index: u64) -> Result<TaskSample>;
}

impl SampleSource for TaskSpec {
    fn sample(&self, index: u64) -> Result<TaskSample> {
        TaskSpec::sample(self, index)
    }
}

/// Each sample drawn from a uniformly chosen spec.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub specs: Vec<TaskSpec>,
    pub seed: u64,
}

impl SampleSource for Mixture {
    fn sample(&self, index: u64) -> Result<TaskSample> {
        mixed_sample(&self.specs, self.seed, index)
    }
}

/// Adapts a closure into a [`SampleSource`].
pub struct FnSource<F>(pub F);

impl<F: Fn(u64) -> Result<TaskSample> + Sync> SampleSource for FnSource<F> {
    fn sample(&self, index: u64) -> Result<TaskSample> {
        (self.0)(index)
    }
}

struct SampleGrad<T> {
    loss: T,
    omega: T,
    grads: ParamGrads<T>,
    omega_grad: Option<crate::linalg::Matrix<T>>,
}

fn sample_gradient<T: Scalar>(
    params: &RnnParams<T>,
    sample: &TaskSample,
    reduction: TimeReduction,
    with_omega: bool,
) -> Result<SampleGrad<T>> {
    let traj = forward_from_zero(params, &sample.inputs_as::<T>())?;
    let out = loss(params, &traj, &sample.loss_spec::<T>())?;
    let mut total = out.total;
    let mut signal = ErrorSignal::from(out);
    if reduction == TimeReduction::Mean {
        let s = T::one() / T::lit(sample.scored_steps.len().max(1) as f64);
        signal.scale(s);
        total *= s;
    }
    let report = bptt(params, &traj, &signal)?;
    let (omega, omega_grad) = if with_omega {
        let g = omega_grad_immediate(params, &traj, &report.deltas)?;
        (g.report.omega_total, Some(g.grad))
    } else {
        (T::zero(), None)
    };
    Ok(SampleGrad {
        loss: total,
        omega,
        grads: report.grads,
        omega_grad,
    })
}

struct BatchGrad<T> {
    loss: T,
    omega: T,
    grads: ParamGrads<T>,
}

/// Mean over the batch of `∇E + α ∇⁺Ω`, reduced in sample order.
fn batch_gradient<T: Scalar>(
    params: &RnnParams<T>,
    batch: &[TaskSample],
    reduction: TimeReduction,
    alpha: T,
) -> Result<BatchGrad<T>> {
    let with_omega = alpha > T::zero();
    let parts: Vec<SampleGrad<T>> = batch
        .par_iter()
        .map(|s| sample_gradient(params, s, reduction, with_omega))
        .collect::<Result<_>>()?;
    let inv = T::one() / T::lit(batch.len() as f64);
    let mut grads = ParamGrads::zeros_like(params);
    let (mut loss_sum, mut omega_sum) = (T::zero(), T::zero());
    for p in &parts {
        grads.add_scaled(inv, &p.grads);
        if let Some(og) = &p.omega_grad {
            grads.w_rec.axpy(alpha * inv, og);
        }
        loss_sum += p.loss;
        omega_sum += p.omega;
    }
    Ok(BatchGrad {
        loss: loss_sum * inv,
        omega: omega_sum * inv,
        grads,
    })
}

fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFiniteState { .. } | Error::NonFiniteGradient { .. } | Error::NonFinite { .. }
    )
}

/// Minibatch SGD on `E + α_t Ω`.
///
/// Update `u` (1-based) trains on samples `(u−1)·B .. u·B` of `source`. Every
/// `eval_every` updates the epoch closes: the learning rate may halve, α moves
/// to the next epoch, and `eval` (if given) is scored; training stops on success.
pub fn train<T: Scalar, S: SampleSource + ?Sized>(
    mut params: RnnParams<T>,
    source: &S,
    eval: Option<&EvalSet>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    params.validate()?;
    let mut log = TrainLog::default();
    let mut lr = config.learning_rate;
    let mut epoch = 1;
    let mut epoch_loss = 0.0;
    let mut prev_epoch_loss: Option<f64> = None;
    let mut last_eval = None;
    let batch_size = config.batch_size as u64;

    for update in 1..=config.max_updates {
        let alpha = config.alpha_schedule.alpha(config.alpha0, epoch);
        let start = (update as u64 - 1) * batch_size;
        let batch: Vec<TaskSample> = (start..start + batch_size)
            .map(|i| source.sample(i))
            .collect::<Result<_>>()?;

        let step = batch_gradient(&params, &batch, config.time_reduction, T::lit(alpha)).and_then(|mut bg| {
            if !bg.loss.is_finite() {
                return Err(Error::NonFinite { what: "loss".into() });
            }
            let clip = apply_clip(&config.clip, &mut bg.grads)?;
            Ok((bg, clip))
        });
        let (bg, clip) = match step {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => {
                return Ok(TrainOutcome {
                    params,
                    log,
                    status: TrainStatus::Diverged,
                    last_eval,
                    divergence: Some(format!("update {update}: {e}")),
                })
            }
            Err(e) => return Err(e),
        };
        sgd_step(&mut params, &bg.grads, T::lit(lr))?;

        let loss_f = bg.loss.to_f64_lossy();
        log.updates.push(UpdateRow {
            update,
            loss: loss_f,
            grad_norm: clip.norm_before.to_f64_lossy(),
            grad_norm_clipped: clip.norm_after.to_f64_lossy(),
            clip_fired: clip.fired,
            omega: bg.omega.to_f64_lossy(),
            alpha,
            lr,
        });
        epoch_loss += loss_f;

        if update % config.eval_every == 0 {
            let mean = epoch_loss / config.eval_every as f64;
            if config.lr_halving && prev_epoch_loss.is_some_and(|p| mean > p) {
                lr *= 0.5;
            }
            prev_epoch_loss = Some(mean);
            epoch_loss = 0.0;
            epoch += 1;
            if let Some(set) = eval {
                let ev = match evaluate(&params, &set.samples, &set.rule) {
                    Ok(ev) => ev,
                    Err(e) if is_divergence(&e) => {
                        return Ok(TrainOutcome {
                            params,
                            log,
                            status: TrainStatus::Diverged,
                            last_eval,
                            divergence: Some(format!("evaluation after update {update}: {e}")),
                        })
                    }
                    Err(e) => return Err(e),
                };
                log.evals.push(EvalRow {
                    update,
                    error_rate: ev.error_rate,
                    success: ev.success,
                });
                last_eval = Some(ev);
                if ev.success {
                    return Ok(TrainOutcome {
                        params,
                        log,
                        status: TrainStatus::Succeeded,
                        last_eval,
                        divergence: None,
                    });
                }
            }
        }
    }
    Ok(TrainOutcome {
        params,
        log,
        status: TrainStatus::BudgetExhausted,
        last_eval,
        divergence: None,
    })
}

/// Gradient-norm statistics over unclipped updates, for picking a clipping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormStats {
    pub updates: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

/// Runs `updates` unclipped updates (other settings from `config`) and summarizes `‖g‖`.
pub fn suggest_threshold<T: Scalar, S: SampleSource + ?Sized>(
    params: RnnParams<T>,
    source: &S,
    config: &TrainConfig,
    updates: usize,
) -> Result<NormStats> {
    let cfg = TrainConfig {
        clip: ClipPolicy::none(),
        max_updates: updates,
        ..config.clone()
    };
    let out = train(params, source, None, &cfg)?;
    let norms: Vec<f64> = out.log.updates.iter().map(|r| r.grad_norm).collect();
    if norms.is_empty() {
        return Err(Error::InvalidArgument(match out.divergence {
            Some(d) => format!("no gradient statistics: {d}"),
            None => "no gradient statistics: zero updates".into(),
        }));
    }
    Ok(NormStats {
        updates: norms.len(),
        mean: norms.iter().sum::<f64>() / norms.len() as f64,
        max: norms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: norms.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
