//! Seeded generators for the long-term-dependency benchmark problems.
//!
//! Positions are 1-based and every interval is an integer-truncated inclusive
//! range: "from `[T/10, 2T/10]`" becomes `T/10 ..= 2*T/10` with integer division.
//!
//! | kind | inputs | target |
//! |---|---|---|
//! | `addition` | `[value, marker]`, length `T′ ∈ [T, 11T/10]` | `(v_i + v_j)/2` |
//! | `multiplication` | as addition | `v_i · v_j` |
//! | `temporal_order` | one-hot over `{A, B, c, d, e, f}` | class `2·s1 + s2` |
//! | `temporal_order_3bit` | as temporal order | class `4·s1 + 2·s2 + s3` |
//! | `random_permutation` | one-hot over 100 symbols | next symbol at steps `1..T−1` |
//! | `noiseless_memorization` | one-hot symbols, filler, cue | pattern on the last `p` steps |
//!
//! In class encodings `A = 0`, `B = 1`. Symbol `s` of the permutation task sits
//! on channel `s − 1`.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::LossSpec;
use crate::scalar::Scalar;

pub const MIN_LENGTH: usize = 10;
pub const PERMUTATION_SYMBOLS: usize = 100;
pub const ORDER_CHANNELS: usize = 6;
const DISTRACTORS: std::ops::Range<usize> = 2..6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Addition,
    Multiplication,
    TemporalOrder,
    #[serde(rename = "temporal_order_3bit")]
    TemporalOrder3Bit,
    RandomPermutation,
    NoiselessMemorization,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Addition,
        TaskKind::Multiplication,
        TaskKind::TemporalOrder,
        TaskKind::TemporalOrder3Bit,
        TaskKind::RandomPermutation,
        TaskKind::NoiselessMemorization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Addition => "addition",
            TaskKind::Multiplication => "multiplication",
            TaskKind::TemporalOrder => "temporal_order",
            TaskKind::TemporalOrder3Bit => "temporal_order_3bit",
            TaskKind::RandomPermutation => "random_permutation",
            TaskKind::NoiselessMemorization => "noiseless_memorization",
        }
    }

    /// Regression tasks are scored by absolute error, the rest by argmax.
    pub fn is_regression(self) -> bool {
        matches!(self, TaskKind::Addition | TaskKind::Multiplication)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task '{s}'")))
    }
}

/// A task family and its nominal length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(rename = "T")]
    pub length: usize,
    /// Memorization only: 5 or 10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern_len: Option<usize>,
    /// Memorization only: 2 (with length-5 patterns) or 5 (with length-10 patterns).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl TaskSpec {
    /// Spec with the default variant fields for `kind` (memorization: 5-bit binary pattern).
    pub fn new(kind: TaskKind, length: usize, seed: u64) -> Self {
        let (pattern_len, symbols) = if kind == TaskKind::NoiselessMemorization {
            (Some(5), Some(2))
        } else {
            (None, None)
        };
        Self {
            kind,
            length,
            pattern_len,
            symbols,
            seed,
        }
    }

    pub fn memorization(length: usize, pattern_len: usize, symbols: usize, seed: u64) -> Self {
        Self {
            kind: TaskKind::NoiselessMemorization,
            length,
            pattern_len: Some(pattern_len),
            symbols: Some(symbols),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < MIN_LENGTH {
            return Err(Error::InvalidArgument(format!(
                "task length T={} is below the minimum {MIN_LENGTH}",
                self.length
            )));
        }
        match (self.kind, self.pattern_len, self.symbols) {
            (TaskKind::NoiselessMemorization, Some(5), Some(2)) | (TaskKind::NoiselessMemorization, Some(10), Some(5)) => Ok(()),
            (TaskKind::NoiselessMemorization, p, s) => Err(Error::InvalidArgument(format!(
                "memorization supports (pattern_len, symbols) = (5, 2) or (10, 5), got ({}, {})",
                opt(p),
                opt(s)
            ))),
            (_, None, None) => Ok(()),
            (kind, _, _) => Err(Error::InvalidArgument(format!(
                "pattern_len/symbols apply only to noiseless_memorization, not {kind}"
            ))),
        }
    }

    fn mem_shape(&self) -> (usize, usize) {
        (self.pattern_len.unwrap_or(5), self.symbols.unwrap_or(2))
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            TaskKind::Addition | TaskKind::Multiplication => 2,
            TaskKind::TemporalOrder | TaskKind::TemporalOrder3Bit => ORDER_CHANNELS,
            TaskKind::RandomPermutation => PERMUTATION_SYMBOLS,
            TaskKind::NoiselessMemorization => self.mem_shape().1 + 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            TaskKind::Addition | TaskKind::Multiplication => 1,
            TaskKind::TemporalOrder => 4,
            TaskKind::TemporalOrder3Bit => 8,
            TaskKind::RandomPermutation => PERMUTATION_SYMBOLS,
            TaskKind::NoiselessMemorization => self.mem_shape().1,
        }
    }

    /// Deterministic generator for `(self.seed, index)`: ChaCha8 seeded with the
    /// task seed, one stream per sample index.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Sample number `index` of this spec's stream.
    pub fn sample(&self, index: u64) -> Result<TaskSample> {
        self.validate()?;
        Ok(self.draw(&mut self.rng(index)))
    }

    /// `n` consecutive samples starting at `start`.
    pub fn samples(&self, start: u64, n: usize) -> Result<Vec<TaskSample>> {
        self.validate()?;
        Ok((0..n as u64).map(|i| self.draw(&mut self.rng(start + i))).collect())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TaskSample {
        let t = self.length;
        match self.kind {
            TaskKind::Addition => gen_addition(t, rng),
            TaskKind::Multiplication => gen_multiplication(t, rng),
            TaskKind::TemporalOrder => gen_temporal_order(t, rng),
            TaskKind::TemporalOrder3Bit => gen_temporal_order_3bit(t, rng),
            TaskKind::RandomPermutation => gen_random_permutation(t, rng),
            TaskKind::NoiselessMemorization => {
                let (p, s) = self.mem_shape();
                gen_noiseless_memorization(t, p, s, rng).expect("variant validated")
            }
        }
    }
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    Scalar(f64),
    /// One label per entry of `scored_steps`.
    Sequence(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub inputs: Vec<Vec<f64>>,
    pub target: Target,
    /// 1-based steps whose readout is scored.
    pub scored_steps: Vec<usize>,
    /// Nominal length T (the realized length is `inputs.len()`).
    #[serde(rename = "T")]
    pub nominal_len: usize,
}

impl TaskSample {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs_as<T: Scalar>(&self) -> Vec<Vector<T>> {
        self.inputs.iter().map(|u| Vector::from_f64(u)).collect()
    }

    pub fn loss_spec<T: Scalar>(&self) -> LossSpec<T> {
        match &self.target {
            Target::Class(c) => LossSpec::SoftmaxFinal { label: *c },
            Target::Scalar(v) => LossSpec::SquaredFinal {
                target: Vector::from_vec(vec![T::lit(*v)]),
            },
            Target::Sequence(labels) => {
                let mut per_step = vec![None; self.len()];
                for (&t, &l) in self.scored_steps.iter().zip(labels) {
                    per_step[t - 1] = Some(l);
                }
                LossSpec::SoftmaxPerStep { labels: per_step }
            }
        }
    }
}

fn one_hot(dim: usize, hot: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[hot] = 1.0;
    v
}

struct MarkedSequence {
    inputs: Vec<Vec<f64>>,
    vi: f64,
    vj: f64,
}

fn marked_values<R: Rng + ?Sized>(t: usize, rng: &mut R) -> MarkedSequence {
    let len = rng.random_range(t..=t * 11 / 10);
    let i = rng.random_range(1..=(len / 10).max(1));
    let j = loop {
        let j = rng.random_range(len / 10..=len / 2);
        if j != i {
            break j;
        }
    };
    let mut inputs: Vec<Vec<f64>> = (0..len).map(|_| vec![rng.random::<f64>(), 0.0]).collect();
    inputs[i - 1][1] = 1.0;
    inputs[j - 1][1] = 1.0;
    MarkedSequence {
        vi: inputs[i - 1][0],
        vj: inputs[j - 1][0],
        inputs,
    }
}

fn final_step(inputs: Vec<Vec<f64>>, target: Target, nominal_len: usize) -> TaskSample {
    let len = inputs.len();
    TaskSample {
        inputs,
        target,
        scored_steps: vec![len],
        nominal_len,
    }
}

/// Adding problem: the target is the mean of the two marked values.
pub fn gen_addition<R: Rng + ?Sized>(t: usize, rng: &mut R) -> TaskSample {
    let s = marked_values(t, rng);
    final_step(s.inputs, Target::Scalar((s.vi + s.vj) / 2.0), t)
}

/// Multiplication problem: the target is the product of the two marked values.
pub fn gen_multiplication<R: Rng + ?Sized>(t: usize, rng: &mut R) -> TaskSample {
    let s = marked_values(t, rng);
    final_step(s.inputs, Target::Scalar(s.vi * s.vj), t)
}

fn temporal_order_with<R: Rng + ?Sized>(t: usize, windows: &[(usize, usize)], rng: &mut R) -> TaskSample {
    let mut symbols: Vec<usize> = (0..t).map(|_| rng.random_range(DISTRACTORS)).collect();
    let mut class = 0;
    for &(lo, hi) in windows {
        let pos = rng.random_range(t * lo / 10..=t * hi / 10);
        let sym = rng.random_range(0..2);
        symbols[pos - 1] = sym;
        class = 2 * class + sym;
    }
    let inputs = symbols.into_iter().map(|s| one_hot(ORDER_CHANNELS, s)).collect();
    final_step(inputs, Target::Class(class), t)
}

/// Temporal order: classify the order of the two relevant symbols (AA, AB, BA, BB).
pub fn gen_temporal_order<R: Rng + ?Sized>(t: usize, rng: &mut R) -> TaskSample {
    temporal_order_with(t, &[(1, 2), (4, 5)], rng)
}

/// 3-bit temporal order: eight classes from three relevant symbols.
pub fn gen_temporal_order_3bit<R: Rng + ?Sized>(t: usize, rng: &mut R) -> TaskSample {
    temporal_order_with(t, &[(1, 2), (3, 4), (6, 7)], rng)
}

/// Random permutation: next-symbol prediction where only the last symbol,
/// a copy of the first, is predictable.
pub fn gen_random_permutation<R: Rng + ?Sized>(t: usize, rng: &mut R) -> TaskSample {
    let edge = *[1usize, 2].choose(rng).expect("non-empty");
    let mut symbols = vec![edge; t];
    for s in &mut symbols[1..t - 1] {
        *s = rng.random_range(3..=PERMUTATION_SYMBOLS);
    }
    TaskSample {
        inputs: symbols.iter().map(|&s| one_hot(PERMUTATION_SYMBOLS, s - 1)).collect(),
        target: Target::Sequence(symbols[1..].iter().map(|&s| s - 1).collect()),
        scored_steps: (1..t).collect(),
        nominal_len: t,
    }
}

/// Noiseless memorization: `pattern_len` symbols, `t` filler steps, then
/// `pattern_len` emission steps. The cue channel fires on the first emission
/// step; the model must reproduce the pattern over the emission window.
pub fn gen_noiseless_memorization<R: Rng + ?Sized>(
    t: usize,
    pattern_len: usize,
    symbols: usize,
    rng: &mut R,
) -> Result<TaskSample> {
    TaskSpec::memorization(t.max(MIN_LENGTH), pattern_len, symbols, 0).validate()?;
    let pattern: Vec<usize> = (0..pattern_len).map(|_| rng.random_range(0..symbols)).collect();
    Ok(memorization_sample(t, &pattern, symbols))
}

/// Deterministic memorization layout for a given pattern.
pub fn memorization_sample(t: usize, pattern: &[usize], symbols: usize) -> TaskSample {
    let p = pattern.len();
    let (filler, cue) = (symbols, symbols + 1);
    let dim = symbols + 2;
    let mut inputs: Vec<Vec<f64>> = pattern.iter().map(|&s| one_hot(dim, s)).collect();
    inputs.extend((0..t).map(|_| one_hot(dim, filler)));
    inputs.push(one_hot(dim, cue));
    inputs.extend((1..p).map(|_| one_hot(dim, filler)));
    TaskSample {
        inputs,
        target: Target::Sequence(pattern.to_vec()),
        scored_steps: (p + t + 1..=p + t + p).collect(),
        nominal_len: t,
    }
}

/// Draws the spec for each update uniformly from `specs` (mixed-length training).
pub fn mixed_sample(specs: &[TaskSpec], seed: u64, index: u64) -> Result<TaskSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let spec = specs
        .choose(&mut rng)
        .ok_or_else(|| Error::InvalidArgument("empty task mixture".into()))?;
    spec.validate()?;
    Ok(spec.draw(&mut rng))
}
