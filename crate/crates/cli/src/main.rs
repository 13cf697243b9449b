mod config;
mod manifest;

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::{json, Map, Value};

use rnnlab::analysis::{
    bifurcation_sweep, check_conditions, error_surface_scan, exploding_direction, linspace, surface_cell, SweepConfig,
    MAX_DIRECTION_DIM,
};
use rnnlab::grad::check::{compare, compare_slices, fd_gradient, richardson, BlockError};
use rnnlab::grad::{bptt, ErrorSignal};
use rnnlab::model::{forward, init_params_with_std, loss, Checkpoint, LossSpec};
use rnnlab::optim::{suggest_threshold, train, EvalSet, TrainStatus};
use rnnlab::regularizer::{fd_omega_wrec, omega_grad_immediate};
use rnnlab::serialize::{fmt17, to_json_line, to_json_pretty};
use rnnlab::tasks::{TaskKind, TaskSpec};
use rnnlab::{Activation, Matrix, RnnParams, Vector};

use config::{read_document, scalar_value, RunConfig};
use manifest::{sidecar, write_text, Recorder};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Offset between the training stream seed and the held-out test set seed.
const TEST_SEED_OFFSET: u64 = 1_000_000;
/// Pass threshold for `grad-check`.
const GRAD_CHECK_TOL: f64 = 1e-4;
/// Coarse step of the Richardson-extrapolated central differences.
const FD_EPS: f64 = 1e-3;

#[derive(Parser, Debug)]
#[command(name = "rnnlab", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("RNNLAB_GIT_DESCRIBE"), ")"))]
#[command(about = "Recurrent-network training laboratory: pathological tasks, clipped SGD, gradient diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a JSON-lines dataset for one task.
    GenData(GenDataArgs),
    /// Train one network on one task and seed.
    Train(TrainArgs),
    /// Compare BPTT and regularizer gradients against finite differences.
    GradCheck(GradCheckArgs),
    /// Dynamical-systems and gradient-geometry diagnostics.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    task: TaskKind,
    #[arg(long = "T")]
    length: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pattern_len: Option<usize>,
    #[arg(long)]
    symbols: Option<usize>,
}

/// Flags that map one-to-one onto [`RunConfig`] keys.
#[derive(Args, Debug, Default)]
struct RunFlags {
    /// Config document: JSON object, `key=value` lines, or a previous run's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// sgd, sgd-c or sgd-cr.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long = "T")]
    length: Option<usize>,
    #[arg(long)]
    pattern_len: Option<usize>,
    #[arg(long)]
    symbols: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_halving: Option<bool>,
    /// none, norm or elementwise.
    #[arg(long)]
    clip: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// const or inv-t.
    #[arg(long)]
    alpha_schedule: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_updates: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// sum or mean.
    #[arg(long)]
    time_reduction: Option<String>,
}

impl RunFlags {
    fn overrides(&self) -> anyhow::Result<Map<String, Value>> {
        let mut m = Map::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
            m.insert(k.trim().to_string(), scalar_value(v.trim()));
        }
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("mode", self.mode.clone().map(Value::from));
        put("task", self.task.clone().map(Value::from));
        put("T", self.length.map(Value::from));
        put("pattern_len", self.pattern_len.map(Value::from));
        put("symbols", self.symbols.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("hidden", self.hidden.map(Value::from));
        put("activation", self.activation.clone().map(Value::from));
        put("init_std", self.init_std.map(Value::from));
        put("lr", self.lr.map(Value::from));
        put("lr_halving", self.lr_halving.map(Value::from));
        put("clip", self.clip.clone().map(Value::from));
        put("threshold", self.threshold.map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("alpha_schedule", self.alpha_schedule.clone().map(Value::from));
        put("batch", self.batch.map(Value::from));
        put("max_updates", self.max_updates.map(Value::from));
        put("eval_every", self.eval_every.map(Value::from));
        put("test_size", self.test_size.map(Value::from));
        put("time_reduction", self.time_reduction.clone().map(Value::from));
        Ok(m)
    }

    fn build(&self) -> anyhow::Result<RunConfig> {
        let doc = self.config.as_deref().map(read_document).transpose()?;
        Ok(RunConfig::build(doc.as_ref(), &self.overrides()?).map_err(Usage)?)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long = "T", default_value_t = 10)]
    length: usize,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Analyze {
    /// Spectral radius, spectral norm and the vanishing/exploding conditions.
    Conditions(ConditionsArgs),
    /// Attractor count of x ← w·σ(x) + b over a bias grid.
    Bifurcation(BifurcationArgs),
    /// Error and gradient norm of the single-unit sigmoid net over a (w, b) grid.
    Surface(SurfaceArgs),
    /// Exact versus single-eigenmode transport of an error vector.
    Direction(DirectionArgs),
    /// Gradient-norm statistics over unclipped updates.
    SuggestThreshold(SuggestArgs),
}

#[derive(Args, Debug)]
struct ConditionsArgs {
    /// Analyse a trained checkpoint instead of a fresh initialisation.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    hidden: usize,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    #[arg(long, default_value_t = rnnlab::model::INIT_STD)]
    init_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BifurcationArgs {
    #[arg(long, default_value_t = 5.0)]
    w: f64,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    b_min: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    b_max: f64,
    #[arg(long, default_value_t = 501)]
    points: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SurfaceArgs {
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    w_min: f64,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    w_max: f64,
    #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
    b_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    b_max: f64,
    #[arg(long, default_value_t = 701)]
    w_points: usize,
    #[arg(long, default_value_t = 501)]
    b_points: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DirectionArgs {
    /// Use W_rec of a checkpoint instead of a random matrix.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Entry scale of the random symmetric matrix, in units of 1/√n.
    #[arg(long, default_value_t = 1.2)]
    scale: f64,
    #[arg(long, default_value_t = 50)]
    l: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SuggestArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, default_value_t = 200)]
    updates: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Configuration problems; reported with exit code 1.
#[derive(Debug)]
struct Usage(config::ConfigErrors);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(argv) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(argv: Vec<String>) -> anyhow::Result<u8> {
    let cli = match Cli::try_parse_from(std::iter::once("rnnlab".to_string()).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return Ok(code);
        }
    };
    match cli.command {
        Command::GenData(a) => gen_data(&argv, a),
        Command::Train(a) => cmd_train(&argv, a),
        Command::GradCheck(a) => grad_check(&argv, a),
        Command::Analyze(sub) => match sub {
            Analyze::Conditions(a) => conditions(&argv, a),
            Analyze::Bifurcation(a) => bifurcation(&argv, a),
            Analyze::Surface(a) => surface(&argv, a),
            Analyze::Direction(a) => direction(&argv, a),
            Analyze::SuggestThreshold(a) => suggest(&argv, a),
        },
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(&manifest).with_context(|| format!("cannot read {}", manifest.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", manifest.display()))?;
            let args: Vec<String> = serde_json::from_value(v.get("argv").cloned().unwrap_or(Value::Null))
                .with_context(|| format!("{}: missing argv", manifest.display()))?;
            if args.first().map(String::as_str) == Some("replay") {
                bail!("refusing to replay a replay manifest");
            }
            run(args)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(to_json_pretty(v)? + "\n")
}

fn gen_data(argv: &[String], a: GenDataArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("gen-data", argv);
    let mut spec = TaskSpec::new(a.task, a.length, a.seed);
    if a.task == TaskKind::NoiselessMemorization {
        spec.pattern_len = Some(a.pattern_len.unwrap_or(5));
        spec.symbols = Some(a.symbols.unwrap_or(2));
    } else {
        spec.pattern_len = a.pattern_len;
        spec.symbols = a.symbols;
    }
    spec.validate()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let file = std::fs::File::create(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let mut w = BufWriter::new(file);
    for i in 0..a.n as u64 {
        writeln!(w, "{}", to_json_line(&spec.sample(i)?)?)?;
    }
    w.flush()?;
    let config = serde_json::to_value(&spec)?;
    rec.finish(&sidecar(&a.out), config, a.seed, vec![a.out.clone()], "ok", 0)?;
    println!("wrote {} samples to {}", a.n, a.out.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Metrics {
    status: TrainStatus,
    updates: usize,
    final_lr: f64,
    test_error: Option<f64>,
    test_errors: Option<usize>,
    test_size: usize,
    divergence: Option<String>,
}

fn cmd_train(argv: &[String], a: TrainArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("train", argv);
    let cfg = a.run.build()?;
    let spec = cfg.task_spec();
    let params = init_params_with_std::<f64>(
        cfg.hidden,
        spec.input_dim(),
        spec.output_dim(),
        cfg.activation,
        cfg.seed,
        cfg.init_std,
    )?;
    let eval = EvalSet::for_task(&spec, cfg.test_size, cfg.seed.wrapping_add(TEST_SEED_OFFSET))?;
    let outcome = train(params, &spec, Some(&eval), &cfg.train_config())?;

    let dir = &a.out_dir;
    let paths = [
        dir.join("checkpoint.json"),
        dir.join("train_log.csv"),
        dir.join("metrics.json"),
    ];
    write_text(&paths[0], &Checkpoint::from_params(&outcome.params, cfg.seed).to_json())?;
    write_text(&paths[1], &outcome.log.to_csv())?;
    let metrics = Metrics {
        status: outcome.status,
        updates: outcome.log.updates.len(),
        final_lr: outcome.log.updates.last().map_or(cfg.lr, |r| r.lr),
        test_error: outcome.last_eval.map(|e| e.error_rate),
        test_errors: outcome.last_eval.map(|e| e.errors),
        test_size: cfg.test_size,
        divergence: outcome.divergence.clone(),
    };
    write_text(&paths[2], &to_json(&metrics)?)?;
    let (status, code) = match outcome.status {
        TrainStatus::Succeeded => ("succeeded", EXIT_OK),
        TrainStatus::BudgetExhausted => ("budget_exhausted", EXIT_BUDGET),
        TrainStatus::Diverged => ("diverged", EXIT_DIVERGED),
    };
    rec.finish(&dir.join("manifest.json"), cfg.to_json(), cfg.seed, paths.to_vec(), status, code.into())?;
    match (&outcome.last_eval, &outcome.divergence) {
        (_, Some(d)) => println!("{status} after {} updates: {d}", metrics.updates),
        (Some(e), None) => println!(
            "{status} after {} updates: test error {} ({}/{})",
            metrics.updates, e.error_rate, e.errors, e.total
        ),
        (None, None) => println!("{status} after {} updates", metrics.updates),
    }
    Ok(code)
}

#[derive(Serialize)]
struct CheckRow {
    #[serde(flatten)]
    error: BlockError,
    pass: bool,
}

fn grad_check(argv: &[String], a: GradCheckArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("grad-check", argv);
    if a.n == 0 || a.length == 0 {
        bail!("grad-check needs n ≥ 1 and T ≥ 1");
    }
    let (m, o) = (3, 2);
    let params = init_params_with_std::<f64>(a.n, m, o, a.activation, a.seed, 0.9 / (a.n as f64).sqrt())?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x9e37_79b9_7f4a_7c15);
    let unit = Normal::new(0.0, 1.0)?;
    let mut draw = |k: usize| Vector::from_vec((0..k).map(|_| unit.sample(&mut rng)).collect());
    let x0 = draw(a.n);
    let inputs: Vec<Vector> = (0..a.length).map(|_| draw(m)).collect();
    let labels = (0..a.length).map(|t| Some(t % o)).collect();
    let spec = LossSpec::SoftmaxPerStep { labels };

    let traj = forward(&params, &x0, &inputs)?;
    let out = loss(&params, &traj, &spec)?;
    let report = bptt(&params, &traj, &ErrorSignal::from(out))?;
    let fd = |h: f64| fd_gradient(&params, &x0, &inputs, &spec, h).map(|g| g.to_flat());
    let mut numeric = report.grads.clone();
    numeric.set_flat(&richardson(&fd(FD_EPS)?, &fd(FD_EPS / 2.0)?))?;
    let mut rows: Vec<BlockError> = compare(&report.grads, &numeric)
        .into_iter()
        .map(|mut e| {
            e.block = format!("bptt {}", e.block);
            e
        })
        .collect();

    // Ω with trajectory and error signals frozen; only W_rec moves.
    let analytic = omega_grad_immediate(&params, &traj, &report.deltas)?;
    let fd = |h: f64| fd_omega_wrec(&params, &traj, &report.deltas, h).map(|m| m.as_slice().to_vec());
    let numeric = richardson(&fd(FD_EPS)?, &fd(FD_EPS / 2.0)?);
    rows.push(compare_slices("omega W_rec", analytic.grad.as_slice(), &numeric));

    if a.n == 1 && a.activation == Activation::Identity {
        rows.push(linear_closed_form(params.w_rec[(0, 0)], x0[0], a.length)?);
    }

    let rows: Vec<CheckRow> = rows
        .into_iter()
        .map(|error| CheckRow {
            pass: error.max_rel_error <= GRAD_CHECK_TOL,
            error,
        })
        .collect();
    println!("{:<22} {:>24} {:>24}  result", "block", "max_abs_error", "max_rel_error");
    for r in &rows {
        println!(
            "{:<22} {:>24} {:>24}  {}",
            r.error.block,
            fmt17(r.error.max_abs_error),
            fmt17(r.error.max_rel_error),
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let ok = rows.iter().all(|r| r.pass);
    let path = a.out_dir.join("grad_check.json");
    write_text(&path, &to_json(&rows)?)?;
    let config = json!({"n": a.n, "T": a.length, "activation": a.activation, "seed": a.seed, "tolerance": GRAD_CHECK_TOL});
    let (status, code) = if ok { ("pass", EXIT_OK) } else { ("fail", EXIT_BUDGET) };
    rec.finish(&a.out_dir.join("manifest.json"), config, a.seed, vec![path], status, code.into())?;
    Ok(code)
}

/// `∂x_T/∂w = T·x0·w^(T−1)` for the autonomous scalar linear unit.
fn linear_closed_form(w: f64, x0: f64, t: usize) -> anyhow::Result<BlockError> {
    let net = RnnParams::new(
        Matrix::from_vec(1, 1, vec![w])?,
        Matrix::zeros(1, 1),
        Vector::zeros(1),
        Matrix::identity(1),
        Vector::zeros(1),
        Activation::Identity,
    )?;
    let traj = forward(&net, &Vector::from_vec(vec![x0]), &vec![Vector::zeros(1); t])?;
    let mut d = vec![Vector::zeros(1); t];
    d[t - 1][0] = 1.0;
    let g = bptt(&net, &traj, &ErrorSignal::on_states(d))?.grads.w_rec[(0, 0)];
    let exact = t as f64 * x0 * w.powi(t as i32 - 1);
    Ok(compare_slices("closed form dx_T/dw", &[g], &[exact]))
}

fn load_checkpoint(path: &Path) -> anyhow::Result<RnnParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Checkpoint::from_json(&text)?.to_params()?)
}

fn conditions(argv: &[String], a: ConditionsArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("analyze conditions", argv);
    let params = match &a.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => init_params_with_std::<f64>(a.hidden, 1, 1, a.activation, a.seed, a.init_std)?,
    };
    let report = check_conditions(&params)?;
    let text = to_json(&report)?;
    print!("{text}");
    let path = a.out_dir.join("conditions.json");
    write_text(&path, &text)?;
    let config = json!({
        "checkpoint": a.checkpoint,
        "hidden": a.hidden,
        "activation": a.activation,
        "init_std": a.init_std,
        "seed": a.seed,
    });
    rec.finish(&a.out_dir.join("manifest.json"), config, a.seed, vec![path], "ok", 0)?;
    Ok(EXIT_OK)
}

fn bifurcation(argv: &[String], a: BifurcationArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("analyze bifurcation", argv);
    if a.points < 2 || a.b_min >= a.b_max {
        bail!("bifurcation needs b-min < b-max and at least 2 points");
    }
    let report = bifurcation_sweep(a.w, &linspace(a.b_min, a.b_max, a.points), &SweepConfig::default());
    let csv = a.out_dir.join("bifurcation.csv");
    let summary = a.out_dir.join("bifurcation.json");
    write_text(&csv, &report.to_csv())?;
    write_text(&summary, &to_json(&json!({"w": a.w, "boundaries": report.boundaries}))?)?;
    let counts: Vec<usize> = report.points.iter().map(|p| p.attractors.len()).collect();
    let mut pattern = counts.clone();
    pattern.dedup();
    println!("attractor counts along b: {pattern:?}");
    for b in &report.boundaries {
        println!("boundary b = {}", fmt17(*b));
    }
    let config = json!({"w": a.w, "b_min": a.b_min, "b_max": a.b_max, "points": a.points});
    rec.finish(&a.out_dir.join("manifest.json"), config, 0, vec![csv, summary], "ok", 0)?;
    Ok(EXIT_OK)
}

fn surface(argv: &[String], a: SurfaceArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("analyze surface", argv);
    if a.w_points < 2 || a.b_points < 2 {
        bail!("surface needs at least 2 grid points per axis");
    }
    let scan = error_surface_scan(&linspace(a.w_min, a.w_max, a.w_points), &linspace(a.b_min, a.b_max, a.b_points));
    let csv = a.out_dir.join("surface.csv");
    write_text(&csv, &scan.to_csv())?;
    let b_star = (rnnlab::analysis::SURFACE_TARGET / (1.0 - rnnlab::analysis::SURFACE_TARGET)).ln();
    let zero = surface_cell(0.0, b_star);
    println!("max/median gradient norm: {}", fmt17(scan.wall_ratio()));
    println!("E at (0, {}): {}", fmt17(b_star), fmt17(zero.e));
    let config = json!({
        "w_min": a.w_min, "w_max": a.w_max, "w_points": a.w_points,
        "b_min": a.b_min, "b_max": a.b_max, "b_points": a.b_points,
    });
    rec.finish(&a.out_dir.join("manifest.json"), config, 0, vec![csv], "ok", 0)?;
    Ok(EXIT_OK)
}

fn direction(argv: &[String], a: DirectionArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("analyze direction", argv);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let w = match &a.checkpoint {
        Some(p) => load_checkpoint(p)?.w_rec,
        None => {
            if a.n > MAX_DIRECTION_DIM {
                bail!("direction supports n ≤ {MAX_DIRECTION_DIM}, got n = {}", a.n);
            }
            // Symmetric, so every eigenvalue is real.
            let dist = Normal::new(0.0, a.scale / (a.n as f64).sqrt())?;
            let g = Matrix::from_vec(a.n, a.n, (0..a.n * a.n).map(|_| dist.sample(&mut rng)).collect())?;
            g.add(&g.transpose())?.scaled(std::f64::consts::FRAC_1_SQRT_2)
        }
    };
    let unit = Normal::new(0.0, 1.0)?;
    let e = Vector::from_vec((0..w.rows()).map(|_| unit.sample(&mut rng)).collect());
    let report = exploding_direction(&w, &e, a.l)?;
    let text = to_json(&report)?;
    let path = a.out_dir.join("direction.json");
    write_text(&path, &text)?;
    println!(
        "eigenvalue {} coefficient {} rel_error at l={}: {}",
        fmt17(report.eigenvalue),
        fmt17(report.coefficient),
        a.l,
        fmt17(report.rel_error)
    );
    let config = json!({"checkpoint": a.checkpoint, "n": a.n, "scale": a.scale, "l": a.l, "seed": a.seed});
    rec.finish(&a.out_dir.join("manifest.json"), config, a.seed, vec![path], "ok", 0)?;
    Ok(EXIT_OK)
}

fn suggest(argv: &[String], a: SuggestArgs) -> anyhow::Result<u8> {
    let rec = Recorder::start("analyze suggest-threshold", argv);
    let cfg = a.run.build()?;
    let spec = cfg.task_spec();
    let params = init_params_with_std::<f64>(
        cfg.hidden,
        spec.input_dim(),
        spec.output_dim(),
        cfg.activation,
        cfg.seed,
        cfg.init_std,
    )?;
    let stats = suggest_threshold(params, &spec, &cfg.train_config(), a.updates)?;
    println!("updates {} mean |g| {} max |g| {}", stats.updates, fmt17(stats.mean), fmt17(stats.max));
    let path = a.out_dir.join("threshold.json");
    write_text(&path, &to_json(&stats)?)?;
    let mut config = cfg.to_json();
    config["updates"] = a.updates.into();
    rec.finish(&a.out_dir.join("manifest.json"), config, cfg.seed, vec![path], "ok", 0)?;
    Ok(EXIT_OK)
}
