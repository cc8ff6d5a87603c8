//! The `masksel` command line.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 usage or invalid
//! generator configuration, 3 instance too large for the oracle, 4 budget
//! exceeded. Each command prints one JSON report on stdout; diagnostics go to
//! stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::Error;
use crate::eval::{evaluate, DEFAULT_IOU_THRESHOLD};
use crate::io::{read_ground_truth, read_scene, read_selection, write_selection, SelectionDocument};
use crate::losses::{LossWeights, DEFAULT_EPSILON};
use crate::optimizer::{oracle, select, Ablation, EvalCounters, SelectConfig, DEFAULT_K, DEFAULT_MAX_CANDIDATES};
use crate::synth::{emit, generate, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TOO_LARGE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Ceiling on `li_evaluations + pair_evaluations` checked by `bench`.
pub const BENCH_EVALUATION_LIMIT: u64 = 100_000_000;

#[derive(Parser, Debug)]
#[command(name = "masksel", version, about = "Select object masks in videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene directory.
    Gen(GenArgs),
    /// Two-stage selection.
    Select(SelectArgs),
    /// Exact selection by exhaustive search (small scenes only).
    Oracle(OracleArgs),
    /// Score a selection against ground truth.
    Eval(EvalArgs),
    /// Run selection on a generated scene and report evaluation counts.
    Bench(BenchArgs),
}

fn parse_pair(s: &str) -> Result<(f32, f32), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `u,v`, got `{s}`"))?;
    let parse = |x: &str| x.trim().parse::<f32>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 2)]
    objects: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    #[arg(long, default_value_t = 3)]
    distractors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    bg_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    flow_noise: f64,
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, default_value = "0,0")]
    camera_flow: (f32, f32),
}

#[derive(Args, Debug)]
struct WeightArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda_i: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_f: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda_p: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    overlap_tolerance: usize,
}

impl WeightArgs {
    fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_i: self.lambda_i,
            lambda_f: self.lambda_f,
            lambda_p: self.lambda_p,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[command(flatten)]
    weights: WeightArgs,
    #[arg(long)]
    no_flow: bool,
    #[arg(long)]
    no_reg: bool,
    #[arg(long)]
    no_overlap_constraint: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_CANDIDATES)]
    max_candidates: usize,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 180)]
    t: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
}

/// A command failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InstanceTooLarge { .. } => EXIT_TOO_LARGE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<serde_json::Value, Failure>;

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let config = SynthConfig {
        width: a.width,
        height: a.height,
        num_frames: a.frames,
        objects: a.objects,
        camera_flow: a.camera_flow,
        distractors_per_frame: a.distractors,
        bg_noise_sigma: a.bg_noise,
        flow_noise_sigma: a.flow_noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let scene = generate(&config).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    let manifest = emit(&scene, &a.out)?;
    Ok(json!({ "manifest": manifest }))
}

fn report(doc: &SelectionDocument) -> serde_json::Value {
    json!({
        "method": doc.method,
        "objective": doc.objective,
        "counters": doc.counters,
    })
}

fn cmd_select(a: &SelectArgs) -> CmdResult {
    let scene = read_scene(&a.scene)?;
    let config = SelectConfig {
        weights: a.weights.weights(),
        k: a.k,
        overlap_tolerance: a.weights.overlap_tolerance,
        ablation: Ablation {
            flow: !a.no_flow,
            regularization: !a.no_reg,
            overlap_constraint: !a.no_overlap_constraint,
        },
        max_candidates: a.max_candidates,
        threads: a.threads,
    };
    let result = select(&scene, &config)?;
    let doc = SelectionDocument::from_result(&result, &scene, "select");
    write_selection(&a.out, &doc)?;
    Ok(report(&doc))
}

fn cmd_oracle(a: &OracleArgs) -> CmdResult {
    let scene = read_scene(&a.scene)?;
    let result = oracle(&scene, &a.weights.weights(), a.weights.overlap_tolerance)?;
    let doc = SelectionDocument::from_result(&result, &scene, "oracle");
    write_selection(&a.out, &doc)?;
    Ok(report(&doc))
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(Failure {
            code: EXIT_USAGE,
            message: format!("--iou must lie in [0, 1], got {}", a.iou),
        });
    }
    let scene = read_scene(&a.scene)?;
    let pred = read_selection(&a.pred)?;
    let gt = read_ground_truth(&a.gt)?;
    let report = evaluate(&pred, &scene, &gt, a.iou)?;
    Ok(serde_json::to_value(report).expect("report serializes"))
}

/// Scene used by `bench`: three slowly moving objects and `n - 3`
/// distractors per frame on a 128x96 grid.
pub fn bench_config(n: usize, t: usize, seed: u64) -> SynthConfig {
    let objects = n.min(3);
    SynthConfig {
        width: 128,
        height: 96,
        num_frames: t.max(1),
        objects,
        half_extent: (4.0, 8.0),
        velocity_u: (-0.15, 0.15),
        velocity_v: (-0.15, 0.15),
        integer_velocity: false,
        distractors_per_frame: n - objects,
        bg_noise_sigma: 0.1,
        flow_noise_sigma: 0.3,
        seed,
        ..SynthConfig::default()
    }
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let synth = generate(&bench_config(a.n, a.t, a.seed)).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    let scene = &synth.scene;
    let config = SelectConfig {
        k: a.k,
        threads: a.threads,
        ..SelectConfig::default()
    };
    let start = Instant::now();
    let result = select(scene, &config)?;
    let seconds = start.elapsed().as_secs_f64();
    let c = result.counters;
    let n = scene.max_candidates();
    let t = scene.num_frames();
    let out = json!({
        "n": n,
        "t": t,
        "k": a.k,
        "counters": c,
        "total_evaluations": c.total_evaluations(),
        "evaluation_limit": BENCH_EVALUATION_LIMIT,
        "li_budget": EvalCounters::li_budget(a.k, n, t),
        "pair_budget": EvalCounters::pair_budget(a.k, t),
        "objective": result.objective,
        "wall_seconds": seconds,
    });
    if c.total_evaluations() > BENCH_EVALUATION_LIMIT {
        return Err(Failure {
            code: EXIT_BUDGET,
            message: format!(
                "{} evaluations exceed the limit of {BENCH_EVALUATION_LIMIT}: {out}",
                c.total_evaluations()
            ),
        });
    }
    Ok(out)
}

/// Runs the command line and returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Select(a) => cmd_select(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(value) => {
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&value).expect("json"));
            EXIT_OK
        }
        Err(f) => {
            let _ = writeln!(stderr, "masksel: {}", f.message);
            f.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}
