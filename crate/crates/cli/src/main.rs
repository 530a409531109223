//! `lcqp`: generate instances, solve them, train and evaluate the learned
//! searches, and check the message-passing simulation of the solver.
//!
//! Exit codes: 0 success, 1 validation or tolerance failure, 2 usage error.

mod commands;
mod config;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcqp::datasets::Family;
use lcqp::ipm::{CgRule, InnerSolver, LineSearch};
use lcqp::mpnn::{Aggregation, SyncMode};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Parses a snake_case enum value through its serde name.
fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "lcqp", version, about = "Linearly constrained QP toolkit", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate seeded instances into a directory.
    Gen(GenArgs),
    /// Solve one instance with the interior-point method.
    Solve(SolveArgs),
    /// Train a model on a directory of solved instances.
    Train(TrainArgs),
    /// Run a trained model on one instance.
    Infer(InferArgs),
    /// Evaluate a trained model on a directory of instances.
    Eval(EvalArgs),
    /// Compare the message-passing simulation against the solver.
    VerifySim(VerifySimArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value = "generic", value_parser = serde_enum::<Family>)]
    pub family: Family,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.5)]
    pub density_a: f64,
    #[arg(long, default_value_t = 0.3)]
    pub density_q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub svm_lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also store the solver's optimum and iterate trajectory.
    #[arg(long)]
    pub with_solution: bool,
    #[arg(long)]
    pub gzip: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "direct", value_parser = serde_enum::<InnerSolver>)]
    pub inner: InnerSolver,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_outer: usize,
    /// Step rule of the CG recurrences: as_written or textbook.
    #[arg(long, default_value = "as_written", value_parser = serde_enum::<CgRule>)]
    pub cg_rule: CgRule,
    /// Fail instead of falling back to the direct solve on CG breakdown.
    #[arg(long)]
    pub no_cg_fallback: bool,
    #[arg(long, default_value = "exact", value_parser = serde_enum::<LineSearch>)]
    pub line_search: LineSearch,
    /// Write the optimum and iterate trajectory back into the instance file.
    #[arg(long)]
    pub emit_trajectory: bool,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest file; defaults to next to `--out`, else stderr.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    /// Feasibility-preserving search (bipartite graph).
    Feas,
    /// IPM-guided search (graph with a global node).
    Ipm,
}

#[derive(Args, Debug, Serialize)]
pub struct SearchArgs {
    /// Steps per rollout during training.
    #[arg(long = "T", default_value_t = 8)]
    pub t_train: usize,
    /// Steps at inference.
    #[arg(long, default_value_t = 32)]
    pub t_infer: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub tau0: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_bar: f64,
    /// IPM-guided acceptance threshold on `max |Ax − b|`.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0_value: f64,
    /// Feasibility loss on the raw prediction instead of the corrected one.
    #[arg(long)]
    pub loss_on_raw: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub data: PathBuf,
    /// Validation instances; the best validated parameters are kept.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 1)]
    pub val_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value = "async", value_parser = serde_enum::<SyncMode>)]
    pub sync_mode: SyncMode,
    #[arg(long, default_value = "sum", value_parser = serde_enum::<Aggregation>)]
    pub aggregation: Aggregation,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct InferArgs {
    /// Checked against the model file when given.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Metrics JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-instance metrics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifySimArgs {
    /// Largest number of variables drawn.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Largest number of constraints drawn.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer iterations simulated per trial.
    #[arg(long, default_value_t = 3)]
    pub outer: usize,
    #[arg(long, default_value = "as_written", value_parser = serde_enum::<CgRule>)]
    pub rule: CgRule,
    #[arg(long, default_value_t = lcqp::ipm::DEFAULT_EPS_LINE)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn init_threads() {
    let Some(n) = std::env::var("LCQP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) else { return };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("LCQP_THREADS ignored: {e}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let argv = match config::expand_argv(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    init_threads();
    let result = match cli.cmd {
        Command::Gen(a) => commands::gen(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Train(a) => commands::train(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::VerifySim(a) => commands::verify_sim(&a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
