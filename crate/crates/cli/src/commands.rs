use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lcqp::datasets::{generate, GenConfig};
use lcqp::ipm::{ipm_solve, IpmConfig};
use lcqp::mpnn::{Mode, ModelConfig, MpnnModel};
use lcqp::pipelines::{
    infer_feasibility, infer_ipm_guided, summarize, train_feasibility, train_ipm_guided, FeasibilityInstance,
    GuidedInstance, SearchConfig, TrainConfig,
};
use lcqp::simproof::verify_sim as run_verify_sim;
use lcqp::{LcqpInstance, SolveReport};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{instance_files, manifest_path_for, read_dir_instances, read_instance, read_json, write_json};
use crate::manifest::{emit, ManifestBuilder};
use crate::{EvalArgs, GenArgs, InferArgs, ModeArg, SearchArgs, SolveArgs, TrainArgs, VerifySimArgs};

fn echo<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

/// Prints JSON to stdout, or writes it to `out`.
fn deliver<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

/// Explicit `--manifest`, else next to `out`, else stderr.
fn manifest_target(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| out.map(manifest_path_for))
}

fn attach_solution(inst: &mut LcqpInstance) -> Result<()> {
    let out = ipm_solve(inst, &IpmConfig::default())?;
    inst.set_x_star(out.report.x)?;
    inst.set_trajectory(out.trajectory)?;
    Ok(())
}

pub fn gen(a: &GenArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("gen", echo(a), Some(a.seed));
    let base = GenConfig {
        family: a.family,
        n: a.n,
        m: a.m,
        density_a: a.density_a,
        density_q: a.density_q,
        svm_lambda: a.svm_lambda,
        seed: a.seed,
    };
    base.validate()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ext = if a.gzip { "json.gz" } else { "json" };
    let written: Vec<(PathBuf, u64)> = (0..a.count)
        .into_par_iter()
        .map(|i| -> Result<(PathBuf, u64)> {
            let cfg = base.with_index(i as u64);
            let mut inst = generate(&cfg).with_context(|| format!("instance {i} (seed {})", cfg.seed))?;
            if a.with_solution {
                attach_solution(&mut inst).with_context(|| format!("solving instance {i}"))?;
            }
            let path = a.out.join(format!("instance_{i:05}.{ext}"));
            write_json(&path, &inst)?;
            Ok((path, cfg.seed))
        })
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = written.iter().map(|w| w.1).collect();
    let outputs = written.into_iter().map(|w| w.0).collect();
    emit(&mb.finish(outputs, json!({ "seeds": seeds })), Some(&a.out.join("manifest.json")))?;
    log::info!("wrote {} instances to {}", a.count, a.out.display());
    Ok(true)
}

pub fn solve(a: &SolveArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("solve", echo(a), None);
    let mut inst = read_instance(&a.instance)?;
    let cfg = IpmConfig {
        sigma: a.sigma,
        max_outer: a.max_outer,
        tol_kkt: a.tol,
        inner: a.inner,
        cg_rule: a.cg_rule,
        cg_fallback: !a.no_cg_fallback,
        line_search: a.line_search,
        ..IpmConfig::default()
    };
    cfg.validate()?;
    let out = ipm_solve(&inst, &cfg)?;
    let mut outputs = Vec::new();
    if a.emit_trajectory {
        inst.set_x_star(out.report.x.clone())?;
        inst.set_trajectory(out.trajectory.clone())?;
        write_json(&a.instance, &inst)?;
        outputs.push(a.instance.clone());
    }
    deliver(&out.report, a.out.as_deref())?;
    outputs.extend(a.out.clone());
    let extra = json!({ "residuals": out.residuals, "iterations": out.report.iterations });
    emit(&mb.finish(outputs, extra), manifest_target(a.manifest.as_deref(), a.out.as_deref()).as_deref())?;
    Ok(true)
}

fn search_config(s: &SearchArgs) -> Result<SearchConfig> {
    let cfg = SearchConfig {
        t_train: s.t_train,
        t_infer: s.t_infer,
        tau0: s.tau0,
        eps_bar: s.eps_bar,
        delta: s.delta,
        x0_value: s.x0_value,
        loss_on_raw: s.loss_on_raw,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn model_mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Feas => Mode::FeasibilityBipartite,
        ModeArg::Ipm => Mode::IpmGuidedTripartite,
    }
}

fn mode_arg(m: Mode) -> ModeArg {
    match m {
        Mode::FeasibilityBipartite => ModeArg::Feas,
        Mode::IpmGuidedTripartite => ModeArg::Ipm,
    }
}

fn prepare_feas(insts: Vec<LcqpInstance>, model: &MpnnModel, require_optimum: bool) -> Result<Vec<FeasibilityInstance>> {
    insts.into_par_iter().map(|i| Ok(FeasibilityInstance::prepare(i, model, require_optimum)?)).collect()
}

fn prepare_guided(insts: Vec<LcqpInstance>, model: &MpnnModel, t: usize) -> Result<Vec<GuidedInstance>> {
    insts.into_par_iter().map(|i| Ok(GuidedInstance::prepare(i, model, t)?)).collect()
}

fn stem_sibling(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("model");
    let stem = name.strip_suffix(".json").unwrap_or(name);
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn train(a: &TrainArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("train", echo(a), Some(a.seed));
    let search = search_config(&a.search)?;
    let config = ModelConfig { mode: model_mode(a.mode), sync_mode: a.sync_mode, aggregation: a.aggregation, layers: a.layers, hidden: a.hidden };
    let mut model = MpnnModel::new(config, a.seed);
    let mut opt = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed.wrapping_add(1),
        val_every: a.val_every,
        keep_best: true,
        clip_norm: a.clip_norm,
        ..TrainConfig::default()
    };
    opt.adam.lr = a.lr;
    let train_set = read_dir_instances(&a.data)?;
    let val_set = match &a.val {
        Some(dir) => read_dir_instances(dir)?,
        None => Vec::new(),
    };
    let log = match a.mode {
        ModeArg::Feas => {
            let tr = prepare_feas(train_set, &model, true)?;
            let va = prepare_feas(val_set, &model, true)?;
            train_feasibility(&mut model, &tr, &va, &search, &opt)?
        }
        ModeArg::Ipm => {
            let tr = prepare_guided(train_set, &model, search.t_train)?;
            let va = prepare_guided(val_set, &model, search.t_train)?;
            train_ipm_guided(&mut model, &tr, &va, &search, &opt)?
        }
    };
    if let Some(dir) = a.model_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json(&a.model_out, &model)?;
    let log_path = stem_sibling(&a.model_out, "log.json");
    write_json(&log_path, &log)?;
    let extra = json!({ "best_epoch": log.best_epoch, "final_train_loss": log.epochs.last().map(|e| e.train_loss) });
    emit(&mb.finish(vec![a.model_out.clone(), log_path], extra), Some(&stem_sibling(&a.model_out, "manifest.json")))?;
    Ok(true)
}

fn load_model(path: &Path, expected: Option<ModeArg>) -> Result<MpnnModel> {
    let model: MpnnModel = read_json(path)?;
    if let Some(m) = expected {
        if mode_arg(model.mode()) != m {
            bail!("model in {} was trained for mode {:?}", path.display(), mode_arg(model.mode()));
        }
    }
    Ok(model)
}

/// Result of running one model on one instance.
#[derive(Debug, Serialize)]
struct InferOutput {
    mode: ModeArg,
    /// Absent when IPM-guided inference found no iterate under the threshold.
    best: Option<SolveReport>,
}

fn run_one(model: &MpnnModel, inst: LcqpInstance, search: &SearchConfig) -> Result<Option<SolveReport>> {
    Ok(match model.mode() {
        Mode::FeasibilityBipartite => Some(infer_feasibility(model, &FeasibilityInstance::prepare(inst, model, false)?, search)?),
        Mode::IpmGuidedTripartite => infer_ipm_guided(model, &GuidedInstance::prepare(inst, model, 0)?, search)?.best,
    })
}

pub fn infer(a: &InferArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("infer", echo(a), None);
    let search = search_config(&a.search)?;
    let model = load_model(&a.model, a.mode)?;
    let inst = read_instance(&a.instance)?;
    let best = run_one(&model, inst, &search)?;
    if best.is_none() {
        log::warn!("no iterate met the residual threshold {}", search.delta);
    }
    deliver(&InferOutput { mode: mode_arg(model.mode()), best }, a.out.as_deref())?;
    emit(&mb.finish(a.out.iter().cloned().collect(), Value::Null), manifest_target(a.manifest.as_deref(), a.out.as_deref()).as_deref())?;
    Ok(true)
}

#[derive(Serialize)]
struct CsvRow {
    index: usize,
    file: String,
    gap_pct: Option<f64>,
    violation: Option<f64>,
    objective: Option<f64>,
    max_abs_violation: Option<f64>,
}

pub fn eval(a: &EvalArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("eval", echo(a), None);
    let search = search_config(&a.search)?;
    let model = load_model(&a.model, None)?;
    let files = instance_files(&a.data)?;
    let insts: Vec<LcqpInstance> = files.iter().map(|p| read_instance(p)).collect::<Result<_>>()?;
    if insts.iter().any(|i| i.x_star.is_none()) {
        log::warn!("some instances carry no optimum; their gaps are omitted");
    }
    let reports: Vec<Option<SolveReport>> = insts.par_iter().map(|i| run_one(&model, i.clone(), &search)).collect::<Result<_>>()?;
    let refs: Vec<&LcqpInstance> = insts.iter().collect();
    let metrics = summarize(&refs, &reports)?;
    deliver(&metrics, a.out.as_deref())?;
    let mut outputs: Vec<PathBuf> = a.out.iter().cloned().collect();
    if let Some(csv_path) = &a.csv {
        let mut w = csv::Writer::from_path(csv_path)?;
        for (row, file) in metrics.per_instance.iter().zip(&files) {
            w.serialize(CsvRow {
                index: row.index,
                file: file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
                gap_pct: row.gap_pct,
                violation: row.violation,
                objective: row.objective,
                max_abs_violation: row.max_abs_violation,
            })?;
        }
        w.flush()?;
        outputs.push(csv_path.clone());
    }
    let extra = json!({ "mean_gap_pct": metrics.mean_gap_pct, "candidate_rate": metrics.candidate_rate });
    emit(&mb.finish(outputs, extra), manifest_target(a.manifest.as_deref(), a.out.as_deref()).as_deref())?;
    Ok(true)
}

pub fn verify_sim(a: &VerifySimArgs) -> Result<bool> {
    let mb = ManifestBuilder::start("verify-sim", echo(a), Some(a.seed));
    let report = run_verify_sim(a.n, a.m, a.trials, a.outer, a.seed, a.rule, a.eps, a.sigma)?;
    for (key, dev) in &report.deviations {
        println!("{key:<24} {dev:.3e}");
    }
    let pass = report.max_deviation <= a.tol && report.step_counts_ok;
    println!(
        "trials {}  rule {}  cg iterations {}  nonfinite {}  step counts {}  max deviation {:.3e}  {}",
        report.trials,
        report.rule,
        report.cg_iterations,
        report.nonfinite_values,
        if report.step_counts_ok { "ok" } else { "WRONG" },
        report.max_deviation,
        if pass { "PASS" } else { "FAIL" }
    );
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    let extra = json!({ "max_deviation": report.max_deviation, "pass": pass });
    emit(&mb.finish(a.out.iter().cloned().collect(), extra), manifest_target(a.manifest.as_deref(), a.out.as_deref()).as_deref())?;
    Ok(pass)
}
