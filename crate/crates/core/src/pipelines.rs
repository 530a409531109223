//! Training and inference loops.
//!
//! *Feasibility mode* starts from a strictly feasible point and repeatedly
//! moves along the null-space projection of a predicted displacement, so
//! every iterate satisfies `Ax = b` and `x ≥ 0`. *IPM-guided mode* learns to
//! imitate successive interior-point iterates and picks the best iterate whose
//! constraint residual is below a threshold.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, LcqpError, Result};
use crate::graph::{encode, ProblemGraph};
use crate::mpnn::{adam_step, loss_mse, AdamConfig, AdamState, MpnnModel, Tape, Topology};
use crate::nullspace::{compute_nullspace, feasible_initial_point, NullSpaceProjector};
use crate::problem::{dot, objective, relative_objective_gap, LcqpInstance, SolveReport};
use crate::rng::SeededRng;

/// Entries in `[−DUST, 0)` after an update are set to zero.
pub const DUST: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub t_train: usize,
    pub t_infer: usize,
    /// Initial scale of the barrier correction `τ/(x + ε)`; halved each step.
    pub tau0: f64,
    pub eps_bar: f64,
    /// Residual threshold `max_i |A_i x − b_i| < δ` for IPM-guided selection.
    pub delta: f64,
    /// IPM-guided inference starts from `x0_value · 1`.
    pub x0_value: f64,
    /// Compute the feasibility loss on the raw prediction instead of the
    /// barrier-corrected one.
    pub loss_on_raw: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { t_train: 8, t_infer: 32, tau0: 1e-2, eps_bar: 1e-8, delta: 1e-3, x0_value: 1.0, loss_on_raw: false }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_train == 0 || !(self.tau0 >= 0.0) || !(self.eps_bar > 0.0) || !(self.delta > 0.0) || !(self.x0_value >= 0.0) {
            return Err(LcqpError::Invalid("search config: need T ≥ 1, τ₀ ≥ 0, ε > 0, δ > 0, x₀ ≥ 0".into()));
        }
        Ok(())
    }
}

/// `min{1, min_{d̃_i < 0} x_i / (−d̃_i)}`, clipped to `[0, 1]`.
pub fn step_length_positivity(x: &[f64], d_tilde: &[f64]) -> f64 {
    let mut alpha = 1.0_f64;
    for (xi, di) in x.iter().zip(d_tilde) {
        if *di < 0.0 {
            alpha = alpha.min(xi / -di);
        }
    }
    alpha.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasStep {
    /// Prediction plus barrier correction.
    pub d: Vec<f64>,
    pub d_tilde: Vec<f64>,
    pub alpha: f64,
    pub x_next: Vec<f64>,
}

/// One projected step. Halves `tau` afterwards.
pub fn feasibility_update(x_prev: &[f64], d_pred: &[f64], proj: &NullSpaceProjector, tau: &mut f64, eps: f64) -> Result<FeasStep> {
    check_len("prediction", d_pred.len(), x_prev.len())?;
    let d: Vec<f64> = x_prev.iter().zip(d_pred).map(|(x, p)| p + *tau / (x + eps)).collect();
    *tau /= 2.0;
    let d_tilde = proj.project(&d)?;
    // A coordinate whose full step ends in the dust band is clamped below
    // instead of shortening the step for everyone.
    let binding: Vec<f64> = x_prev.iter().zip(&d_tilde).map(|(x, dt)| if x + dt >= -DUST { 0.0 } else { *dt }).collect();
    let alpha = step_length_positivity(x_prev, &binding);
    let x_next = x_prev
        .iter()
        .zip(&d_tilde)
        .map(|(x, dt)| {
            let v = x + alpha * dt;
            if (-DUST..0.0).contains(&v) {
                0.0
            } else {
                v
            }
        })
        .collect();
    Ok(FeasStep { d, d_tilde, alpha, x_next })
}

/// Largest step `α` along `Π(1/x)` for which the second-order model of
/// `−Σ log x` still decreases: `gᵀΠg / ((Πg)ᵀ diag(1/x²) Πg)` with
/// `g = 1/x`. Returns `+∞` when `Πg = 0`.
pub fn barrier_step_upper_bound(x: &[f64], proj: &NullSpaceProjector) -> Result<f64> {
    if x.iter().any(|&v| v <= 0.0) {
        return Err(LcqpError::Invalid("barrier bound needs x > 0".into()));
    }
    let g: Vec<f64> = x.iter().map(|v| 1.0 / v).collect();
    let pg = proj.project(&g)?;
    if pg.iter().all(|&v| v == 0.0) {
        return Ok(f64::INFINITY);
    }
    let num = dot(&g, &pg);
    let den: f64 = pg.iter().zip(x).map(|(p, xi)| p * p / (xi * xi)).sum();
    Ok(num / den)
}

/// `max_i |A_i x − b_i|`.
pub fn max_violation(inst: &LcqpInstance, x: &[f64]) -> Result<f64> {
    crate::problem::primal_residual(inst, x)
}

/// An instance with everything the feasibility loops need precomputed.
#[derive(Debug, Clone)]
pub struct FeasibilityInstance {
    pub inst: LcqpInstance,
    pub graph: ProblemGraph,
    pub topo: Topology,
    pub proj: NullSpaceProjector,
    pub x0: Vec<f64>,
}

impl FeasibilityInstance {
    /// Fails when the instance has no stored optimum (training needs it) and
    /// `require_optimum` is set.
    pub fn prepare(inst: LcqpInstance, model: &MpnnModel, require_optimum: bool) -> Result<Self> {
        if require_optimum && inst.x_star.is_none() {
            return Err(LcqpError::Missing("instance has no x_star".into()));
        }
        let proj = compute_nullspace(&inst.a)?;
        let x0 = feasible_initial_point(&inst)?;
        let graph = encode(&inst, model.mode().has_global());
        let topo = Topology::new(&graph, model.config.aggregation);
        Ok(Self { inst, graph, topo, proj, x0 })
    }

    fn x_star(&self) -> Result<&[f64]> {
        self.inst.x_star.as_deref().ok_or_else(|| LcqpError::Missing("instance has no x_star".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasRecord {
    pub x_prev: Vec<f64>,
    pub pred: Vec<f64>,
    pub step: FeasStep,
    /// `‖d* − d‖²` with `d* = x* − x_prev`; zero when no optimum is known.
    pub loss: f64,
}

/// Runs `t` feasibility steps with an arbitrary predictor.
pub fn feasibility_rollout(
    prep: &FeasibilityInstance,
    t: usize,
    search: &SearchConfig,
    mut predict: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<FeasRecord>> {
    let x_star = prep.inst.x_star.as_deref();
    let mut x = prep.x0.clone();
    let mut tau = search.tau0;
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        let pred = predict(&x)?;
        let step = feasibility_update(&x, &pred, &prep.proj, &mut tau, search.eps_bar)?;
        let loss = match x_star {
            Some(xs) => {
                let target: Vec<f64> = xs.iter().zip(&x).map(|(a, b)| a - b).collect();
                loss_mse(if search.loss_on_raw { &pred } else { &step.d }, &target)?
            }
            None => 0.0,
        };
        let next = step.x_next.clone();
        out.push(FeasRecord { x_prev: std::mem::replace(&mut x, next), pred, step, loss });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Best iterate, or `None` when no iterate qualified.
    pub best: Option<SolveReport>,
    /// `x(0), …, x(T)`.
    pub iterates: Vec<Vec<f64>>,
}

/// Best-objective iterate of a feasibility rollout, including `x(0)`.
pub fn infer_feasibility_with(
    prep: &FeasibilityInstance,
    search: &SearchConfig,
    predict: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Inference> {
    let start = Instant::now();
    let records = feasibility_rollout(prep, search.t_infer, search, predict)?;
    let mut iterates = vec![prep.x0.clone()];
    iterates.extend(records.into_iter().map(|r| r.step.x_next));
    let mut best = 0;
    let mut best_obj = objective(&prep.inst, &iterates[0])?;
    for (k, x) in iterates.iter().enumerate().skip(1) {
        let o = objective(&prep.inst, x)?;
        if o < best_obj {
            best = k;
            best_obj = o;
        }
    }
    let report = SolveReport::evaluate(&prep.inst, iterates[best].clone(), search.t_infer, start.elapsed().as_secs_f64())?;
    Ok(Inference { best: Some(report), iterates })
}

pub fn infer_feasibility(model: &MpnnModel, prep: &FeasibilityInstance, search: &SearchConfig) -> Result<SolveReport> {
    let inf = infer_feasibility_with(prep, search, |x| Ok(model.forward(&prep.topo, &prep.graph, x)?.0))?;
    Ok(inf.best.expect("feasibility inference always has a candidate"))
}

/// An instance with a stored interior-point trajectory.
#[derive(Debug, Clone)]
pub struct GuidedInstance {
    pub inst: LcqpInstance,
    pub graph: ProblemGraph,
    pub topo: Topology,
}

impl GuidedInstance {
    /// `t_required`: minimum supervised steps (the trajectory must hold
    /// `x(0), …, x(t_required)`); 0 skips the check.
    pub fn prepare(inst: LcqpInstance, model: &MpnnModel, t_required: usize) -> Result<Self> {
        if t_required > 0 {
            let len = inst.trajectory.as_ref().map_or(0, |t| t.len());
            if len < t_required + 1 {
                return Err(LcqpError::Missing(format!(
                    "trajectory holds {} supervised steps, need {t_required}; regenerate with more solver iterations",
                    len.saturating_sub(1)
                )));
            }
        }
        let graph = encode(&inst, model.mode().has_global());
        let topo = Topology::new(&graph, model.config.aggregation);
        Ok(Self { inst, graph, topo })
    }

    fn trajectory(&self) -> &[Vec<f64>] {
        self.inst.trajectory.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidedRecord {
    pub x_prev: Vec<f64>,
    pub pred: Vec<f64>,
    /// `‖x*(t) − x(t)‖²`.
    pub loss: f64,
}

/// `x(t) = predict(x(t−1))` from `x(0)` = the trajectory's first point,
/// supervised by `x*(t)` for `t = 1..=t_steps`.
pub fn guided_rollout(
    prep: &GuidedInstance,
    t_steps: usize,
    mut predict: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<GuidedRecord>> {
    let traj = prep.trajectory();
    if traj.len() < t_steps + 1 {
        return Err(LcqpError::Missing("trajectory shorter than the number of steps".into()));
    }
    let mut x = traj[0].clone();
    let mut out = Vec::with_capacity(t_steps);
    for target in &traj[1..=t_steps] {
        let pred = predict(&x)?;
        let loss = loss_mse(&pred, target)?;
        out.push(GuidedRecord { x_prev: std::mem::replace(&mut x, pred.clone()), pred, loss });
    }
    Ok(out)
}

/// Iterates from `x0_value · 1` and keeps the best-objective iterate with
/// `max_i |A_i x − b_i| < δ`.
pub fn infer_ipm_guided_with(
    inst: &LcqpInstance,
    search: &SearchConfig,
    mut predict: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Inference> {
    let start = Instant::now();
    let mut iterates = vec![vec![search.x0_value; inst.n]];
    for _ in 0..search.t_infer {
        let next = predict(iterates.last().unwrap())?;
        iterates.push(next);
    }
    let mut best: Option<(f64, usize)> = None;
    for (k, x) in iterates.iter().enumerate() {
        if !(max_violation(inst, x)? < search.delta) {
            continue;
        }
        let o = objective(inst, x)?;
        if best.is_none_or(|(bo, _)| o < bo) {
            best = Some((o, k));
        }
    }
    let best = match best {
        Some((_, k)) => Some(SolveReport::evaluate(inst, iterates[k].clone(), search.t_infer, start.elapsed().as_secs_f64())?),
        None => None,
    };
    Ok(Inference { best, iterates })
}

pub fn infer_ipm_guided(model: &MpnnModel, prep: &GuidedInstance, search: &SearchConfig) -> Result<Inference> {
    infer_ipm_guided_with(&prep.inst, search, |x| Ok(model.forward(&prep.topo, &prep.graph, x)?.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds minibatch shuffling.
    pub seed: u64,
    /// Validate every this many epochs (and after the last one).
    pub val_every: usize,
    /// Return the parameters with the best validation gap rather than the
    /// last ones.
    pub keep_best: bool,
    /// Rescale the minibatch gradient to at most this L2 norm (0 disables).
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 8, adam: AdamConfig::default(), seed: 0, val_every: 1, keep_best: true, clip_norm: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_gap_pct: Option<f64>,
    /// IPM-guided only: share of validation instances with a candidate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_candidate_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

fn clip(grad: &mut MpnnModel, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.tensors().iter().map(|t| t.norm_squared()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grad.tensors_mut() {
            *t *= s;
        }
    }
}

/// Validation pass returning `(loss, gap, candidate rate)`.
type Validator<'a> = dyn FnMut(&MpnnModel) -> Result<(f64, f64, Option<f64>)> + 'a;

/// Shared epoch loop. `batch_grad` accumulates the gradient of one instance
/// (already scaled by `1/B`) and returns its loss; `validate` returns
/// `(val_loss, val_gap, candidate_rate)`.
fn train_loop(
    model: &mut MpnnModel,
    n_train: usize,
    opt: &TrainConfig,
    mut batch_grad: impl FnMut(&MpnnModel, usize, f64, &mut MpnnModel) -> Result<f64>,
    mut validate: Option<&mut Validator>,
) -> Result<TrainLog> {
    if n_train == 0 {
        return Err(LcqpError::Missing("no training instances".into()));
    }
    let mut rng = SeededRng::new(opt.seed);
    let mut state = AdamState::new(model);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, MpnnModel)> = None;
    let mut order: Vec<usize> = (0..n_train).collect();
    let bs = opt.batch_size.max(1);
    for epoch in 1..=opt.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(bs) {
            let mut grad = model.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += batch_grad(model, i, scale, &mut grad)?;
            }
            clip(&mut grad, opt.clip_norm);
            adam_step(model, &grad, &mut state, &opt.adam);
        }
        let mut entry = EpochLog { epoch, train_loss: total / n_train as f64, val_loss: None, val_gap_pct: None, val_candidate_rate: None };
        let due = opt.val_every > 0 && (epoch % opt.val_every == 0 || epoch == opt.epochs);
        if let (Some(v), true) = (validate.as_mut(), due) {
            let (vl, gap, rate) = v(model)?;
            entry.val_loss = Some(vl);
            entry.val_gap_pct = Some(gap);
            entry.val_candidate_rate = rate;
            // Higher candidate rate wins first, then lower gap.
            let key = gap - 1e6 * rate.unwrap_or(0.0);
            if opt.keep_best && best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, model.clone()));
                log.best_epoch = Some(epoch);
            }
        }
        log::info!(
            "epoch {epoch}: train loss {:.4e}{}",
            entry.train_loss,
            entry.val_gap_pct.map(|g| format!(", val gap {g:.3}%")).unwrap_or_default()
        );
        if !entry.train_loss.is_finite() {
            return Err(LcqpError::Invalid(format!("training diverged at epoch {epoch}")));
        }
        log.epochs.push(entry);
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(log)
}

fn feas_grad(model: &MpnnModel, prep: &FeasibilityInstance, search: &SearchConfig, scale: f64, grad: &mut MpnnModel) -> Result<f64> {
    let x_star = prep.x_star()?.to_vec();
    let t = search.t_train;
    let mut tapes: Vec<Tape> = Vec::with_capacity(t);
    let records = feasibility_rollout(prep, t, search, |x| {
        let (p, tape) = model.forward(&prep.topo, &prep.graph, x)?;
        tapes.push(tape);
        Ok(p)
    })?;
    let mut loss = 0.0;
    for (rec, tape) in records.iter().zip(&tapes) {
        let d = if search.loss_on_raw { &rec.pred } else { &rec.step.d };
        let d_out: Vec<f64> = (0..d.len()).map(|i| scale * 2.0 * (d[i] - (x_star[i] - rec.x_prev[i])) / t as f64).collect();
        model.backward(&prep.topo, tape, &d_out, grad);
        loss += rec.loss;
    }
    Ok(loss / t as f64)
}

pub fn train_feasibility(
    model: &mut MpnnModel,
    train: &[FeasibilityInstance],
    val: &[FeasibilityInstance],
    search: &SearchConfig,
    opt: &TrainConfig,
) -> Result<TrainLog> {
    search.validate()?;
    for p in train.iter().chain(val) {
        p.x_star()?;
    }
    let mut validate = |m: &MpnnModel| -> Result<(f64, f64, Option<f64>)> {
        let mut vl = 0.0;
        let mut gap = 0.0;
        for p in val {
            let recs = feasibility_rollout(p, search.t_train, search, |x| Ok(m.forward(&p.topo, &p.graph, x)?.0))?;
            vl += recs.iter().map(|r| r.loss).sum::<f64>() / search.t_train as f64;
            gap += infer_feasibility(m, p, search)?.rel_obj_gap_pct.unwrap_or(f64::NAN);
        }
        let k = val.len() as f64;
        Ok((vl / k, gap / k, None))
    };
    let v: Option<&mut Validator> =
        if val.is_empty() { None } else { Some(&mut validate) };
    train_loop(model, train.len(), opt, |m, i, s, g| feas_grad(m, &train[i], search, s, g), v)
}

fn guided_grad(model: &MpnnModel, prep: &GuidedInstance, t: usize, scale: f64, grad: &mut MpnnModel) -> Result<f64> {
    let traj = prep.trajectory();
    let mut tapes: Vec<Tape> = Vec::with_capacity(t);
    let records = guided_rollout(prep, t, |x| {
        let (p, tape) = model.forward(&prep.topo, &prep.graph, x)?;
        tapes.push(tape);
        Ok(p)
    })?;
    let mut loss = 0.0;
    for (k, (rec, tape)) in records.iter().zip(&tapes).enumerate() {
        let target = &traj[k + 1];
        let d_out: Vec<f64> = (0..target.len()).map(|i| scale * 2.0 * (rec.pred[i] - target[i]) / t as f64).collect();
        model.backward(&prep.topo, tape, &d_out, grad);
        loss += rec.loss;
    }
    Ok(loss / t as f64)
}

pub fn train_ipm_guided(
    model: &mut MpnnModel,
    train: &[GuidedInstance],
    val: &[GuidedInstance],
    search: &SearchConfig,
    opt: &TrainConfig,
) -> Result<TrainLog> {
    search.validate()?;
    for p in train.iter().chain(val) {
        if p.trajectory().len() < search.t_train + 1 {
            return Err(LcqpError::Missing("trajectory shorter than T_train".into()));
        }
    }
    let mut validate = |m: &MpnnModel| -> Result<(f64, f64, Option<f64>)> {
        let mut vl = 0.0;
        let mut gap = 0.0;
        let mut hits = 0usize;
        for p in val {
            let recs = guided_rollout(p, search.t_train, |x| Ok(m.forward(&p.topo, &p.graph, x)?.0))?;
            vl += recs.iter().map(|r| r.loss).sum::<f64>() / search.t_train as f64;
            if let Some(r) = infer_ipm_guided(m, p, search)?.best {
                hits += 1;
                gap += r.rel_obj_gap_pct.unwrap_or(f64::NAN);
            }
        }
        let k = val.len() as f64;
        let gap = if hits > 0 { gap / hits as f64 } else { f64::INFINITY };
        Ok((vl / k, gap, Some(hits as f64 / k)))
    };
    let v: Option<&mut Validator> =
        if val.is_empty() { None } else { Some(&mut validate) };
    let t = search.t_train;
    train_loop(model, train.len(), opt, |m, i, s, g| guided_grad(m, &train[i], t, s, g), v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub index: usize,
    /// `None` when IPM-guided inference found no candidate.
    pub gap_pct: Option<f64>,
    pub violation: Option<f64>,
    pub objective: Option<f64>,
    /// `max_i |A_i x − b_i|` of the reported point.
    pub max_abs_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean over instances with a candidate.
    pub mean_gap_pct: f64,
    pub mean_violation: f64,
    pub candidate_rate: f64,
    pub per_instance: Vec<InstanceMetrics>,
}

/// Aggregates per-instance reports (None = no candidate).
pub fn summarize(inst: &[&LcqpInstance], reports: &[Option<SolveReport>]) -> Result<EvalMetrics> {
    let mut per = Vec::with_capacity(reports.len());
    let (mut gap, mut viol, mut hits) = (0.0, 0.0, 0usize);
    for (i, (inst, r)) in inst.iter().zip(reports).enumerate() {
        match r {
            Some(r) => {
                hits += 1;
                let g = r.rel_obj_gap_pct.unwrap_or(f64::NAN);
                gap += g;
                viol += r.cons_violation;
                per.push(InstanceMetrics {
                    index: i,
                    gap_pct: r.rel_obj_gap_pct,
                    violation: Some(r.cons_violation),
                    objective: Some(r.objective),
                    max_abs_violation: Some(max_violation(inst, &r.x)?),
                });
            }
            None => per.push(InstanceMetrics { index: i, gap_pct: None, violation: None, objective: None, max_abs_violation: None }),
        }
    }
    let h = hits.max(1) as f64;
    Ok(EvalMetrics {
        mean_gap_pct: if hits > 0 { gap / h } else { f64::NAN },
        mean_violation: if hits > 0 { viol / h } else { f64::NAN },
        candidate_rate: if reports.is_empty() { 0.0 } else { hits as f64 / reports.len() as f64 },
        per_instance: per,
    })
}

/// Relative gap of a point against the instance's stored optimum.
pub fn gap_against_optimum(inst: &LcqpInstance, x: &[f64]) -> Result<f64> {
    let xs = inst.x_star.as_ref().ok_or_else(|| LcqpError::Missing("instance has no x_star".into()))?;
    Ok(relative_objective_gap(objective(inst, x)?, objective(inst, xs)?).percent)
}

