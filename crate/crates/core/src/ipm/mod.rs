//! Primal-dual interior-point method with a fixed barrier reduction factor.
//!
//! Each outer iteration solves the augmented Newton system
//! `[[Q + X⁻¹S, −Aᵀ], [−A, 0]] [Δx; Δλ] = [σμ/x − Qx − c + Aᵀλ; Ax − b]`,
//! recovers `Δs`, takes a damped step `0.99α` and sets `μ ← σμ`.

mod cg;
mod direct;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cg::{
    augmented_apply, augmented_rhs, cg_augmented, cg_augmented_trace, cg_standard, CgOutcome, CgRule,
    CgSnapshot,
};
pub use direct::{augmented_matrix, direct_augmented_solve};

use crate::error::{check_len, LcqpError, Result};
use crate::problem::{kkt_residuals, KktResiduals, LcqpInstance, SolveReport};

/// Fraction of the maximal step actually taken.
pub const DAMPING: f64 = 0.99;

/// Threshold of the continuous ratio test.
pub const DEFAULT_EPS_LINE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    #[default]
    Direct,
    /// Conjugate-gradient recurrences, see [`CgRule`].
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    /// Ratio test over `Δ < 0`.
    #[default]
    Exact,
    /// Ratio `x / max(ε, −Δ)` over all coordinates; continuous in `Δ`.
    EpsContinuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmConfig {
    pub sigma: f64,
    pub max_outer: usize,
    pub tol_kkt: f64,
    /// CG iteration cap; `None` means `n + m`.
    pub cg_max: Option<usize>,
    /// CG acceptance threshold on `‖Pw − r‖∞ / max(1, ‖r‖∞)`.
    pub cg_tol: f64,
    pub inner: InnerSolver,
    pub cg_rule: CgRule,
    pub cg_fallback: bool,
    pub line_search: LineSearch,
    pub eps_line: f64,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            max_outer: 200,
            tol_kkt: 1e-8,
            cg_max: None,
            cg_tol: 1e-8,
            inner: InnerSolver::Direct,
            cg_rule: CgRule::AsWritten,
            cg_fallback: true,
            line_search: LineSearch::Exact,
            eps_line: DEFAULT_EPS_LINE,
        }
    }
}

impl IpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(LcqpError::Invalid(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.tol_kkt > 0.0) || !(self.eps_line > 0.0) || !(self.cg_tol >= 0.0) {
            return Err(LcqpError::Invalid("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpmIterate {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub s: Vec<f64>,
    pub mu: f64,
}

impl IpmIterate {
    /// `x = s = 1`, `λ = 0`, `μ = xᵀs/n = 1`.
    pub fn initial(n: usize, m: usize) -> Self {
        Self { x: vec![1.0; n], lambda: vec![0.0; m], s: vec![1.0; n], mu: 1.0 }
    }

    pub fn duality_measure(&self) -> f64 {
        if self.x.is_empty() {
            return 0.0;
        }
        self.x.iter().zip(&self.s).map(|(a, b)| a * b).sum::<f64>() / self.x.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolvePath {
    Direct,
    Cg { iterations: usize },
    Fallback { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSolve {
    pub dx: Vec<f64>,
    pub dlambda: Vec<f64>,
    pub path: SolvePath,
}

/// `Δs = −X⁻¹SΔx − s + X⁻¹σμ1`.
pub fn recover_delta_s(it: &IpmIterate, dx: &[f64], sigma_mu: f64) -> Vec<f64> {
    (0..it.x.len())
        .map(|i| -it.s[i] * dx[i] / it.x[i] - it.s[i] + sigma_mu / it.x[i])
        .collect()
}

fn max_ratio(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// `min{1, sup{α : x + αΔx ≥ 0}, sup{α : s + αΔs ≥ 0}}`.
pub fn step_length_primal_dual(x: &[f64], dx: &[f64], s: &[f64], ds: &[f64]) -> f64 {
    1.0_f64.min(max_ratio(x, dx)).min(max_ratio(s, ds))
}

/// Per-coordinate ratio of the continuous rule, `v / (−min(−ε, Δv))`.
pub fn eps_ratio(v: f64, dv: f64, eps: f64) -> f64 {
    v / -(-eps).min(dv)
}

/// Continuous variant of the ratio test: every coordinate contributes
/// `v / max(ε, −Δv)`.
pub fn step_length_eps(x: &[f64], dx: &[f64], s: &[f64], ds: &[f64], eps: f64) -> f64 {
    let mut alpha = 1.0_f64;
    for (v, d) in x.iter().zip(dx).chain(s.iter().zip(ds)) {
        alpha = alpha.min(eps_ratio(*v, *d, eps));
    }
    alpha
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub dx: Vec<f64>,
    pub dlambda: Vec<f64>,
    pub ds: Vec<f64>,
    pub alpha: f64,
    pub path: SolvePath,
}

/// Applies a Newton direction: recovers `Δs`, runs the line search and takes
/// the damped step. `μ` is multiplied by `sigma`.
pub fn apply_direction(
    it: &IpmIterate,
    dx: Vec<f64>,
    dlambda: Vec<f64>,
    sigma: f64,
    line_search: LineSearch,
    eps: f64,
) -> (IpmIterate, StepInfo) {
    let sigma_mu = sigma * it.mu;
    let ds = recover_delta_s(it, &dx, sigma_mu);
    let alpha = match line_search {
        LineSearch::Exact => step_length_primal_dual(&it.x, &dx, &it.s, &ds),
        LineSearch::EpsContinuous => step_length_eps(&it.x, &dx, &it.s, &ds, eps),
    };
    let step = DAMPING * alpha;
    let next = IpmIterate {
        x: it.x.iter().zip(&dx).map(|(v, d)| v + step * d).collect(),
        lambda: it.lambda.iter().zip(&dlambda).map(|(v, d)| v + step * d).collect(),
        s: it.s.iter().zip(&ds).map(|(v, d)| v + step * d).collect(),
        mu: sigma_mu,
    };
    (next, StepInfo { dx, dlambda, ds, alpha, path: SolvePath::Direct })
}

/// One outer iteration.
pub fn ipm_step(inst: &LcqpInstance, it: &IpmIterate, cfg: &IpmConfig) -> Result<(IpmIterate, StepInfo)> {
    let sigma_mu = cfg.sigma * it.mu;
    let sol = match cfg.inner {
        InnerSolver::Direct => direct_augmented_solve(inst, it, sigma_mu)?,
        InnerSolver::Cg => cg_augmented(inst, it, sigma_mu, cfg)?,
    };
    let (next, mut info) = apply_direction(it, sol.dx, sol.dlambda, cfg.sigma, cfg.line_search, cfg.eps_line);
    info.path = sol.path;
    Ok((next, info))
}

#[derive(Debug, Clone)]
pub struct IpmOutcome {
    pub report: SolveReport,
    /// `x(0), x(1), …, x(T)`.
    pub trajectory: Vec<Vec<f64>>,
    pub iterate: IpmIterate,
    pub residuals: KktResiduals,
}

fn run(
    inst: &LcqpInstance,
    cfg: &IpmConfig,
    mut done: impl FnMut(&IpmIterate, &KktResiduals) -> bool,
) -> Result<(IpmIterate, Vec<Vec<f64>>, KktResiduals, usize)> {
    cfg.validate()?;
    let mut it = IpmIterate::initial(inst.n, inst.m);
    let mut trajectory = vec![it.x.clone()];
    for k in 0..=cfg.max_outer {
        let res = kkt_residuals(inst, &it.x, &it.lambda, &it.s)?;
        if done(&it, &res) {
            return Ok((it, trajectory, res, k));
        }
        if k == cfg.max_outer {
            return Err(LcqpError::NonConvergence { iterations: k, primal: res.primal, dual: res.dual, comp: res.comp });
        }
        let (next, _) = ipm_step(inst, &it, cfg)?;
        it = next;
        trajectory.push(it.x.clone());
    }
    unreachable!("loop returns on its last iteration")
}

/// Solves to `max(primal, dual, comp) ≤ tol_kkt`.
pub fn ipm_solve(inst: &LcqpInstance, cfg: &IpmConfig) -> Result<IpmOutcome> {
    let start = Instant::now();
    let (iterate, trajectory, residuals, iterations) = run(inst, cfg, |_, r| r.max() <= cfg.tol_kkt)?;
    let report = SolveReport::evaluate(inst, iterate.x.clone(), iterations, start.elapsed().as_secs_f64())?;
    Ok(IpmOutcome { report, trajectory, iterate, residuals })
}

/// Iterates until `done` accepts the current iterate and returns it.
pub fn run_until(inst: &LcqpInstance, cfg: &IpmConfig, done: impl FnMut(&IpmIterate, &KktResiduals) -> bool) -> Result<IpmIterate> {
    Ok(run(inst, cfg, done)?.0)
}

/// Checks that `dx` and `dlambda` solve the augmented system to `tol`
/// relative to `max(1, ‖rhs‖∞)`; returns the scaled residual.
pub fn augmented_residual(inst: &LcqpInstance, it: &IpmIterate, sigma_mu: f64, dx: &[f64], dlambda: &[f64]) -> Result<f64> {
    check_len("dx", dx.len(), inst.n)?;
    check_len("dlambda", dlambda.len(), inst.m)?;
    let rhs = augmented_rhs(inst, it, sigma_mu)?;
    let w: Vec<f64> = dx.iter().chain(dlambda).copied().collect();
    let pw = augmented_apply(inst, it, &w);
    let scale = rhs.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    Ok(pw.iter().zip(&rhs).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale)
}
