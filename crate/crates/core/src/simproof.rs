//! Hand-built message passing that reproduces the conjugate-gradient inner
//! solver and one interior-point outer iteration on the tripartite graph.
//!
//! Every message, aggregation and update below is a fixed affine or
//! coordinate-wise rational map of node channels; nothing is learned. The
//! arithmetic is ordered like the reference solver in [`crate::ipm`] so the
//! two can be compared in lockstep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datasets::make_sparse_spd;
use crate::error::{LcqpError, Result};
use crate::graph::{encode, Arc, ProblemGraph};
use crate::ipm::{apply_direction, augmented_apply, cg_augmented_trace, CgRule, IpmIterate, LineSearch, DAMPING};
use crate::problem::LcqpInstance;
use crate::rng::SeededRng;
use crate::sparse::SparseMatrix;

/// Message-passing steps of the CG initialisation.
pub const INIT_STEPS: usize = 1;
/// Message-passing steps per CG iteration.
pub const ITERATION_STEPS: usize = 7;
/// Message-passing steps of the outer update.
pub const OUTER_STEPS: usize = 4;

/// Node channels at one labelled phase. `var[v][k]` is channel `k` of
/// variable node `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub phase: String,
    pub var_names: Vec<&'static str>,
    pub var: Vec<Vec<f64>>,
    pub cons_names: Vec<&'static str>,
    pub cons: Vec<Vec<f64>>,
    pub global_names: Vec<&'static str>,
    pub global: Vec<f64>,
    /// Message-passing steps executed so far.
    pub steps: usize,
}

impl SimState {
    fn col(rows: &[Vec<f64>], names: &[&str], name: &str) -> Option<Vec<f64>> {
        let k = names.iter().position(|n| *n == name)?;
        Some(rows.iter().map(|r| r[k]).collect())
    }

    pub fn var_channel(&self, name: &str) -> Option<Vec<f64>> {
        Self::col(&self.var, &self.var_names, name)
    }

    pub fn cons_channel(&self, name: &str) -> Option<Vec<f64>> {
        Self::col(&self.cons, &self.cons_names, name)
    }

    pub fn global_channel(&self, name: &str) -> Option<f64> {
        self.global_names.iter().position(|n| *n == name).map(|k| self.global[k])
    }
}

/// Arc lists of the tripartite graph, each grouped by receiver.
#[derive(Debug, Clone)]
pub struct SimGraph {
    pub n: usize,
    pub m: usize,
    vv: Vec<Arc>,
    cv: Vec<Arc>,
    vc: Vec<Arc>,
}

impl SimGraph {
    pub fn new(graph: &ProblemGraph) -> Self {
        Self {
            n: graph.n,
            m: graph.m,
            vv: graph.arcs_var_to_var(),
            cv: graph.arcs_cons_to_var(),
            vc: graph.arcs_var_to_cons(),
        }
    }
}

/// Sum aggregation of `weight · channel[src]`, in arc order.
fn conv(arcs: &[Arc], dst_count: usize, src: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; dst_count];
    for a in arcs {
        out[a.dst] += a.weight * src[a.src][k];
    }
    out
}

/// Sum of `f(node)` over nodes in index order, as the global node aggregates.
fn global_sum(rows: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut acc = 0.0;
    for r in rows {
        acc += f(r);
    }
    acc
}

fn stage(prev: &SimState, phase: String, var_names: Vec<&'static str>, var: Vec<Vec<f64>>, cons_names: Vec<&'static str>, cons: Vec<Vec<f64>>) -> SimState {
    SimState {
        phase,
        var_names,
        var,
        cons_names,
        cons,
        global_names: prev.global_names.clone(),
        global: prev.global.clone(),
        steps: prev.steps + 1,
    }
}

const V5: [&str; 5] = ["r1", "p1", "w1", "x", "s"];
const C4: [&str; 4] = ["r2", "p2", "w2", "lambda"];

/// One step from `V = [x s c]`, `C = [λ b]`, `G = [σμ]` to
/// `V = [r₁ p₁ w₁ x s]`, `C = [r₂ p₂ w₂ λ]` with `p = r` and `w = 0`.
pub fn sim_cg_init(graph: &SimGraph, inst: &LcqpInstance, it: &IpmIterate, sigma_mu: f64) -> Result<SimState> {
    if it.x.iter().chain(&it.s).any(|&v| v <= 0.0) {
        return Err(LcqpError::Invalid("simulation needs x, s > 0".into()));
    }
    let v0: Vec<Vec<f64>> = (0..graph.n).map(|v| vec![it.x[v], it.s[v], inst.c[v]]).collect();
    let c0: Vec<Vec<f64>> = (0..graph.m).map(|c| vec![it.lambda[c], inst.b[c]]).collect();
    // Messages: Q_vu x_u, A_cv λ_c, A_cv x_v, and σμ from the global node.
    let qx = conv(&graph.vv, graph.n, &v0, 0);
    let atl = conv(&graph.cv, graph.n, &c0, 0);
    let ax = conv(&graph.vc, graph.m, &v0, 0);
    let var = v0
        .iter()
        .enumerate()
        .map(|(v, row)| {
            let r1 = sigma_mu / row[0] - qx[v] - row[2] + atl[v];
            vec![r1, r1, 0.0, row[0], row[1]]
        })
        .collect();
    let cons = c0
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let r2 = ax[c] - row[1];
            vec![r2, r2, 0.0, row[0]]
        })
        .collect();
    Ok(SimState {
        phase: "init".into(),
        var_names: V5.to_vec(),
        var,
        cons_names: C4.to_vec(),
        cons,
        global_names: vec!["sigma_mu"],
        global: vec![sigma_mu],
        steps: INIT_STEPS,
    })
}

/// `P·(channel k)` as one exchange between variable and constraint nodes;
/// the product is prepended as a new channel 0.
fn product_step(graph: &SimGraph, st: &SimState, k: usize, phase: String, name: &'static str, cname: &'static str) -> SimState {
    let qv = conv(&graph.vv, graph.n, &st.var, k);
    let atv = conv(&graph.cv, graph.n, &st.cons, k);
    let av = conv(&graph.vc, graph.m, &st.var, k);
    let var = st
        .var
        .iter()
        .enumerate()
        .map(|(v, row)| {
            let (x, s) = (row[3], row[4]);
            let mut out = vec![qv[v] - atv[v] + s * row[k] / x];
            out.extend_from_slice(row);
            out
        })
        .collect();
    let cons = st
        .cons
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let mut out = vec![-av[c]];
            out.extend_from_slice(row);
            out
        })
        .collect();
    let mut vn = vec![name];
    vn.extend(&st.var_names);
    let mut cn = vec![cname];
    cn.extend(&st.cons_names);
    stage(st, phase, vn, var, cn, cons)
}

fn drop_first(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r[1..].to_vec()).collect()
}

/// Outcome of one simulated CG iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimIteration {
    /// The seven intermediate states `t.1 … t.7`; empty when converged.
    pub phases: Vec<SimState>,
    /// `rᵀr = 0` on entry: nothing was executed.
    pub converged: bool,
}

/// Seven message-passing steps of one CG iteration on `V = [r₁ p₁ w₁ x s]`,
/// `C = [r₂ p₂ w₂ λ]`. Returns the new state (the last phase) and all phases.
pub fn sim_cg_iteration(graph: &SimGraph, state: &SimState, t: usize, rule: CgRule) -> (SimState, SimIteration) {
    let rr_top = global_sum(&state.var, |r| r[0] * r[0]);
    let rr_bottom = global_sum(&state.cons, |r| r[0] * r[0]);
    if rr_top + rr_bottom == 0.0 {
        return (state.clone(), SimIteration { phases: vec![], converged: true });
    }
    let mut phases = Vec::with_capacity(ITERATION_STEPS);

    // t.1: P·r (as written) or P·p (textbook) into a leading channel.
    let k = match rule {
        CgRule::AsWritten => 0,
        CgRule::Textbook => 1,
    };
    let s1 = product_step(graph, state, k, format!("{t}.1"), "Pd1", "Pd2");
    phases.push(s1.clone());

    // t.2: global node forms α = rᵀr / dᵀPd; nodes drop the product.
    let den_top = global_sum(&s1.var, |r| r[0] * r[1 + k]);
    let den_bottom = global_sum(&s1.cons, |r| r[0] * r[1 + k]);
    let num_top = global_sum(&s1.var, |r| r[1] * r[1]);
    let num_bottom = global_sum(&s1.cons, |r| r[1] * r[1]);
    let alpha = (num_top + num_bottom) / (den_top + den_bottom);
    let mut s2 = stage(&s1, format!("{t}.2"), V5.to_vec(), drop_first(&s1.var), C4.to_vec(), drop_first(&s1.cons));
    s2.global_names = vec!["alpha"];
    s2.global = vec![alpha];
    phases.push(s2.clone());

    // t.3: w ← w + αp, α broadcast from the global node.
    let upd_w = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut o = r.clone();
                o[2] = r[2] + alpha * r[1];
                o
            })
            .collect()
    };
    let s3 = stage(&s2, format!("{t}.3"), V5.to_vec(), upd_w(&s2.var), C4.to_vec(), upd_w(&s2.cons));
    phases.push(s3.clone());

    // t.4: P·p into a leading channel.
    let s4 = product_step(graph, &s3, 1, format!("{t}.4"), "Pp1", "Pp2");
    phases.push(s4.clone());

    // t.5: r ← r − α·Pp, keeping the previous r as channel 1.
    let upd_r = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut o = vec![r[1] - alpha * r[0]];
                o.extend_from_slice(&r[1..]);
                o
            })
            .collect()
    };
    let v5 = vec!["r1", "r1_prev", "p1", "w1", "x", "s"];
    let c5 = vec!["r2", "r2_prev", "p2", "w2", "lambda"];
    let s5 = stage(&s4, format!("{t}.5"), v5, upd_r(&s4.var), c5, upd_r(&s4.cons));
    phases.push(s5.clone());

    // t.6: global node forms β = rᵀr / r_prevᵀr_prev; nodes drop r_prev.
    let new_top = global_sum(&s5.var, |r| r[0] * r[0]);
    let new_bottom = global_sum(&s5.cons, |r| r[0] * r[0]);
    let old_top = global_sum(&s5.var, |r| r[1] * r[1]);
    let old_bottom = global_sum(&s5.cons, |r| r[1] * r[1]);
    let beta = (new_top + new_bottom) / (old_top + old_bottom);
    let drop_prev = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut o = vec![r[0]];
                o.extend_from_slice(&r[2..]);
                o
            })
            .collect()
    };
    let mut s6 = stage(&s5, format!("{t}.6"), V5.to_vec(), drop_prev(&s5.var), C4.to_vec(), drop_prev(&s5.cons));
    s6.global_names = vec!["beta"];
    s6.global = vec![beta];
    phases.push(s6.clone());

    // t.7: p ← βp + r.
    let upd_p = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                let mut o = r.clone();
                o[1] = beta * r[1] + r[0];
                o
            })
            .collect()
    };
    let s7 = stage(&s6, format!("{t}.7"), V5.to_vec(), upd_p(&s6.var), C4.to_vec(), upd_p(&s6.cons));
    phases.push(s7.clone());

    (s7, SimIteration { phases, converged: false })
}

/// Four message-passing steps of the outer update, starting from
/// `V = [x s c]`, `C = [λ b]`, `G = [σ μ]` and the inner solution.
/// Uses the continuous ratio test with threshold `eps`. Returns the phases;
/// the last one carries `V = [x s c]`, `C = [λ b]`, `G = [σ σμ]`.
pub fn sim_ipm_outer(
    inst: &LcqpInstance,
    it: &IpmIterate,
    sigma: f64,
    dx: &[f64],
    dlambda: &[f64],
    eps: f64,
    steps_before: usize,
) -> Vec<SimState> {
    let (n, m) = (inst.n, inst.m);
    let base = SimState {
        phase: "outer.0".into(),
        var_names: vec!["x", "s", "c"],
        var: (0..n).map(|v| vec![it.x[v], it.s[v], inst.c[v]]).collect(),
        cons_names: vec!["lambda", "b"],
        cons: (0..m).map(|c| vec![it.lambda[c], inst.b[c]]).collect(),
        global_names: vec!["sigma", "mu"],
        global: vec![sigma, it.mu],
        steps: steps_before,
    };
    let mut phases = Vec::with_capacity(OUTER_STEPS);

    // 1: load the inner solution as a leading channel.
    let var1: Vec<Vec<f64>> = base.var.iter().enumerate().map(|(v, r)| [vec![dx[v]], r.clone()].concat()).collect();
    let cons1: Vec<Vec<f64>> = base.cons.iter().enumerate().map(|(c, r)| [vec![dlambda[c]], r.clone()].concat()).collect();
    let s1 = stage(&base, "outer.1".into(), vec!["dx", "x", "s", "c"], var1, vec!["dlambda", "lambda", "b"], cons1);
    phases.push(s1.clone());

    // 2: Δs = −sΔx/x − s + σμ/x, with μσ sent from the global node.
    let mu_sigma = s1.global[1] * s1.global[0];
    let var2 = s1
        .var
        .iter()
        .map(|r| {
            let (d, x, s, c) = (r[0], r[1], r[2], r[3]);
            vec![d, -s * d / x - s + mu_sigma / x, x, s, c]
        })
        .collect();
    let s2 = stage(&s1, "outer.2".into(), vec!["dx", "ds", "x", "s", "c"], var2, s1.cons_names.clone(), s1.cons.clone());
    phases.push(s2.clone());

    // 3: per-node ratios, min-aggregated at the global node.
    let ratio = |v: f64, d: f64| v / -(-eps).min(d);
    let mut ax = f64::INFINITY;
    let mut a_s = f64::INFINITY;
    for r in &s2.var {
        ax = ax.min(ratio(r[2], r[0]));
        a_s = a_s.min(ratio(r[3], r[1]));
    }
    let alpha = 1.0_f64.min(ax).min(a_s);
    let mut s3 = stage(&s2, "outer.3".into(), s2.var_names.clone(), s2.var.clone(), s2.cons_names.clone(), s2.cons.clone());
    s3.global_names = vec!["sigma", "mu", "alpha"];
    s3.global = vec![s2.global[0], s2.global[1], alpha];
    phases.push(s3.clone());

    // 4: damped update; the global node keeps σ and replaces μ by σμ.
    let step = DAMPING * alpha;
    let var4 = s3.var.iter().map(|r| vec![r[2] + step * r[0], r[3] + step * r[1], r[4]]).collect();
    let cons4 = s3.cons.iter().map(|r| vec![r[1] + step * r[0], r[2]]).collect();
    let mut s4 = stage(&s3, "outer.4".into(), vec!["x", "s", "c"], var4, vec!["lambda", "b"], cons4);
    s4.global_names = vec!["sigma", "mu"];
    s4.global = vec![s3.global[0], s3.global[0] * s3.global[1]];
    phases.push(s4);
    phases
}

/// A whole simulated outer iteration: initialisation, `iters` CG iterations
/// (stopping early on `rᵀr = 0`) and the outer update.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub init: SimState,
    pub iterations: Vec<SimIteration>,
    pub outer: Vec<SimState>,
    pub next: IpmIterate,
    pub cg_steps: usize,
    pub cg_iterations: usize,
}

pub fn sim_ipm_iteration(graph: &SimGraph, inst: &LcqpInstance, it: &IpmIterate, sigma: f64, rule: CgRule, iters: usize, eps: f64) -> Result<SimRun> {
    let sigma_mu = sigma * it.mu;
    let init = sim_cg_init(graph, inst, it, sigma_mu)?;
    let mut state = init.clone();
    let mut iterations = Vec::new();
    let mut done = 0;
    for t in 1..=iters {
        let (next, rec) = sim_cg_iteration(graph, &state, t, rule);
        let converged = rec.converged;
        iterations.push(rec);
        if converged {
            break;
        }
        state = next;
        done = t;
    }
    let dx = state.var_channel("w1").expect("w1");
    let dl = state.cons_channel("w2").expect("w2");
    let outer = sim_ipm_outer(inst, it, sigma, &dx, &dl, eps, state.steps);
    let last = outer.last().expect("four phases");
    let next = IpmIterate {
        x: last.var_channel("x").expect("x"),
        lambda: last.cons_channel("lambda").expect("lambda"),
        s: last.var_channel("s").expect("s"),
        mu: last.global[1],
    };
    Ok(SimRun { init, iterations, outer, next, cg_steps: state.steps, cg_iterations: done })
}

/// `|a − b| / max(1, |b|)`; identical values give zero, including two NaNs
/// (both sides broke down at the same point).
pub fn deviation(a: f64, b: f64) -> f64 {
    if a == b || (a.is_nan() && b.is_nan()) {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1.0)
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| deviation(*x, *y)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: usize,
    pub rule: String,
    /// Max deviation keyed by `phase/channel`, where the phase label drops
    /// the iteration index (`init`, `cg.1` … `cg.7`, `outer.1` … `outer.4`).
    pub deviations: BTreeMap<String, f64>,
    pub max_deviation: f64,
    pub cg_iterations: usize,
    /// Reference values that were NaN or infinite. The as-written step rule
    /// can divide by a vanishing `rᵀPr` on the indefinite system.
    pub nonfinite_values: usize,
    /// Every trial used exactly `1 + 7·iterations` CG steps and 4 outer steps.
    pub step_counts_ok: bool,
}

impl SimReport {
    fn record(&mut self, key: String, dev: f64) {
        let e = self.deviations.entry(key).or_insert(0.0);
        // NaN compares false, so push it through explicitly.
        if dev > *e || dev.is_nan() {
            *e = dev;
        }
        if dev > self.max_deviation || dev.is_nan() {
            self.max_deviation = dev;
        }
    }
}

/// Random instance for a trial: `n` variables, `m < n` rows, interior iterate.
fn random_trial(rng: &mut SeededRng, n_max: usize, m_max: usize) -> Result<(LcqpInstance, IpmIterate)> {
    let n = rng.int_in(2, n_max.max(2));
    let m = rng.int_in(1, m_max.min(n - 1).max(1));
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.bernoulli(0.6) || j == i {
                trip.push((i, j, rng.normal()));
            }
        }
    }
    let a = SparseMatrix::from_triplets(m, n, trip)?;
    let q = make_sparse_spd(n, 0.4, rng);
    let inst = LcqpInstance::new(q, a, rng.normal_vec(m), rng.normal_vec(n))?;
    let x: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.2, 2.0)).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.2, 2.0)).collect();
    let mu = x.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    Ok((inst, IpmIterate { x, lambda: rng.normal_vec(m), s, mu }))
}

fn phase_key(phase: &str) -> String {
    match phase.split_once('.') {
        Some((t, k)) if t.parse::<usize>().is_ok() => format!("cg.{k}"),
        _ => phase.to_string(),
    }
}

/// Compares every channel of `st` against expected columns.
fn check(report: &mut SimReport, st: &SimState, var: &[(&str, &[f64])], cons: &[(&str, &[f64])], global: &[(&str, f64)]) {
    let key = phase_key(&st.phase);
    report.nonfinite_values += var.iter().chain(cons).flat_map(|(_, v)| v.iter()).chain(global.iter().map(|(_, g)| g)).filter(|v| !v.is_finite()).count();
    for (name, want) in var {
        let got = st.var_channel(name).expect("channel");
        report.record(format!("{key}/{name}"), max_dev(&got, want));
    }
    for (name, want) in cons {
        let got = st.cons_channel(name).expect("channel");
        report.record(format!("{key}/{name}"), max_dev(&got, want));
    }
    for (name, want) in global {
        let got = st.global_channel(name).expect("channel");
        report.record(format!("{key}/{name}"), deviation(got, *want));
    }
}

/// Lockstep comparison over `trials` random instances with `n ≤ n_max`
/// variables and `m ≤ m_max` constraints, `outer` outer iterations each.
/// Each inner solve runs `n + m` iterations.
#[allow(clippy::too_many_arguments)]
pub fn verify_sim(n_max: usize, m_max: usize, trials: usize, outer: usize, seed: u64, rule: CgRule, eps: f64, sigma: f64) -> Result<SimReport> {
    if n_max < 2 || m_max < 1 {
        return Err(LcqpError::Invalid("verify-sim needs n ≥ 2 and m ≥ 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut report = SimReport { trials, rule: format!("{rule:?}"), step_counts_ok: true, ..Default::default() };
    for _ in 0..trials {
        let (inst, it0) = random_trial(&mut rng, n_max, m_max)?;
        let (n, m) = (inst.n, inst.m);
        let graph = SimGraph::new(&encode(&inst, true));
        let mut sim_it = it0.clone();
        let mut ref_it = it0;
        for _ in 0..outer {
            let sigma_mu = sigma * ref_it.mu;
            let run = sim_ipm_iteration(&graph, &inst, &sim_it, sigma, rule, n + m, eps)?;
            let (r0, snaps) = cg_augmented_trace(&inst, &ref_it, sigma_mu, rule, n + m)?;
            report.cg_iterations += snaps.len();
            if run.cg_iterations != snaps.len()
                || run.cg_steps != INIT_STEPS + ITERATION_STEPS * snaps.len()
                || run.outer.last().map(|s| s.steps) != Some(run.cg_steps + OUTER_STEPS)
            {
                report.step_counts_ok = false;
            }

            let (r01, r02) = r0.split_at(n);
            let zn = vec![0.0; n];
            let zm = vec![0.0; m];
            check(
                &mut report,
                &run.init,
                &[("r1", r01), ("p1", r01), ("w1", &zn), ("x", &ref_it.x), ("s", &ref_it.s)],
                &[("r2", r02), ("p2", r02), ("w2", &zm), ("lambda", &ref_it.lambda)],
                &[],
            );
            let mut prev_r = r0.clone();
            let mut prev_p = r0.clone();
            let mut prev_w = vec![0.0; n + m];
            for (rec, snap) in run.iterations.iter().zip(&snaps) {
                let ph = &rec.phases;
                let d = match rule {
                    CgRule::AsWritten => &prev_r,
                    CgRule::Textbook => &prev_p,
                };
                let pd = augmented_apply(&inst, &ref_it, d);
                let pp = augmented_apply(&inst, &ref_it, &prev_p);
                let (r1, r2) = prev_r.split_at(n);
                let (p1, p2) = prev_p.split_at(n);
                let (w1, w2) = prev_w.split_at(n);
                let (nr1, nr2) = snap.r.split_at(n);
                let (nw1, nw2) = snap.w.split_at(n);
                let (np1, np2) = snap.p.split_at(n);
                let fixed_v: [(&str, &[f64]); 2] = [("x", &ref_it.x), ("s", &ref_it.s)];
                let lam: (&str, &[f64]) = ("lambda", &ref_it.lambda);
                check(&mut report, &ph[0], &[&[("Pd1", &pd[..n]), ("r1", r1), ("p1", p1), ("w1", w1)][..], &fixed_v].concat(), &[("Pd2", &pd[n..]), ("r2", r2), ("p2", p2), ("w2", w2), lam], &[]);
                check(&mut report, &ph[1], &[&[("r1", r1), ("p1", p1), ("w1", w1)][..], &fixed_v].concat(), &[("r2", r2), ("p2", p2), ("w2", w2), lam], &[("alpha", snap.alpha)]);
                check(&mut report, &ph[2], &[&[("r1", r1), ("p1", p1), ("w1", nw1)][..], &fixed_v].concat(), &[("r2", r2), ("p2", p2), ("w2", nw2), lam], &[("alpha", snap.alpha)]);
                check(&mut report, &ph[3], &[&[("Pp1", &pp[..n]), ("r1", r1), ("p1", p1), ("w1", nw1)][..], &fixed_v].concat(), &[("Pp2", &pp[n..]), ("r2", r2), ("p2", p2), ("w2", nw2), lam], &[("alpha", snap.alpha)]);
                check(&mut report, &ph[4], &[&[("r1", nr1), ("r1_prev", r1), ("p1", p1), ("w1", nw1)][..], &fixed_v].concat(), &[("r2", nr2), ("r2_prev", r2), ("p2", p2), ("w2", nw2), lam], &[("alpha", snap.alpha)]);
                check(&mut report, &ph[5], &[&[("r1", nr1), ("p1", p1), ("w1", nw1)][..], &fixed_v].concat(), &[("r2", nr2), ("p2", p2), ("w2", nw2), lam], &[("beta", snap.beta)]);
                check(&mut report, &ph[6], &[&[("r1", nr1), ("p1", np1), ("w1", nw1)][..], &fixed_v].concat(), &[("r2", nr2), ("p2", np2), ("w2", nw2), lam], &[("beta", snap.beta)]);
                prev_r = snap.r.clone();
                prev_p = snap.p.clone();
                prev_w = snap.w.clone();
            }

            let (dx, dl) = prev_w.split_at(n);
            let (next, info) = apply_direction(&ref_it, dx.to_vec(), dl.to_vec(), sigma, LineSearch::EpsContinuous, eps);
            let o = &run.outer;
            check(&mut report, &o[0], &[("dx", dx), ("x", &ref_it.x), ("s", &ref_it.s), ("c", &inst.c)], &[("dlambda", dl), ("lambda", &ref_it.lambda), ("b", &inst.b)], &[("sigma", sigma), ("mu", ref_it.mu)]);
            check(&mut report, &o[1], &[("dx", dx), ("ds", &info.ds), ("x", &ref_it.x), ("s", &ref_it.s)], &[], &[]);
            check(&mut report, &o[2], &[], &[], &[("alpha", info.alpha)]);
            check(&mut report, &o[3], &[("x", &next.x), ("s", &next.s), ("c", &inst.c)], &[("lambda", &next.lambda), ("b", &inst.b)], &[("sigma", sigma), ("mu", next.mu)]);

            sim_it = run.next;
            ref_it = next;
        }
    }
    Ok(report)
}
