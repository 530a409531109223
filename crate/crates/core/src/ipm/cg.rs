//! Conjugate-gradient recurrences, both for a generic symmetric operator and
//! for the interior-point augmented system.

use serde::{Deserialize, Serialize};

use crate::error::{LcqpError, Result};
use crate::ipm::{direct_augmented_solve, AugmentedSolve, IpmConfig, IpmIterate, SolvePath};
use crate::problem::{inf_norm, LcqpInstance};

/// Step-size rule of the recurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CgRule {
    /// `α = rᵀr / rᵀMr`, a nonstandard variant. It does not in
    /// general converge, even for SPD `M`.
    #[default]
    AsWritten,
    /// `α = rᵀr / pᵀMp`, the classical rule.
    Textbook,
}

/// Per-iteration quantities, recorded for lockstep comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSnapshot {
    pub alpha: f64,
    pub beta: f64,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Norm of the recurrence residual `r`, not of `b − Mw`.
    pub residual_norm: f64,
}

/// Inner product split at `split`: `aᵀb = a[..split]ᵀb[..split] + a[split..]ᵀb[split..]`.
/// The split mirrors the variable/constraint halves of the augmented system
/// so the message-passing simulation can reproduce sums exactly.
fn split_dot(a: &[f64], b: &[f64], split: usize) -> f64 {
    let mut top = 0.0;
    for i in 0..split {
        top += a[i] * b[i];
    }
    let mut bottom = 0.0;
    for i in split..a.len() {
        bottom += a[i] * b[i];
    }
    top + bottom
}

struct Recurrence<'a> {
    op: &'a dyn Fn(&[f64]) -> Vec<f64>,
    split: usize,
    rule: CgRule,
    /// Breakdown detection; off when tracing the raw recurrences.
    checked: bool,
}

impl Recurrence<'_> {
    fn run(
        &self,
        rhs: &[f64],
        max_iter: usize,
        tol: f64,
        mut observe: impl FnMut(&CgSnapshot),
    ) -> Result<CgOutcome> {
        let dim = rhs.len();
        let mut w = vec![0.0; dim];
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rr = split_dot(&r, &r, self.split);
        let mut iterations = 0;
        for t in 0..max_iter {
            if rr.sqrt() <= tol || rr == 0.0 {
                break;
            }
            let mp = (self.op)(&p);
            let (den, scale) = match self.rule {
                CgRule::AsWritten => (split_dot(&r, &(self.op)(&r), self.split), rr),
                CgRule::Textbook => (split_dot(&p, &mp, self.split), split_dot(&p, &p, self.split)),
            };
            if self.checked && (den <= 1e-14 * scale || !den.is_finite()) {
                return Err(LcqpError::Breakdown { iteration: t, residual: rr.sqrt() });
            }
            let alpha = rr / den;
            for i in 0..dim {
                w[i] += alpha * p[i];
            }
            for i in 0..dim {
                r[i] -= alpha * mp[i];
            }
            let rr_next = split_dot(&r, &r, self.split);
            let beta = rr_next / rr;
            for i in 0..dim {
                p[i] = beta * p[i] + r[i];
            }
            rr = rr_next;
            iterations = t + 1;
            observe(&CgSnapshot { alpha, beta, r: r.clone(), p: p.clone(), w: w.clone() });
        }
        Ok(CgOutcome { solution: w, iterations, residual_norm: rr.sqrt() })
    }
}

/// Conjugate gradient on a symmetric operator starting from zero. Stops after
/// `max_iter` iterations or once `‖r‖₂ ≤ tol`.
pub fn cg_standard(
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    max_iter: usize,
    tol: f64,
    rule: CgRule,
) -> Result<CgOutcome> {
    Recurrence { op, split: rhs.len(), rule, checked: true }.run(rhs, max_iter, tol, |_| {})
}

/// Right-hand side `[σμ/x − Qx − c + Aᵀλ ; Ax − b]` of the augmented system.
pub fn augmented_rhs(inst: &LcqpInstance, it: &IpmIterate, sigma_mu: f64) -> Result<Vec<f64>> {
    let qx = inst.q.mul_vec(&it.x)?;
    let atl = inst.a.tr_mul_vec(&it.lambda)?;
    let ax = inst.a.mul_vec(&it.x)?;
    let mut r = Vec::with_capacity(inst.n + inst.m);
    for i in 0..inst.n {
        r.push(sigma_mu / it.x[i] - qx[i] - inst.c[i] + atl[i]);
    }
    for j in 0..inst.m {
        r.push(ax[j] - inst.b[j]);
    }
    Ok(r)
}

/// Matrix-free product with `[[Q + X⁻¹S, −Aᵀ], [−A, 0]]`.
pub fn augmented_apply(inst: &LcqpInstance, it: &IpmIterate, v: &[f64]) -> Vec<f64> {
    let (n, m) = (inst.n, inst.m);
    let (top, bottom) = v.split_at(n);
    let qv = inst.q.mul_vec(top).expect("shape");
    let atv = inst.a.tr_mul_vec(bottom).expect("shape");
    let av = inst.a.mul_vec(top).expect("shape");
    let mut out = Vec::with_capacity(n + m);
    for i in 0..n {
        out.push(qv[i] - atv[i] + it.s[i] * top[i] / it.x[i]);
    }
    for j in 0..m {
        out.push(-av[j]);
    }
    out
}

/// Solves the augmented system with the conjugate-gradient recurrences.
/// Breakdown or an unmet residual falls back to the direct solver when
/// `cfg.cg_fallback` is set; otherwise the failure is returned.
pub fn cg_augmented(inst: &LcqpInstance, it: &IpmIterate, sigma_mu: f64, cfg: &IpmConfig) -> Result<AugmentedSolve> {
    let (n, m) = (inst.n, inst.m);
    let rhs = augmented_rhs(inst, it, sigma_mu)?;
    let scale = inf_norm(&rhs).max(1.0);
    let op = |v: &[f64]| augmented_apply(inst, it, v);
    let rec = Recurrence { op: &op, split: n, rule: cfg.cg_rule, checked: true };
    let max_iter = cfg.cg_max.unwrap_or(n + m);

    let failure = match rec.run(&rhs, max_iter, cfg.cg_tol * scale, |_| {}) {
        Ok(out) => {
            let pw = op(&out.solution);
            let resid = inf_norm(&pw.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
            if resid <= cfg.cg_tol * scale {
                let (dx, dl) = out.solution.split_at(n);
                return Ok(AugmentedSolve {
                    dx: dx.to_vec(),
                    dlambda: dl.to_vec(),
                    path: SolvePath::Cg { iterations: out.iterations },
                });
            }
            LcqpError::InnerNotConverged { residual: resid }
        }
        Err(e) => e,
    };
    if cfg.cg_fallback {
        log::warn!("augmented CG failed ({failure}); using the direct solver");
        let mut sol = direct_augmented_solve(inst, it, sigma_mu)?;
        sol.path = SolvePath::Fallback { reason: failure.to_string() };
        Ok(sol)
    } else {
        log::warn!("augmented CG failed ({failure})");
        Err(failure)
    }
}

/// Runs the raw recurrences on the augmented system for exactly `iters`
/// iterations (or until `rᵀr = 0`) with no breakdown checks, returning the
/// initial residual and every iterate.
pub fn cg_augmented_trace(
    inst: &LcqpInstance,
    it: &IpmIterate,
    sigma_mu: f64,
    rule: CgRule,
    iters: usize,
) -> Result<(Vec<f64>, Vec<CgSnapshot>)> {
    let rhs = augmented_rhs(inst, it, sigma_mu)?;
    let op = |v: &[f64]| augmented_apply(inst, it, v);
    let rec = Recurrence { op: &op, split: inst.n, rule, checked: false };
    let mut snaps = Vec::with_capacity(iters);
    rec.run(&rhs, iters, 0.0, |s| snaps.push(s.clone()))?;
    Ok((rhs, snaps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
        move |v: &[f64]| v.iter().zip(&d).map(|(a, b)| a * b).collect()
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let op = diag(vec![1.0; 3]);
        for rule in [CgRule::AsWritten, CgRule::Textbook] {
            let out = cg_standard(&op, &[1.0, -2.0, 3.0], 3, 1e-14, rule).unwrap();
            assert_eq!(out.solution, vec![1.0, -2.0, 3.0]);
            assert_eq!(out.iterations, 1);
        }
    }

    #[test]
    fn textbook_rule_solves_diagonal_system() {
        let op = diag(vec![1.0, 2.0]);
        let out = cg_standard(&op, &[1.0, 2.0], 2, 0.0, CgRule::Textbook).unwrap();
        assert!((out.solution[0] - 1.0).abs() < 1e-14 && (out.solution[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn as_written_rule_follows_its_recurrence() {
        // Hand trace on diag(1, 2), b = (1, 2):
        // α₁ = 5/9, w₁ = (5/9, 10/9), r₁ = (4/9, −2/9), β₁ = 4/81,
        // p₁ = (40/81, −10/81), α₂ = (20/81)/(24/81) = 5/6,
        // w₂ = w₁ + α₂ p₁ = (235/243, 245/243).
        let op = diag(vec![1.0, 2.0]);
        let out = cg_standard(&op, &[1.0, 2.0], 2, 0.0, CgRule::AsWritten).unwrap();
        assert!((out.solution[0] - 235.0 / 243.0).abs() < 1e-14);
        assert!((out.solution[1] - 245.0 / 243.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_operator_breaks_down() {
        let op = diag(vec![1.0, -1.0]);
        let err = cg_standard(&op, &[1.0, 1.0], 2, 0.0, CgRule::AsWritten).unwrap_err();
        assert!(matches!(err, LcqpError::Breakdown { iteration: 0, .. }));
    }
}
