//! Seeded generators for generic QPs, soft-margin SVMs and Markowitz
//! portfolios, all emitted in standard form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LcqpError, Result};
use crate::nullspace::{compute_nullspace, feasible_initial_point};
use crate::problem::{to_equality_form, LcqpInstance, RowSense};
use crate::rng::SeededRng;
use crate::sparse::SparseMatrix;

/// Attempts per instance before giving up on rank or feasibility.
pub const MAX_RETRIES: usize = 100;

/// Diagonal floor added to `LLᵀ`.
pub const SPD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Generic,
    Svm,
    Portfolio,
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "generic" => Ok(Family::Generic),
            "svm" => Ok(Family::Svm),
            "portfolio" => Ok(Family::Portfolio),
            _ => Err(format!("unknown family `{s}` (expected generic, svm or portfolio)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: Family,
    /// Variables before slack conversion (features for SVM, assets for
    /// portfolio).
    pub n: usize,
    /// Inequality rows (data points for SVM); ignored for portfolio.
    pub m: usize,
    /// Keep-probability of each entry of `A` (of `X` for SVM).
    pub density_a: f64,
    /// Keep-probability of each off-diagonal entry of the Cholesky-like factor.
    pub density_q: f64,
    pub svm_lambda: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { family: Family::Generic, n: 20, m: 10, density_a: 0.5, density_q: 0.3, svm_lambda: 1.0, seed: 0 }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_density = |d: f64| d > 0.0 && d <= 1.0;
        if !ok_density(self.density_a) || !ok_density(self.density_q) {
            return Err(LcqpError::Invalid("densities must lie in (0, 1]".into()));
        }
        if self.n == 0 || (self.family != Family::Portfolio && self.m == 0) {
            return Err(LcqpError::Invalid("n and m must be at least 1".into()));
        }
        if self.family == Family::Svm && !self.m.is_multiple_of(2) {
            return Err(LcqpError::Invalid("SVM needs an even number of data points".into()));
        }
        if self.family == Family::Portfolio && self.n < 2 {
            return Err(LcqpError::Invalid("portfolio needs at least 2 assets".into()));
        }
        Ok(())
    }

    /// Same settings with `seed = base + index`.
    pub fn with_index(&self, index: u64) -> Self {
        Self { seed: self.seed.wrapping_add(index), ..self.clone() }
    }
}

/// `LLᵀ + 1e−3·I` with `L` unit lower-triangular; each off-diagonal entry is
/// standard normal and kept with probability `density`.
pub fn make_sparse_spd(n: usize, density: f64, rng: &mut SeededRng) -> SparseMatrix {
    let mut l = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = rng.normal();
            if rng.bernoulli(density) {
                l[(i, j)] = v;
            }
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in 0..=j {
                acc += l[(i, k)] * l[(j, k)];
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc;
        }
        m[(i, i)] += SPD_FLOOR;
    }
    SparseMatrix::from_dense(&m)
}

/// Draws a sparse row-major matrix; rows left empty by dropout are redrawn.
fn sparse_normal_rows(rows: usize, cols: usize, density: f64, rng: &mut SeededRng, shift: impl Fn(usize) -> f64, scale: f64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        loop {
            let mut any = false;
            for j in 0..cols {
                let v = shift(i) + scale * rng.normal();
                let keep = rng.bernoulli(density);
                x[(i, j)] = if keep { v } else { 0.0 };
                any |= keep && v != 0.0;
            }
            if any {
                break;
            }
        }
    }
    x
}

fn accept(inst: &LcqpInstance) -> bool {
    compute_nullspace(&inst.a).is_ok() && feasible_initial_point(inst).is_ok()
}

fn with_retries(cfg: &GenConfig, mut draw: impl FnMut(&mut SeededRng) -> Result<LcqpInstance>) -> Result<LcqpInstance> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    for attempt in 0..MAX_RETRIES {
        let inst = draw(&mut rng)?;
        if accept(&inst) {
            if attempt > 0 {
                log::debug!("seed {}: accepted after {} redraws", cfg.seed, attempt);
            }
            return Ok(inst);
        }
    }
    Err(LcqpError::Infeasible)
}

/// `min ½xᵀQx + cᵀx  s.t. Ax ≤ b, x ≥ 0`, then slacks.
/// Draw order: `A` (row-major), `b`, `c`, `Q`.
pub fn gen_generic(cfg: &GenConfig) -> Result<LcqpInstance> {
    let (n, m) = (cfg.n, cfg.m);
    with_retries(cfg, |rng| {
        let a = sparse_normal_rows(m, n, cfg.density_a, rng, |_| 0.0, 1.0);
        let b = rng.normal_vec(m);
        let c = rng.normal_vec(n);
        let q = make_sparse_spd(n, cfg.density_q, rng);
        to_equality_form(&q, &SparseMatrix::from_dense(&a), &b, &c, &vec![RowSense::Le; m])
    })
}

/// `min wᵀw + λ1ᵀξ  s.t. y ⊙ Xw ≥ 1 − ξ, ξ ≥ 0` with `w = w⁺ − w⁻`.
/// Variables are `(w⁺, w⁻, ξ, slacks)`. The objective uses
/// `w⁺ᵀw⁺ + w⁻ᵀw⁻`, which agrees with `wᵀw` at every optimum because an
/// optimum never has `w⁺_i w⁻_i > 0`.
pub fn gen_svm(cfg: &GenConfig) -> Result<LcqpInstance> {
    let (n, m) = (cfg.n, cfg.m);
    let nt = n as f64 * cfg.density_a;
    let (mean, std) = (1.0 / nt, (1.0 / nt).sqrt());
    let half = m / 2;
    with_retries(cfg, |rng| {
        // First half: mean −1/(nτ), label +1; second half: mean +1/(nτ), label −1.
        let x = sparse_normal_rows(m, n, cfg.density_a, rng, |i| if i < half { -mean } else { mean }, std);
        let mut a = Vec::new();
        for i in 0..m {
            let y = if i < half { 1.0 } else { -1.0 };
            for j in 0..n {
                let v = y * x[(i, j)];
                if v != 0.0 {
                    a.push((i, j, v));
                    a.push((i, n + j, -v));
                }
            }
            a.push((i, 2 * n + i, 1.0));
        }
        let nv = 2 * n + m;
        let a = SparseMatrix::from_triplets(m, nv, a)?;
        let q = SparseMatrix::symmetric_from_triplets(nv, (0..2 * n).map(|i| (i, i, 2.0)).collect())?;
        let mut c = vec![0.0; nv];
        c[2 * n..].iter_mut().for_each(|v| *v = cfg.svm_lambda);
        to_equality_form(&q, &a, &vec![1.0; m], &c, &vec![RowSense::Ge; m])
    })
}

/// `min xᵀΣx  s.t. μᵀx = r, 1ᵀx = 1, x ≥ 0`, so `Q = 2Σ`, `c = 0`.
/// Draw order: `Σ`, `μ`, `r`.
pub fn gen_portfolio(cfg: &GenConfig) -> Result<LcqpInstance> {
    let n = cfg.n;
    with_retries(cfg, |rng| {
        let sigma = make_sparse_spd(n, cfg.density_q, rng);
        let mu = rng.normal_vec(n);
        let r = rng.uniform();
        let mut a: Vec<_> = mu.iter().enumerate().map(|(j, &v)| (0, j, v)).collect();
        a.extend((0..n).map(|j| (1, j, 1.0)));
        LcqpInstance::new(
            sigma.map_values(|v| 2.0 * v),
            SparseMatrix::from_triplets(2, n, a)?,
            vec![r, 1.0],
            vec![0.0; n],
        )
    })
}

pub fn generate(cfg: &GenConfig) -> Result<LcqpInstance> {
    match cfg.family {
        Family::Generic => gen_generic(cfg),
        Family::Svm => gen_svm(cfg),
        Family::Portfolio => gen_portfolio(cfg),
    }
}
