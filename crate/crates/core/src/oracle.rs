//! Exhaustive active-set oracle for tiny instances.
//!
//! Every subset of variables pinned to zero defines an equality-constrained
//! QP on the remaining ones. Its stationarity system is solved densely; the
//! best nonnegative candidate over all subsets is the global optimum.

use nalgebra::{DMatrix, DVector};

use crate::error::{LcqpError, Result};
use crate::problem::{objective, LcqpInstance};

pub const ENUMERATION_LIMIT: usize = 12;

const NEG_TOL: f64 = -1e-9;
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub lambda: Vec<f64>,
    pub s: Vec<f64>,
}

pub fn brute_force_optimum(inst: &LcqpInstance) -> Result<BruteForceSolution> {
    let n = inst.n;
    if n > ENUMERATION_LIMIT {
        return Err(LcqpError::TooLarge { n, limit: ENUMERATION_LIMIT });
    }
    let q = inst.q.to_dense();
    let a = inst.a.to_dense();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    for mask in 0u32..(1u32 << n) {
        let free: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let Some((x, lambda)) = solve_face(&q, &a, &inst.b, &inst.c, &free) else {
            continue;
        };
        if x.iter().any(|&v| v < NEG_TOL) {
            continue;
        }
        let obj = objective(inst, &x)?;
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, x, lambda));
        }
    }

    let (obj, x, lambda) = best.ok_or(LcqpError::Infeasible)?;
    let qx = inst.q.mul_vec(&x)?;
    let atl = inst.a.tr_mul_vec(&lambda)?;
    let s = (0..n).map(|i| qx[i] + inst.c[i] - atl[i]).collect();
    Ok(BruteForceSolution { x, objective: obj, lambda, s })
}

/// Solves `[[Q_FF, −A_Fᵀ], [A_F, 0]] [x_F; λ] = [−c_F; b]`. Returns `None`
/// for singular systems.
fn solve_face(
    q: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &[f64],
    c: &[f64],
    free: &[usize],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let (m, n) = a.shape();
    let k = free.len();
    let dim = k + m;
    let mut x = vec![0.0; n];
    if dim == 0 {
        return Some((x, Vec::new()));
    }
    if k < m {
        return None;
    }
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (r, &i) in free.iter().enumerate() {
        for (col, &j) in free.iter().enumerate() {
            kkt[(r, col)] = q[(i, j)];
        }
        for row in 0..m {
            kkt[(r, k + row)] = -a[(row, i)];
            kkt[(k + row, r)] = a[(row, i)];
        }
        rhs[r] = -c[i];
    }
    for row in 0..m {
        rhs[k + row] = b[row];
    }
    let scale = kkt.amax().max(1.0);
    let lu = kkt.clone().lu();
    let u = lu.u();
    if (0..dim).any(|i| u[(i, i)].abs() <= PIVOT_TOL * scale) {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    let resid = (&kkt * &sol - &rhs).amax();
    if !resid.is_finite() || resid > 1e-8 * scale.max(rhs.amax()) {
        return None;
    }
    for (r, &i) in free.iter().enumerate() {
        x[i] = sol[r];
    }
    let lambda = (0..m).map(|row| sol[k + row]).collect();
    Some((x, lambda))
}
