use nalgebra::{DMatrix, DVector};

use crate::error::{LcqpError, Result};
use crate::ipm::cg::augmented_rhs;
use crate::ipm::{AugmentedSolve, IpmIterate, SolvePath};
use crate::problem::LcqpInstance;

const REFINEMENT_STEPS: usize = 2;

/// Dense augmented matrix `[[Q + X⁻¹S, −Aᵀ], [−A, 0]]`.
pub fn augmented_matrix(inst: &LcqpInstance, it: &IpmIterate) -> DMatrix<f64> {
    let (n, m) = (inst.n, inst.m);
    let mut p = DMatrix::zeros(n + m, n + m);
    for &(i, j, v) in inst.q.entries() {
        p[(i, j)] = v;
    }
    for i in 0..n {
        p[(i, i)] += it.s[i] / it.x[i];
    }
    for &(r, j, v) in inst.a.entries() {
        p[(j, n + r)] = -v;
        p[(n + r, j)] = -v;
    }
    p
}

/// LU solve of the augmented system with iterative refinement.
pub fn direct_augmented_solve(inst: &LcqpInstance, it: &IpmIterate, sigma_mu: f64) -> Result<AugmentedSolve> {
    let n = inst.n;
    let p = augmented_matrix(inst, it);
    let rhs = DVector::from_vec(augmented_rhs(inst, it, sigma_mu)?);
    let lu = p.clone().lu();
    let mut w = lu.solve(&rhs).ok_or(LcqpError::Singular)?;
    let target = 1e-8 * rhs.amax();
    for _ in 0..REFINEMENT_STEPS {
        let resid = &rhs - &p * &w;
        if resid.amax() <= target {
            break;
        }
        w += lu.solve(&resid).ok_or(LcqpError::Singular)?;
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(LcqpError::Singular);
    }
    Ok(AugmentedSolve {
        dx: w.rows(0, n).iter().copied().collect(),
        dlambda: w.rows(n, inst.m).iter().copied().collect(),
        path: SolvePath::Direct,
    })
}
