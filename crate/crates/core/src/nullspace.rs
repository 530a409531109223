//! Orthonormal kernel basis of `A` via Householder QR of `Aᵀ`, the induced
//! orthogonal projector, and a strictly interior feasible starting point.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, LcqpError, Result};
use crate::ipm::{self, IpmConfig};
use crate::problem::{primal_residual, LcqpInstance};
use crate::sparse::SparseMatrix;

/// Relative rank tolerance on the diagonal of R.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NullSpaceProjector {
    basis: DMatrix<f64>,
}

impl NullSpaceProjector {
    /// `n × (n − m)` matrix with orthonormal columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `B (Bᵀ d)`.
    pub fn project(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len("projected vector", d.len(), self.n())?;
        let d = DVector::from_column_slice(d);
        let coeff = self.basis.tr_mul(&d);
        Ok((&self.basis * coeff).as_slice().to_vec())
    }
}

pub fn compute_nullspace(a: &SparseMatrix) -> Result<NullSpaceProjector> {
    let (m, n) = (a.rows(), a.cols());
    if m > n {
        return Err(LcqpError::Dimension(format!("A is {m}x{n}; need m <= n")));
    }
    let tol = RANK_TOL * a.frobenius_norm();
    let mut w = a.to_dense().transpose();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(m);

    for k in 0..m {
        let x: DVector<f64> = w.view((k, k), (n - k, 1)).column(0).clone_owned();
        let norm = x.norm();
        if norm <= tol {
            return Err(LcqpError::RankDeficient { pivot: norm, tol });
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vn = v.norm();
        if vn > 0.0 {
            v /= vn;
            let mut tail = w.view_mut((k, k), (n - k, m - k));
            let proj = v.tr_mul(&tail);
            tail -= 2.0 * &v * proj;
        }
        reflectors.push(v);
    }

    // Trailing columns of Q = H_0 H_1 ... H_{m-1}.
    let mut basis = DMatrix::zeros(n, n - m);
    for j in 0..n - m {
        let mut e = DVector::zeros(n);
        e[m + j] = 1.0;
        for (k, v) in reflectors.iter().enumerate().rev() {
            let mut seg = e.rows_mut(k, n - k);
            let dotv = v.dot(&seg);
            seg.axpy(-2.0 * dotv, v, 1.0);
        }
        basis.set_column(j, &e);
    }
    Ok(NullSpaceProjector { basis })
}

/// Residual accepted for `x0`.
const FEAS_TOL: f64 = 1e-8;

/// Strictly positive `x0` with `‖Ax0 − b‖∞ ≤ 1e−8`, obtained by running the
/// interior-point method on the same constraints with a zero objective.
///
/// The run stops at the first iterate from which a least-norm correction
/// lands on a strictly positive point. Running on to full primal feasibility
/// would drift outward on unbounded regions as the dual slacks vanish, and a
/// start far from the optimum makes the learned search harder.
pub fn feasible_initial_point(inst: &LcqpInstance) -> Result<Vec<f64>> {
    let zero = LcqpInstance::new(
        SparseMatrix::zeros(inst.n, inst.n),
        inst.a.clone(),
        inst.b.clone(),
        vec![0.0; inst.n],
    )?;
    let cfg = IpmConfig::default();
    let mut found = None;
    let accept = |x: &[f64]| -> bool { x.iter().all(|&v| v > 0.0) && primal_residual(inst, x).is_ok_and(|r| r <= FEAS_TOL) };
    let run = ipm::run_until(&zero, &cfg, |it, res| {
        if res.primal <= FEAS_TOL && accept(&it.x) {
            found = Some(it.x.clone());
            return true;
        }
        if inst.m > 0 && res.primal > 0.0 {
            if let Some(p) = least_norm_correction(inst, &it.x).filter(|p| accept(p)) {
                found = Some(p);
                return true;
            }
        }
        false
    });
    match run {
        // One more correction removes what is left of the residual.
        Ok(_) => found.map(|x| polish(inst, x)).ok_or(LcqpError::Infeasible),
        Err(LcqpError::NonConvergence { .. } | LcqpError::Singular) => Err(LcqpError::Infeasible),
        Err(e) => Err(e),
    }
}

fn polish(inst: &LcqpInstance, x: Vec<f64>) -> Vec<f64> {
    if inst.m == 0 {
        return x;
    }
    match least_norm_correction(inst, &x) {
        Some(p) if p.iter().all(|&v| v > 0.0) && primal_residual(inst, &p).ok() <= primal_residual(inst, &x).ok() => p,
        _ => x,
    }
}

/// `x − Aᵀ(AAᵀ)⁻¹(Ax − b)`.
fn least_norm_correction(inst: &LcqpInstance, x: &[f64]) -> Option<Vec<f64>> {
    let a = inst.a.to_dense();
    let r: Vec<f64> = inst.a.mul_vec(x).ok()?.iter().zip(&inst.b).map(|(l, r)| l - r).collect();
    let gram = &a * a.transpose();
    let y = gram.cholesky()?.solve(&DVector::from_vec(r));
    let corr = a.tr_mul(&y);
    Some(x.iter().zip(corr.iter()).map(|(xi, ci)| xi - ci).collect())
}

/// Moves an approximate solution onto `{Ax = b}` while keeping its zero
/// pattern: coordinates `≤ zero_tol` become exactly 0 and the rest receive
/// the least-norm correction. `None` if the kept columns do not have full row
/// rank or the correction leaves the orthant.
pub fn snap_to_face(inst: &LcqpInstance, x: &[f64], zero_tol: f64) -> Result<Option<Vec<f64>>> {
    check_len("x", x.len(), inst.n)?;
    let free: Vec<usize> = (0..inst.n).filter(|&i| x[i] > zero_tol).collect();
    let a = inst.a.to_dense();
    let a_free = a.select_columns(&free);
    let x_free = DVector::from_iterator(free.len(), free.iter().map(|&i| x[i]));
    let r = &a_free * &x_free - DVector::from_column_slice(&inst.b);
    let Some(chol) = (&a_free * a_free.transpose()).cholesky() else {
        return Ok(None);
    };
    let corr = a_free.tr_mul(&chol.solve(&r));
    let mut out = vec![0.0; inst.n];
    for (k, &i) in free.iter().enumerate() {
        out[i] = x_free[k] - corr[k];
        if out[i] < 0.0 {
            return Ok(None);
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_kernel() {
        let a = SparseMatrix::from_triplets(1, 3, vec![(0, 0, 1.0)]).unwrap();
        let p = compute_nullspace(&a).unwrap();
        assert_eq!(p.dim(), 2);
        for j in 0..2 {
            assert!(p.basis()[(0, j)].abs() < 1e-15);
        }
    }

    #[test]
    fn identity_has_trivial_kernel() {
        let p = compute_nullspace(&SparseMatrix::identity(3)).unwrap();
        assert_eq!(p.dim(), 0);
        assert_eq!(p.project(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn projection_onto_difference_direction() {
        let a = SparseMatrix::from_triplets(1, 2, vec![(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let p = compute_nullspace(&a).unwrap();
        let d = p.project(&[1.0, 0.0]).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] + 0.5).abs() < 1e-15);
        let k = p.project(&[2.0, -2.0]).unwrap();
        assert!((k[0] - 2.0).abs() < 1e-12 && (k[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let a = SparseMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 2.0)]).unwrap();
        assert!(matches!(compute_nullspace(&a), Err(LcqpError::RankDeficient { .. })));
        assert!(matches!(compute_nullspace(&SparseMatrix::zeros(1, 2)), Err(LcqpError::RankDeficient { .. })));
    }

    #[test]
    fn interior_point_on_simplex() {
        let inst = LcqpInstance::new(
            SparseMatrix::zeros(2, 2),
            SparseMatrix::from_triplets(1, 2, vec![(0, 0, 1.0), (0, 1, 1.0)]).unwrap(),
            vec![1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = feasible_initial_point(&inst).unwrap();
        assert!(x.iter().all(|&v| v > 0.0));
        assert!((x[0] + x[1] - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn infeasible_constraints_are_reported() {
        let inst = LcqpInstance::new(
            SparseMatrix::zeros(2, 2),
            SparseMatrix::from_triplets(1, 2, vec![(0, 0, 1.0), (0, 1, 1.0)]).unwrap(),
            vec![-1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(feasible_initial_point(&inst), Err(LcqpError::Infeasible));
    }

    #[test]
    fn snap_keeps_zero_pattern() {
        let inst = LcqpInstance::new(
            SparseMatrix::zeros(3, 3),
            SparseMatrix::from_triplets(1, 3, vec![(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)]).unwrap(),
            vec![1.0],
            vec![0.0; 3],
        )
        .unwrap();
        let y = snap_to_face(&inst, &[0.6, 0.4 + 1e-9, 1e-12], 1e-9).unwrap().unwrap();
        assert_eq!(y[2], 0.0);
        assert!((y[0] + y[1] - 1.0).abs() <= 1e-15);
        assert!((y[0] - 0.6 + 5e-10).abs() <= 1e-15);
        // Pinning both remaining columns leaves an empty face.
        assert_eq!(snap_to_face(&inst, &[0.0, 0.0, 1e-12], 1e-9).unwrap(), None);
    }
}
