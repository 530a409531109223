//! Standard-form instances `min ½xᵀQx + cᵀx  s.t. Ax = b, x ≥ 0` and the
//! metrics used to score candidate solutions.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, LcqpError, Result};
use crate::rng::SeededRng;
use crate::sparse::SparseMatrix;

/// Tolerances applied to a stored optimum.
const X_STAR_FEAS_TOL: f64 = 1e-6;
const X_STAR_NEG_TOL: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct LcqpInstance {
    pub n: usize,
    pub m: usize,
    pub q: SparseMatrix,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub x_star: Option<Vec<f64>>,
    /// Interior-point iterates, index 0 being the starting point.
    pub trajectory: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    m: usize,
    q: Vec<(usize, usize, f64)>,
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trajectory: Option<Vec<Vec<f64>>>,
}

impl TryFrom<InstanceFile> for LcqpInstance {
    type Error = LcqpError;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let q = SparseMatrix::symmetric_from_triplets(f.n, f.q)?;
        let a = SparseMatrix::from_triplets(f.m, f.n, f.a)?;
        let mut inst = LcqpInstance::new(q, a, f.b, f.c)?;
        if let Some(x) = f.x_star {
            inst.set_x_star(x)?;
        }
        if let Some(t) = f.trajectory {
            inst.set_trajectory(t)?;
        }
        Ok(inst)
    }
}

impl From<LcqpInstance> for InstanceFile {
    fn from(i: LcqpInstance) -> Self {
        InstanceFile {
            n: i.n,
            m: i.m,
            q: i.q.entries().to_vec(),
            a: i.a.entries().to_vec(),
            b: i.b,
            c: i.c,
            x_star: i.x_star,
            trajectory: i.trajectory,
        }
    }
}

impl LcqpInstance {
    /// Checks shapes and symmetry of `q`. Rank and PSD are checked elsewhere
    /// (see [`crate::nullspace::compute_nullspace`] and [`Self::psd_check`]).
    pub fn new(q: SparseMatrix, a: SparseMatrix, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = c.len();
        let m = b.len();
        if q.rows() != n || q.cols() != n {
            return Err(LcqpError::Dimension(format!(
                "Q is {}x{}, expected {n}x{n}",
                q.rows(),
                q.cols()
            )));
        }
        if a.rows() != m || a.cols() != n {
            return Err(LcqpError::Dimension(format!(
                "A is {}x{}, expected {m}x{n}",
                a.rows(),
                a.cols()
            )));
        }
        if !q.is_symmetric() && q.nnz() > 0 {
            let q2 = SparseMatrix::symmetric_from_triplets(n, q.entries().to_vec())?;
            return Self::new(q2, a, b, c);
        }
        if b.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(LcqpError::Invalid("non-finite b or c".into()));
        }
        Ok(Self { n, m, q, a, b, c, x_star: None, trajectory: None })
    }

    pub fn set_x_star(&mut self, x: Vec<f64>) -> Result<()> {
        check_len("x_star", x.len(), self.n)?;
        let r = primal_residual(self, &x)?;
        if r > X_STAR_FEAS_TOL {
            return Err(LcqpError::Invalid(format!("x_star violates Ax = b by {r:.3e}")));
        }
        if x.iter().any(|&v| v < X_STAR_NEG_TOL) {
            return Err(LcqpError::Invalid("x_star has negative entries".into()));
        }
        self.x_star = Some(x);
        Ok(())
    }

    pub fn set_trajectory(&mut self, t: Vec<Vec<f64>>) -> Result<()> {
        for x in &t {
            check_len("trajectory point", x.len(), self.n)?;
        }
        self.trajectory = Some(t);
        Ok(())
    }

    /// Sampled PSD test: `vᵀQv ≥ −1e−8‖v‖²` for `k` Gaussian directions.
    pub fn psd_check(&self, k: usize, seed: u64) -> bool {
        let mut rng = SeededRng::new(seed);
        (0..k).all(|_| {
            let v: Vec<f64> = (0..self.n).map(|_| rng.normal()).collect();
            let qv = self.q.mul_vec(&v).expect("shape checked");
            let quad: f64 = v.iter().zip(&qv).map(|(a, b)| a * b).sum();
            let norm2: f64 = v.iter().map(|a| a * a).sum();
            quad >= -1e-8 * norm2
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `½xᵀQx + cᵀx`.
pub fn objective(inst: &LcqpInstance, x: &[f64]) -> Result<f64> {
    check_len("x", x.len(), inst.n)?;
    let qx = inst.q.mul_vec(x)?;
    Ok(0.5 * dot(x, &qx) + dot(&inst.c, x))
}

/// `‖Ax − b‖∞`.
pub fn primal_residual(inst: &LcqpInstance, x: &[f64]) -> Result<f64> {
    let ax = inst.a.mul_vec(x)?;
    Ok(ax.iter().zip(&inst.b).fold(0.0_f64, |m, (l, r)| m.max((l - r).abs())))
}

/// Mean over rows of `|A_i x − b_i| / max{|b_i|, max_j |A_ij|}`. A zero
/// denominator is replaced by 1.
pub fn constraint_violation(inst: &LcqpInstance, x: &[f64]) -> Result<f64> {
    check_len("x", x.len(), inst.n)?;
    if inst.m == 0 {
        return Ok(0.0);
    }
    let ax = inst.a.mul_vec(x)?;
    let row_max = inst.a.row_abs_max();
    let total: f64 = (0..inst.m)
        .map(|i| {
            let scale = inst.b[i].abs().max(row_max[i]);
            let scale = if scale == 0.0 { 1.0 } else { scale };
            (ax[i] - inst.b[i]).abs() / scale
        })
        .sum();
    Ok(total / inst.m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGap {
    pub percent: f64,
    /// Set when the reference objective is zero and the absolute error
    /// (×100) was reported instead.
    pub absolute_fallback: bool,
}

pub fn relative_objective_gap(obj_pred: f64, obj_star: f64) -> ObjectiveGap {
    if obj_star == 0.0 {
        ObjectiveGap { percent: (obj_pred - obj_star).abs() * 100.0, absolute_fallback: true }
    } else {
        ObjectiveGap {
            percent: ((obj_pred - obj_star) / obj_star).abs() * 100.0,
            absolute_fallback: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub comp: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.comp)
    }
}

pub fn kkt_residuals(inst: &LcqpInstance, x: &[f64], lambda: &[f64], s: &[f64]) -> Result<KktResiduals> {
    check_len("x", x.len(), inst.n)?;
    check_len("lambda", lambda.len(), inst.m)?;
    check_len("s", s.len(), inst.n)?;
    let primal = primal_residual(inst, x)?;
    let qx = inst.q.mul_vec(x)?;
    let atl = inst.a.tr_mul_vec(lambda)?;
    let dual = (0..inst.n).fold(0.0_f64, |m, i| m.max((qx[i] + inst.c[i] - atl[i] - s[i]).abs()));
    let comp = x.iter().zip(s).fold(0.0_f64, |m, (a, b)| m.max((a * b).abs()));
    Ok(KktResiduals { primal, dual, comp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// Adds one nonnegative slack per inequality row. Variables keep their
/// order and slacks follow in row order.
pub fn to_equality_form(
    q: &SparseMatrix,
    a: &SparseMatrix,
    b: &[f64],
    c: &[f64],
    senses: &[RowSense],
) -> Result<LcqpInstance> {
    let (m, n) = (a.rows(), a.cols());
    check_len("b", b.len(), m)?;
    check_len("c", c.len(), n)?;
    check_len("row senses", senses.len(), m)?;
    if q.rows() != n || q.cols() != n {
        return Err(LcqpError::Dimension("Q does not match A's column count".into()));
    }
    let mut entries = a.entries().to_vec();
    let mut next = n;
    for (i, sense) in senses.iter().enumerate() {
        match sense {
            RowSense::Eq => {}
            RowSense::Le => {
                entries.push((i, next, 1.0));
                next += 1;
            }
            RowSense::Ge => {
                entries.push((i, next, -1.0));
                next += 1;
            }
        }
    }
    let n_total = next;
    let a_full = SparseMatrix::from_triplets(m, n_total, entries)?;
    let q_full = SparseMatrix::symmetric_from_triplets(n_total, q.entries().to_vec())?;
    let mut c_full = c.to_vec();
    c_full.resize(n_total, 0.0);
    LcqpInstance::new(q_full, a_full, b.to_vec(), c_full)
}

/// Result of one solve or inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_obj_gap_pct: Option<f64>,
    pub cons_violation: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

impl SolveReport {
    /// Fills objective, gap (when the instance knows its optimum) and violation.
    pub fn evaluate(inst: &LcqpInstance, x: Vec<f64>, iterations: usize, wall_time: f64) -> Result<Self> {
        let obj = objective(inst, &x)?;
        let gap = match &inst.x_star {
            Some(xs) => Some(relative_objective_gap(obj, objective(inst, xs)?).percent),
            None => None,
        };
        let cons_violation = constraint_violation(inst, &x)?;
        Ok(Self { x, objective: obj, rel_obj_gap_pct: gap, cons_violation, iterations, wall_time })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(q: Vec<(usize, usize, f64)>, a: Vec<(usize, usize, f64)>, b: Vec<f64>, c: Vec<f64>) -> LcqpInstance {
        let n = c.len();
        let m = b.len();
        LcqpInstance::new(
            SparseMatrix::symmetric_from_triplets(n, q).unwrap(),
            SparseMatrix::from_triplets(m, n, a).unwrap(),
            b,
            c,
        )
        .unwrap()
    }

    #[test]
    fn objective_examples() {
        let i = tiny(vec![(0, 0, 1.0), (1, 1, 1.0)], vec![], vec![], vec![0.0, 0.0]);
        assert_eq!(objective(&i, &[1.0, 1.0]).unwrap(), 1.0);
        let i = tiny(vec![], vec![], vec![], vec![1.0, 2.0]);
        assert_eq!(objective(&i, &[3.0, 4.0]).unwrap(), 11.0);
        assert!(objective(&i, &[1.0]).is_err());
    }

    #[test]
    fn violation_examples() {
        let i = tiny(vec![], vec![(0, 0, 1.0), (0, 1, 1.0)], vec![2.0], vec![0.0, 0.0]);
        assert_eq!(constraint_violation(&i, &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(constraint_violation(&i, &[1.0, 1.0]).unwrap(), 0.0);
        let empty = tiny(vec![], vec![], vec![], vec![0.0]);
        assert_eq!(constraint_violation(&empty, &[5.0]).unwrap(), 0.0);
        // An all-zero row with b = 0 falls back to a unit denominator.
        let z = tiny(vec![], vec![], vec![0.0], vec![0.0]);
        assert_eq!(constraint_violation(&z, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn gap_examples() {
        assert!((relative_objective_gap(1.01, 1.0).percent - 1.0).abs() < 1e-12);
        assert_eq!(relative_objective_gap(3.5, 3.5).percent, 0.0);
        assert!((relative_objective_gap(-0.9, -1.0).percent - 10.0).abs() < 1e-12);
        let g = relative_objective_gap(0.02, 0.0);
        assert!(g.absolute_fallback && (g.percent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_examples() {
        let i = tiny(vec![(0, 0, 1.0), (1, 1, 1.0)], vec![(0, 0, 1.0), (0, 1, 1.0)], vec![1.0], vec![0.0, 0.0]);
        let r = kkt_residuals(&i, &[0.5, 0.5], &[0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(r, KktResiduals { primal: 0.0, dual: 0.0, comp: 0.0 });
        let i = tiny(vec![], vec![(0, 0, 1.0), (0, 1, 1.0)], vec![2.0], vec![0.0, 0.0]);
        let r = kkt_residuals(&i, &[1.0, 1.0], &[0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r, KktResiduals { primal: 0.0, dual: 1.0, comp: 1.0 });
    }

    #[test]
    fn slack_conversion() {
        let q = SparseMatrix::zeros(1, 1);
        let a = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]).unwrap();
        let i = to_equality_form(&q, &a, &[1.0], &[0.0], &[RowSense::Le]).unwrap();
        assert_eq!((i.n, i.m), (2, 1));
        assert_eq!(i.a.to_dense().as_slice(), &[1.0, 1.0]);

        let i = to_equality_form(&q, &a, &[1.0], &[3.0], &[RowSense::Eq]).unwrap();
        assert_eq!((i.n, i.m), (1, 1));
        assert_eq!(i.c, vec![3.0]);

        let i = to_equality_form(&q, &a, &[1.0], &[0.0], &[RowSense::Ge]).unwrap();
        assert_eq!(i.a.get(0, 1), -1.0);
    }

    #[test]
    fn json_round_trip_uses_exact_field_names() {
        let mut i = tiny(vec![(0, 0, 2.0)], vec![(0, 0, 1.0), (0, 1, 1.0)], vec![1.0], vec![0.5, -1.0]);
        i.set_x_star(vec![0.25, 0.75]).unwrap();
        let s = serde_json::to_string(&i).unwrap();
        assert_eq!(
            s,
            r#"{"n":2,"m":1,"q":[[0,0,2.0]],"a":[[0,0,1.0],[0,1,1.0]],"b":[1.0],"c":[0.5,-1.0],"x_star":[0.25,0.75]}"#
        );
        let back: LcqpInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, i);
    }

    #[test]
    fn infeasible_x_star_is_rejected() {
        let mut i = tiny(vec![], vec![(0, 0, 1.0)], vec![1.0], vec![0.0]);
        assert!(i.set_x_star(vec![0.5]).is_err());
        assert!(i.set_x_star(vec![1.0]).is_ok());
    }
}
