//! Heterogeneous graph view of an instance: one node per variable, one per
//! constraint and optionally a global node linked to all others.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::problem::LcqpInstance;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Var(usize),
    Cons(usize),
}

/// Directed arc used by message passing: `dst` receives `weight · msg(src)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub dst: usize,
    pub src: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemGraph {
    pub n: usize,
    pub m: usize,
    pub has_global: bool,
    /// `b`, one scalar per constraint node.
    pub cons_feat: Vec<f64>,
    /// `c`, one scalar per variable node.
    pub var_feat: Vec<f64>,
    /// `(constraint, variable, A_cv)`, row-major.
    pub a_edges: Vec<(usize, usize, f64)>,
    /// `(v, u, Q_vu)` with `v ≤ u`, row-major. Each off-diagonal pair is
    /// stored once; the diagonal appears as self-loops.
    pub q_edges: Vec<(usize, usize, f64)>,
    /// Unit-weight links from the global node, variables first.
    pub global_edges: Vec<Node>,
}

pub fn encode(inst: &LcqpInstance, has_global: bool) -> ProblemGraph {
    let a_edges = inst.a.entries().to_vec();
    let q_edges = inst.q.entries().iter().copied().filter(|&(i, j, _)| i <= j).collect();
    let global_edges = if has_global {
        (0..inst.n).map(Node::Var).chain((0..inst.m).map(Node::Cons)).collect()
    } else {
        Vec::new()
    };
    ProblemGraph {
        n: inst.n,
        m: inst.m,
        has_global,
        cons_feat: inst.b.clone(),
        var_feat: inst.c.clone(),
        a_edges,
        q_edges,
        global_edges,
    }
}

impl ProblemGraph {
    pub fn node_count(&self) -> usize {
        self.n + self.m + usize::from(self.has_global)
    }

    /// Rebuilds `(Q, A, b, c)`.
    pub fn decode(&self) -> Result<LcqpInstance> {
        let mut q = Vec::with_capacity(2 * self.q_edges.len());
        for &(v, u, w) in &self.q_edges {
            q.push((v, u, w));
            if v != u {
                q.push((u, v, w));
            }
        }
        LcqpInstance::new(
            SparseMatrix::symmetric_from_triplets(self.n, q)?,
            SparseMatrix::from_triplets(self.m, self.n, self.a_edges.clone())?,
            self.cons_feat.clone(),
            self.var_feat.clone(),
        )
    }

    /// Variable → constraint arcs, grouped by constraint in index order.
    pub fn arcs_var_to_cons(&self) -> Vec<Arc> {
        self.a_edges.iter().map(|&(c, v, w)| Arc { dst: c, src: v, weight: w }).collect()
    }

    /// Constraint → variable arcs, grouped by variable in index order.
    pub fn arcs_cons_to_var(&self) -> Vec<Arc> {
        let mut arcs: Vec<Arc> = self.a_edges.iter().map(|&(c, v, w)| Arc { dst: v, src: c, weight: w }).collect();
        arcs.sort_by_key(|a| (a.dst, a.src));
        arcs
    }

    /// Variable → variable arcs in both directions (self-loops once), grouped
    /// by receiver in index order.
    pub fn arcs_var_to_var(&self) -> Vec<Arc> {
        let mut arcs = Vec::with_capacity(2 * self.q_edges.len());
        for &(v, u, w) in &self.q_edges {
            arcs.push(Arc { dst: v, src: u, weight: w });
            if v != u {
                arcs.push(Arc { dst: u, src: v, weight: w });
            }
        }
        arcs.sort_by_key(|a| (a.dst, a.src));
        arcs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> LcqpInstance {
        LcqpInstance::new(
            SparseMatrix::symmetric_from_triplets(2, vec![(0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5), (1, 0, 0.5)]).unwrap(),
            SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, -1.0)]).unwrap(),
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn counts() {
        let g = encode(&two_by_two(), true);
        assert_eq!(g.node_count(), 5);
        assert_eq!((g.a_edges.len(), g.q_edges.len(), g.global_edges.len()), (3, 3, 4));
        let g = encode(&two_by_two(), false);
        assert!(g.global_edges.is_empty());
    }

    #[test]
    fn lp_has_no_q_edges() {
        let mut inst = two_by_two();
        inst.q = SparseMatrix::zeros(2, 2);
        assert!(encode(&inst, false).q_edges.is_empty());
    }

    #[test]
    fn round_trip() {
        let inst = two_by_two();
        assert_eq!(encode(&inst, true).decode().unwrap(), inst);
    }

    #[test]
    fn symmetric_arcs() {
        let g = encode(&two_by_two(), false);
        let arcs = g.arcs_var_to_var();
        assert_eq!(arcs.len(), 4);
        assert_eq!(arcs[0], Arc { dst: 0, src: 0, weight: 2.0 });
        assert_eq!(arcs[1], Arc { dst: 0, src: 1, weight: 0.5 });
    }
}
