use nalgebra::DMatrix;

use crate::graph::Arc;
use crate::rng::SeededRng;

/// Affine map `X W + 1 bᵀ` acting on row-stacked inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`.
    pub w: DMatrix<f64>,
    /// `1 × out`.
    pub b: DMatrix<f64>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = DMatrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_in(-limit, limit));
        Self { w, b: DMatrix::zeros(1, fan_out) }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: DMatrix::zeros(fan_in, fan_out), b: DMatrix::zeros(1, fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.w;
        for j in 0..y.ncols() {
            let bj = self.b[(0, j)];
            y.column_mut(j).add_scalar_mut(bj);
        }
        y
    }

    pub fn forward_relu(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        relu(self.forward(x))
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Linear) -> DMatrix<f64> {
        grad.w += x.tr_mul(dy);
        for j in 0..dy.ncols() {
            grad.b[(0, j)] += dy.column(j).sum();
        }
        dy * self.w.transpose()
    }

    /// Backward through `relu(forward(x))` given the post-activation output.
    pub fn backward_relu(&self, x: &DMatrix<f64>, out: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Linear) -> DMatrix<f64> {
        self.backward(x, &relu_grad(dy, out), grad)
    }
}

pub fn relu(x: DMatrix<f64>) -> DMatrix<f64> {
    x.map(|v| v.max(0.0))
}

/// Masks `dy` by `out > 0`.
pub fn relu_grad(dy: &DMatrix<f64>, out: &DMatrix<f64>) -> DMatrix<f64> {
    dy.zip_map(out, |g, h| if h > 0.0 { g } else { 0.0 })
}

/// `out[dst] += w · src[src]` over `arcs`.
pub fn scatter(arcs: &[Arc], src: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, src.ncols());
    for k in 0..src.ncols() {
        let s = src.column(k);
        let mut o = out.column_mut(k);
        for a in arcs {
            o[a.dst] += a.weight * s[a.src];
        }
    }
    out
}

/// Adjoint of [`scatter`]: `out[src] += w · g[dst]`.
pub fn scatter_adjoint(arcs: &[Arc], g: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, g.ncols());
    for k in 0..g.ncols() {
        let gk = g.column(k);
        let mut o = out.column_mut(k);
        for a in arcs {
            o[a.src] += a.weight * gk[a.dst];
        }
    }
    out
}

/// `scale · Σ_rows x` as a `1 × d` matrix.
pub fn col_sum(x: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(1, x.ncols(), |_, j| scale * x.column(j).sum())
}

/// Repeats a `1 × d` row `rows` times.
pub fn broadcast(x: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, x.ncols(), |_, j| x[(0, j)])
}

pub fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        out.columns_mut(off, p.ncols()).copy_from(p);
        off += p.ncols();
    }
    out
}

/// Column block `[k·d, (k+1)·d)`.
pub fn block(x: &DMatrix<f64>, k: usize, d: usize) -> DMatrix<f64> {
    x.columns(k * d, d).clone_owned()
}
