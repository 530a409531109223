//! Message-passing network over the instance graph.
//!
//! Node embeddings are lifted from `b` (constraints) and `(c, x_prev)`
//! (variables). Each layer updates constraints, then the global node (when
//! present), then variables. A message along an edge of weight `e` is
//! `e · relu(h_src W + β)`; messages are summed per receiver, concatenated
//! with the receiver's embedding and fed through `relu(· U + β)`. A two-layer
//! head maps each variable embedding to one scalar.

mod adam;
mod linear;
mod serial;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use linear::Linear;
use linear::{block, broadcast, col_sum, hcat, scatter, scatter_adjoint};

use crate::error::{check_len, Result};
use crate::graph::{Arc, ProblemGraph};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Variables, constraints and a global node; predicts the next iterate.
    IpmGuidedTripartite,
    /// Variables and constraints only; predicts a displacement.
    FeasibilityBipartite,
}

impl Mode {
    pub fn has_global(self) -> bool {
        self == Mode::IpmGuidedTripartite
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Later receivers in a layer see embeddings already updated in it.
    #[default]
    Async,
    /// Every receiver sees the previous layer's embeddings.
    Sync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Sum,
    /// Each sum divided by the receiver's in-degree for that edge type
    /// (global sums by `n` or `m`).
    DegreeNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub sync_mode: SyncMode,
    pub aggregation: Aggregation,
    pub layers: usize,
    pub hidden: usize,
}

impl ModelConfig {
    pub fn new(mode: Mode) -> Self {
        Self { mode, sync_mode: SyncMode::Async, aggregation: Aggregation::Sum, layers: 4, hidden: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub msg_vc: Linear,
    pub msg_cv: Linear,
    pub msg_vv: Linear,
    pub upd_c: Linear,
    pub upd_v: Linear,
    pub global: Option<GlobalParams>,
}

/// Weights touching the global node.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalParams {
    pub msg_gc: Linear,
    pub msg_vg: Linear,
    pub msg_cg: Linear,
    pub msg_gv: Linear,
    pub upd_g: Linear,
}

impl LayerParams {
    fn build(d: usize, tri: bool, mut make: impl FnMut(usize, usize) -> Linear) -> Self {
        let global = tri.then(|| GlobalParams {
            msg_gc: make(d, d),
            msg_vg: make(d, d),
            msg_cg: make(d, d),
            msg_gv: make(d, d),
            upd_g: make(3 * d, d),
        });
        let k = usize::from(tri);
        Self {
            msg_vc: make(d, d),
            msg_cv: make(d, d),
            msg_vv: make(d, d),
            upd_c: make((2 + k) * d, d),
            upd_v: make((3 + k) * d, d),
            global,
        }
    }

    fn linears(&self) -> Vec<&Linear> {
        let mut v = vec![&self.msg_vc, &self.msg_cv, &self.msg_vv, &self.upd_c, &self.upd_v];
        if let Some(g) = &self.global {
            v.extend([&g.msg_gc, &g.msg_vg, &g.msg_cg, &g.msg_gv, &g.upd_g]);
        }
        v
    }

    fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.msg_vc, &mut self.msg_cv, &mut self.msg_vv, &mut self.upd_c, &mut self.upd_v];
        if let Some(g) = &mut self.global {
            v.extend([&mut g.msg_gc, &mut g.msg_vg, &mut g.msg_cg, &mut g.msg_gv, &mut g.upd_g]);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpnnModel {
    pub config: ModelConfig,
    pub lift_c: Linear,
    pub lift_v: Linear,
    pub layers: Vec<LayerParams>,
    pub head: [Linear; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub h_c: DMatrix<f64>,
    pub h_v: DMatrix<f64>,
    pub h_g: Option<DMatrix<f64>>,
}

/// Receiver-grouped arcs of one graph, weights already normalized.
#[derive(Debug, Clone)]
pub struct Topology {
    n: usize,
    m: usize,
    vc: Vec<Arc>,
    cv: Vec<Arc>,
    vv: Vec<Arc>,
    scale_v: f64,
    scale_c: f64,
}

impl Topology {
    pub fn new(graph: &ProblemGraph, aggregation: Aggregation) -> Self {
        let mut vc = graph.arcs_var_to_cons();
        let mut cv = graph.arcs_cons_to_var();
        let mut vv = graph.arcs_var_to_var();
        let (mut scale_v, mut scale_c) = (1.0, 1.0);
        if aggregation == Aggregation::DegreeNormalized {
            normalize(&mut vc, graph.m);
            normalize(&mut cv, graph.n);
            normalize(&mut vv, graph.n);
            scale_v = 1.0 / graph.n.max(1) as f64;
            scale_c = 1.0 / graph.m.max(1) as f64;
        }
        Self { n: graph.n, m: graph.m, vc, cv, vv, scale_v, scale_c }
    }
}

fn normalize(arcs: &mut [Arc], rows: usize) {
    let mut deg = vec![0usize; rows];
    for a in arcs.iter() {
        deg[a.dst] += 1;
    }
    for a in arcs.iter_mut() {
        a.weight /= deg[a.dst].max(1) as f64;
    }
}

/// Intermediate values of one layer, kept for backprop.
#[derive(Debug, Clone)]
struct LayerTape {
    input: Embeddings,
    z_vc: DMatrix<f64>,
    in_c: DMatrix<f64>,
    z_vv: DMatrix<f64>,
    z_cv: DMatrix<f64>,
    in_v: DMatrix<f64>,
    global: Option<GlobalTape>,
    output: Embeddings,
}

#[derive(Debug, Clone)]
struct GlobalTape {
    z_gc: DMatrix<f64>,
    z_vg: DMatrix<f64>,
    z_cg: DMatrix<f64>,
    in_g: DMatrix<f64>,
    z_gv: DMatrix<f64>,
}

/// Everything `backward` needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    lift_c_in: DMatrix<f64>,
    lift_v_in: DMatrix<f64>,
    layers: Vec<LayerTape>,
    head_hidden: DMatrix<f64>,
}

impl MpnnModel {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        Self::build(config, |i, o| Linear::init(i, o, &mut rng))
    }

    fn build(config: ModelConfig, mut make: impl FnMut(usize, usize) -> Linear) -> Self {
        let d = config.hidden;
        let tri = config.mode.has_global();
        let lift_c = make(1, d);
        let lift_v = make(2, d);
        let layers = (0..config.layers).map(|_| LayerParams::build(d, tri, &mut make)).collect();
        let head = [make(d, d), make(d, 1)];
        Self { config, lift_c, lift_v, layers, head }
    }

    /// Same architecture, all parameters zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self::build(self.config.clone(), Linear::zeros)
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn linears(&self) -> Vec<&Linear> {
        let mut v = vec![&self.lift_c, &self.lift_v];
        for l in &self.layers {
            v.extend(l.linears());
        }
        v.extend(self.head.iter());
        v
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut v = vec![&mut self.lift_c, &mut self.lift_v];
        for l in &mut self.layers {
            v.extend(l.linears_mut());
        }
        v.extend(self.head.iter_mut());
        v
    }

    /// Every weight and bias tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        self.linears().into_iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        self.linears_mut().into_iter().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds `scale · other` parameter-wise.
    pub fn add_scaled(&mut self, other: &MpnnModel, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b * scale;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn lift_inputs(graph: &ProblemGraph, x_prev: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let c_in = DMatrix::from_fn(graph.m, 1, |i, _| graph.cons_feat[i]);
        let v_in = DMatrix::from_fn(graph.n, 2, |i, j| if j == 0 { graph.var_feat[i] } else { x_prev[i] });
        (c_in, v_in)
    }

    pub fn init_embeddings(&self, graph: &ProblemGraph, x_prev: &[f64]) -> Result<Embeddings> {
        check_len("x_prev", x_prev.len(), graph.n)?;
        let (c_in, v_in) = Self::lift_inputs(graph, x_prev);
        Ok(self.lift(&c_in, &v_in))
    }

    fn lift(&self, c_in: &DMatrix<f64>, v_in: &DMatrix<f64>) -> Embeddings {
        let d = self.config.hidden;
        Embeddings {
            h_c: self.lift_c.forward_relu(c_in),
            h_v: self.lift_v.forward_relu(v_in),
            h_g: self.config.mode.has_global().then(|| DMatrix::zeros(1, d)),
        }
    }

    pub fn forward_layer(&self, graph: &ProblemGraph, emb: &Embeddings, layer: usize) -> Embeddings {
        let topo = Topology::new(graph, self.config.aggregation);
        self.layer_forward(&topo, emb, layer).output
    }

    fn layer_forward(&self, topo: &Topology, emb: &Embeddings, layer: usize) -> LayerTape {
        let p = &self.layers[layer];
        let sync = self.config.sync_mode == SyncMode::Sync;
        let (n, m) = (topo.n, topo.m);
        let (hc0, hv0) = (&emb.h_c, &emb.h_v);

        // Constraints.
        let z_vc = p.msg_vc.forward_relu(hv0);
        let agg_c = scatter(&topo.vc, &z_vc, m);
        let mut gtape = None;
        let in_c = match (&p.global, &emb.h_g) {
            (Some(g), Some(hg0)) => {
                let z_gc = g.msg_gc.forward_relu(hg0);
                let in_c = hcat(&[hc0, &agg_c, &broadcast(&z_gc, m)]);
                gtape = Some(z_gc);
                in_c
            }
            _ => hcat(&[hc0, &agg_c]),
        };
        let hc1 = p.upd_c.forward_relu(&in_c);
        let hc_next = if sync { hc0 } else { &hc1 };

        // Global node.
        let mut global = None;
        let mut hg1 = None;
        if let (Some(g), Some(hg0), Some(z_gc)) = (&p.global, &emb.h_g, gtape) {
            let z_vg = g.msg_vg.forward_relu(hv0);
            let z_cg = g.msg_cg.forward_relu(hc_next);
            let in_g = hcat(&[hg0, &col_sum(&z_vg, topo.scale_v), &col_sum(&z_cg, topo.scale_c)]);
            let out = g.upd_g.forward_relu(&in_g);
            let hg_next = if sync { hg0 } else { &out };
            let z_gv = g.msg_gv.forward_relu(hg_next);
            global = Some(GlobalTape { z_gc, z_vg, z_cg, in_g, z_gv });
            hg1 = Some(out);
        }

        // Variables.
        let z_vv = p.msg_vv.forward_relu(hv0);
        let z_cv = p.msg_cv.forward_relu(hc_next);
        let agg_vv = scatter(&topo.vv, &z_vv, n);
        let agg_cv = scatter(&topo.cv, &z_cv, n);
        let in_v = match &global {
            Some(gt) => hcat(&[hv0, &agg_vv, &agg_cv, &broadcast(&gt.z_gv, n)]),
            None => hcat(&[hv0, &agg_vv, &agg_cv]),
        };
        let hv1 = p.upd_v.forward_relu(&in_v);

        LayerTape {
            input: emb.clone(),
            z_vc,
            in_c,
            z_vv,
            z_cv,
            in_v,
            global,
            output: Embeddings { h_c: hc1, h_v: hv1, h_g: hg1 },
        }
    }

    /// Returns gradients w.r.t. the layer input given gradients w.r.t. its output.
    fn layer_backward(&self, topo: &Topology, layer: usize, t: &LayerTape, mut dout: Embeddings, grad: &mut LayerParams) -> Embeddings {
        let p = &self.layers[layer];
        let sync = self.config.sync_mode == SyncMode::Sync;
        let d = self.config.hidden;
        let (n, m) = (topo.n, topo.m);
        let (hc0, hv0) = (&t.input.h_c, &t.input.h_v);
        let out = &t.output;
        let mut din = Embeddings {
            h_c: DMatrix::zeros(m, d),
            h_v: DMatrix::zeros(n, d),
            h_g: t.input.h_g.as_ref().map(|_| DMatrix::zeros(1, d)),
        };

        // Variables.
        let d_in_v = p.upd_v.backward_relu(&t.in_v, &out.h_v, &dout.h_v, &mut grad.upd_v);
        din.h_v += block(&d_in_v, 0, d);
        let dz_vv = scatter_adjoint(&topo.vv, &block(&d_in_v, 1, d), n);
        din.h_v += p.msg_vv.backward_relu(hv0, &t.z_vv, &dz_vv, &mut grad.msg_vv);
        let dz_cv = scatter_adjoint(&topo.cv, &block(&d_in_v, 2, d), m);
        let hc_next = if sync { hc0 } else { &out.h_c };
        let dhc = p.msg_cv.backward_relu(hc_next, &t.z_cv, &dz_cv, &mut grad.msg_cv);
        if sync {
            din.h_c += dhc;
        } else {
            dout.h_c += dhc;
        }

        // Global node.
        if let (Some(g), Some(gt), Some(gg)) = (&p.global, &t.global, &mut grad.global) {
            let hg0 = t.input.h_g.as_ref().expect("tripartite input");
            let hg1 = out.h_g.as_ref().expect("tripartite output");
            let dz_gv = col_sum(&block(&d_in_v, 3, d), 1.0);
            let hg_next = if sync { hg0 } else { hg1 };
            let dhg = g.msg_gv.backward_relu(hg_next, &gt.z_gv, &dz_gv, &mut gg.msg_gv);
            let dhg1 = dout.h_g.as_mut().expect("tripartite gradient");
            if sync {
                *din.h_g.as_mut().unwrap() += dhg;
            } else {
                *dhg1 += dhg;
            }

            let d_in_g = g.upd_g.backward_relu(&gt.in_g, hg1, dhg1, &mut gg.upd_g);
            *din.h_g.as_mut().unwrap() += block(&d_in_g, 0, d);
            let dz_vg = broadcast(&(block(&d_in_g, 1, d) * topo.scale_v), n);
            din.h_v += g.msg_vg.backward_relu(hv0, &gt.z_vg, &dz_vg, &mut gg.msg_vg);
            let dz_cg = broadcast(&(block(&d_in_g, 2, d) * topo.scale_c), m);
            let hc_next = if sync { hc0 } else { &out.h_c };
            let dhc = g.msg_cg.backward_relu(hc_next, &gt.z_cg, &dz_cg, &mut gg.msg_cg);
            if sync {
                din.h_c += dhc;
            } else {
                dout.h_c += dhc;
            }
        }

        // Constraints.
        let d_in_c = p.upd_c.backward_relu(&t.in_c, &out.h_c, &dout.h_c, &mut grad.upd_c);
        din.h_c += block(&d_in_c, 0, d);
        let dz_vc = scatter_adjoint(&topo.vc, &block(&d_in_c, 1, d), n);
        din.h_v += p.msg_vc.backward_relu(hv0, &t.z_vc, &dz_vc, &mut grad.msg_vc);
        if let (Some(g), Some(gt), Some(gg)) = (&p.global, &t.global, &mut grad.global) {
            let hg0 = t.input.h_g.as_ref().unwrap();
            let dz_gc = col_sum(&block(&d_in_c, 2, d), 1.0);
            *din.h_g.as_mut().unwrap() += g.msg_gc.backward_relu(hg0, &gt.z_gc, &dz_gc, &mut gg.msg_gc);
        }
        din
    }

    /// Full forward pass with a tape for [`backward`](Self::backward).
    pub fn forward(&self, topo: &Topology, graph: &ProblemGraph, x_prev: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_len("x_prev", x_prev.len(), graph.n)?;
        let (c_in, v_in) = Self::lift_inputs(graph, x_prev);
        let mut emb = self.lift(&c_in, &v_in);
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let t = self.layer_forward(topo, &emb, l);
            emb = t.output.clone();
            layers.push(t);
        }
        let head_hidden = self.head[0].forward_relu(&emb.h_v);
        let out = self.head[1].forward(&head_hidden);
        Ok((out.as_slice().to_vec(), Tape { lift_c_in: c_in, lift_v_in: v_in, layers, head_hidden }))
    }

    pub fn predict(&self, graph: &ProblemGraph, x_prev: &[f64]) -> Result<Vec<f64>> {
        let topo = Topology::new(graph, self.config.aggregation);
        Ok(self.forward(&topo, graph, x_prev)?.0)
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`.
    pub fn backward(&self, topo: &Topology, tape: &Tape, d_out: &[f64], grad: &mut MpnnModel) {
        let n = topo.n;
        let dy = DMatrix::from_column_slice(n, 1, d_out);
        let last_v = tape.layers.last().map_or_else(|| self.lift_v.forward_relu(&tape.lift_v_in), |t| t.output.h_v.clone());
        let dh = self.head[1].backward(&tape.head_hidden, &dy, &mut grad.head[1]);
        let dhv = self.head[0].backward_relu(&last_v, &tape.head_hidden, &dh, &mut grad.head[0]);
        let d = self.config.hidden;
        let mut demb = Embeddings {
            h_c: DMatrix::zeros(topo.m, d),
            h_v: dhv,
            h_g: self.config.mode.has_global().then(|| DMatrix::zeros(1, d)),
        };
        for l in (0..tape.layers.len()).rev() {
            demb = self.layer_backward(topo, l, &tape.layers[l], demb, &mut grad.layers[l]);
        }
        let (hc0, hv0) = match tape.layers.first() {
            Some(t) => (t.input.h_c.clone(), t.input.h_v.clone()),
            None => (self.lift_c.forward_relu(&tape.lift_c_in), self.lift_v.forward_relu(&tape.lift_v_in)),
        };
        self.lift_c.backward_relu(&tape.lift_c_in, &hc0, &demb.h_c, &mut grad.lift_c);
        self.lift_v.backward_relu(&tape.lift_v_in, &hv0, &demb.h_v, &mut grad.lift_v);
    }
}

/// `‖target − pred‖₂²`.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("prediction", pred.len(), target.len())?;
    Ok(pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum())
}

/// Loss and parameter gradients of `‖target − predict(x_prev)‖²`.
pub fn backward_mse(model: &MpnnModel, graph: &ProblemGraph, x_prev: &[f64], target: &[f64]) -> Result<(f64, MpnnModel)> {
    let topo = Topology::new(graph, model.config.aggregation);
    let (pred, tape) = model.forward(&topo, graph, x_prev)?;
    let loss = loss_mse(&pred, target)?;
    let d_out: Vec<f64> = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect();
    let mut grad = model.zeros_like();
    model.backward(&topo, &tape, &d_out, &mut grad);
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Backprop and finite-difference values at the worst parameter.
    pub analytic: f64,
    pub numeric: f64,
}

/// Largest relative disagreement between backprop and central differences
/// (step `h`) over every parameter, for the loss `‖target − predict(x_prev)‖²`.
/// Relative error is `|g − ĝ| / max(|g|, |ĝ|, floor)`.
pub fn gradient_check(model: &MpnnModel, graph: &ProblemGraph, x_prev: &[f64], target: &[f64], h: f64, floor: f64) -> Result<GradCheck> {
    let (_, grad) = backward_mse(model, graph, x_prev, target)?;
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let mut probe = model.clone();
    let mut worst = GradCheck { max_rel_err: 0.0, analytic: 0.0, numeric: 0.0 };
    let mut k = 0;
    let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.tensors()[ti].as_slice()[i];
            probe.tensors_mut()[ti].as_mut_slice()[i] = orig + h;
            let up = loss_mse(&probe.predict(graph, x_prev)?, target)?;
            probe.tensors_mut()[ti].as_mut_slice()[i] = orig - h;
            let down = loss_mse(&probe.predict(graph, x_prev)?, target)?;
            probe.tensors_mut()[ti].as_mut_slice()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            if rel > worst.max_rel_err {
                worst = GradCheck { max_rel_err: rel, analytic: a, numeric: fd };
            }
            k += 1;
        }
    }
    Ok(worst)
}
