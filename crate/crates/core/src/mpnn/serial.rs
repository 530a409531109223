//! JSON layout of a model:
//!
//! ```text
//! {"mode", "sync_mode", "aggregation", "L", "d",
//!  "lift": {"cons": LIN, "var": LIN},
//!  "layers": [{"msg_vc", "msg_cv", "msg_vv", "upd_c", "upd_v",
//!              "msg_gc"?, "msg_vg"?, "msg_cg"?, "msg_gv"?, "upd_g"?}],
//!  "head": [LIN, LIN]}
//! LIN = {"in", "out", "w": row-major in×out, "b": out}
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Aggregation, GlobalParams, LayerParams, Linear, ModelConfig, Mode, MpnnModel, SyncMode};
use crate::error::LcqpError;

#[derive(Serialize, Deserialize)]
struct LinearFile {
    #[serde(rename = "in")]
    fan_in: usize,
    out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl From<&Linear> for LinearFile {
    fn from(l: &Linear) -> Self {
        let (r, c) = l.w.shape();
        let mut w = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                w.push(l.w[(i, j)]);
            }
        }
        Self { fan_in: r, out: c, w, b: l.b.iter().copied().collect() }
    }
}

impl LinearFile {
    fn into_linear(self, fan_in: usize, out: usize, name: &str) -> Result<Linear, LcqpError> {
        if self.fan_in != fan_in || self.out != out || self.w.len() != fan_in * out || self.b.len() != out {
            return Err(LcqpError::Dimension(format!("{name}: expected {fan_in}x{out}")));
        }
        Ok(Linear { w: DMatrix::from_row_slice(fan_in, out, &self.w), b: DMatrix::from_row_slice(1, out, &self.b) })
    }
}

#[derive(Serialize, Deserialize)]
struct LiftFile {
    cons: LinearFile,
    var: LinearFile,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    msg_vc: LinearFile,
    msg_cv: LinearFile,
    msg_vv: LinearFile,
    upd_c: LinearFile,
    upd_v: LinearFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    msg_gc: Option<LinearFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    msg_vg: Option<LinearFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    msg_cg: Option<LinearFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    msg_gv: Option<LinearFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upd_g: Option<LinearFile>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    mode: Mode,
    sync_mode: SyncMode,
    #[serde(default)]
    aggregation: Aggregation,
    #[serde(rename = "L")]
    layers_count: usize,
    d: usize,
    lift: LiftFile,
    layers: Vec<LayerFile>,
    head: Vec<LinearFile>,
}

impl Serialize for MpnnModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let g = l.global.as_ref();
                LayerFile {
                    msg_vc: (&l.msg_vc).into(),
                    msg_cv: (&l.msg_cv).into(),
                    msg_vv: (&l.msg_vv).into(),
                    upd_c: (&l.upd_c).into(),
                    upd_v: (&l.upd_v).into(),
                    msg_gc: g.map(|g| (&g.msg_gc).into()),
                    msg_vg: g.map(|g| (&g.msg_vg).into()),
                    msg_cg: g.map(|g| (&g.msg_cg).into()),
                    msg_gv: g.map(|g| (&g.msg_gv).into()),
                    upd_g: g.map(|g| (&g.upd_g).into()),
                }
            })
            .collect();
        ModelFile {
            mode: self.config.mode,
            sync_mode: self.config.sync_mode,
            aggregation: self.config.aggregation,
            layers_count: self.config.layers,
            d: self.config.hidden,
            lift: LiftFile { cons: (&self.lift_c).into(), var: (&self.lift_v).into() },
            layers,
            head: self.head.iter().map(Into::into).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MpnnModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let f = ModelFile::deserialize(de)?;
        from_file(f).map_err(serde::de::Error::custom)
    }
}

fn from_file(f: ModelFile) -> Result<MpnnModel, LcqpError> {
    let d = f.d;
    let tri = f.mode.has_global();
    if f.layers.len() != f.layers_count || f.layers_count == 0 || d == 0 {
        return Err(LcqpError::Invalid("layer count mismatch".into()));
    }
    let k = usize::from(tri);
    let mut layers = Vec::with_capacity(f.layers.len());
    for (i, l) in f.layers.into_iter().enumerate() {
        let name = |s: &str| format!("layers[{i}].{s}");
        let global = match (tri, l.msg_gc, l.msg_vg, l.msg_cg, l.msg_gv, l.upd_g) {
            (true, Some(gc), Some(vg), Some(cg), Some(gv), Some(ug)) => Some(GlobalParams {
                msg_gc: gc.into_linear(d, d, &name("msg_gc"))?,
                msg_vg: vg.into_linear(d, d, &name("msg_vg"))?,
                msg_cg: cg.into_linear(d, d, &name("msg_cg"))?,
                msg_gv: gv.into_linear(d, d, &name("msg_gv"))?,
                upd_g: ug.into_linear(3 * d, d, &name("upd_g"))?,
            }),
            (false, None, None, None, None, None) => None,
            _ => return Err(LcqpError::Invalid(format!("layer {i}: global weights do not match mode"))),
        };
        layers.push(LayerParams {
            msg_vc: l.msg_vc.into_linear(d, d, &name("msg_vc"))?,
            msg_cv: l.msg_cv.into_linear(d, d, &name("msg_cv"))?,
            msg_vv: l.msg_vv.into_linear(d, d, &name("msg_vv"))?,
            upd_c: l.upd_c.into_linear((2 + k) * d, d, &name("upd_c"))?,
            upd_v: l.upd_v.into_linear((3 + k) * d, d, &name("upd_v"))?,
            global,
        });
    }
    let mut head = f.head.into_iter();
    let (Some(h0), Some(h1), None) = (head.next(), head.next(), head.next()) else {
        return Err(LcqpError::Invalid("head must have two layers".into()));
    };
    let model = MpnnModel {
        config: ModelConfig { mode: f.mode, sync_mode: f.sync_mode, aggregation: f.aggregation, layers: f.layers_count, hidden: d },
        lift_c: f.lift.cons.into_linear(1, d, "lift.cons")?,
        lift_v: f.lift.var.into_linear(2, d, "lift.var")?,
        layers,
        head: [h0.into_linear(d, d, "head[0]")?, h1.into_linear(d, 1, "head[1]")?],
    };
    if !model.is_finite() {
        return Err(LcqpError::Invalid("non-finite parameter".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_both_modes() {
        for mode in [Mode::IpmGuidedTripartite, Mode::FeasibilityBipartite] {
            let cfg = ModelConfig { layers: 2, hidden: 4, ..ModelConfig::new(mode) };
            let model = MpnnModel::new(cfg, 5);
            let s = serde_json::to_string(&model).unwrap();
            let back: MpnnModel = serde_json::from_str(&s).unwrap();
            assert_eq!(back, model);
            assert_eq!(serde_json::to_string(&back).unwrap(), s);
        }
    }

    #[test]
    fn rejects_wrong_shapes() {
        let model = MpnnModel::new(ModelConfig { layers: 1, hidden: 4, ..ModelConfig::new(Mode::FeasibilityBipartite) }, 5);
        let mut v = serde_json::to_value(&model).unwrap();
        v["d"] = serde_json::json!(5);
        assert!(serde_json::from_value::<MpnnModel>(v).is_err());
    }
}
