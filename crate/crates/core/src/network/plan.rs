use std::collections::BTreeMap;
use std::fmt;

use crate::blocks::{BlockDef, FeatureShape};
use crate::error::{config, Result};
use crate::network::ParamSlot;

/// Which branch a layer belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Hrb,
    Lrb,
    Both,
    Head,
}

impl Stream {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Hrb => "HRB",
            Self::Lrb => "LRB",
            Self::Both => "BOTH",
            Self::Head => "HEAD",
        }
    }
}

/// Row identifier: a numbered layer of the architecture table or a named head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerId {
    Table(u8),
    Head(&'static str),
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Table(i) => write!(f, "{i}"),
            Self::Head(name) => write!(f, "head.{name}"),
        }
    }
}

/// One node of the layer graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDesc {
    pub id: LayerId,
    pub stream: Stream,
    pub block: BlockDef,
    /// Parameter-name prefix.
    pub prefix: &'static str,
    /// Feature names consumed, in block-input order.
    pub inputs: Vec<&'static str>,
    /// Feature names produced, in block-output order.
    pub outputs: Vec<&'static str>,
}

/// Feature name of the network input.
pub const INPUT: &str = "image";

/// Symbolic DRBANet graph at a fixed input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPlan {
    pub num_classes: usize,
    pub input_hw: (usize, usize),
    pub layers: Vec<LayerDesc>,
    shapes: BTreeMap<&'static str, FeatureShape>,
}

/// Widths of the architecture.
pub mod widths {
    pub const STEM: usize = 32;
    pub const STAGE2: usize = 64;
    pub const HRB: usize = 64;
    pub const LRB: [usize; 3] = [128, 256, 512];
    pub const HRB_OUT: usize = 128;
    pub const BOUNDARY: usize = 64;
    pub const FUSED: usize = 128;
}

fn layer(
    id: LayerId,
    stream: Stream,
    block: BlockDef,
    prefix: &'static str,
    inputs: &[&'static str],
    outputs: &[&'static str],
) -> LayerDesc {
    LayerDesc {
        id,
        stream,
        block,
        prefix,
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
    }
}

fn eibm(in_c: usize, out_c: usize, strided: bool) -> BlockDef {
    BlockDef::Eibm { in_c, out_c, strided }
}

/// The layer list, independent of resolution.
fn layer_list(num_classes: usize) -> Vec<LayerDesc> {
    use widths::*;
    use LayerId::{Head as H, Table as T};
    use Stream::*;
    let [l3, l4, l5] = LRB;
    vec![
        layer(T(1), Hrb, BlockDef::Stem { in_c: 3, out_c: STEM }, "hrb.stem", &[INPUT], &["x1"]),
        layer(T(2), Hrb, eibm(STEM, STEM, true), "hrb.stage1.eibm0", &["x1"], &["x2"]),
        layer(T(3), Hrb, eibm(STEM, STEM, false), "hrb.stage1.eibm1", &["x2"], &["x3"]),
        layer(T(4), Hrb, eibm(STEM, STAGE2, true), "hrb.stage2.eibm0", &["x3"], &["x4"]),
        layer(T(5), Hrb, eibm(STAGE2, STAGE2, false), "hrb.stage2.eibm1", &["x4"], &["x5"]),
        layer(T(6), Lrb, eibm(STAGE2, l3, true), "lrb.stage3.eibm0", &["x5"], &["l6"]),
        layer(T(6), Hrb, eibm(STAGE2, HRB, false), "hrb.stage3.eibm0", &["x5"], &["h6"]),
        layer(T(7), Lrb, eibm(l3, l3, false), "lrb.stage3.eibm1", &["l6"], &["l7"]),
        layer(T(7), Hrb, eibm(HRB, HRB, false), "hrb.stage3.eibm1", &["h6"], &["h7"]),
        layer(
            T(8),
            Both,
            BlockDef::Bfm { high_c: HRB, low_c: l3, gap: 2 },
            "bfm.stage3",
            &["h7", "l7"],
            &["h8", "l8"],
        ),
        layer(T(9), Lrb, eibm(l3, l4, true), "lrb.stage4.eibm0", &["l8"], &["l9"]),
        layer(T(9), Hrb, eibm(HRB, HRB, false), "hrb.stage4.eibm0", &["h8"], &["h9"]),
        layer(T(10), Lrb, eibm(l4, l4, false), "lrb.stage4.eibm1", &["l9"], &["l10"]),
        layer(T(10), Hrb, eibm(HRB, HRB, false), "hrb.stage4.eibm1", &["h9"], &["h10"]),
        layer(
            T(11),
            Both,
            BlockDef::Bfm { high_c: HRB, low_c: l4, gap: 4 },
            "bfm.stage4",
            &["h10", "l10"],
            &["h11", "l11"],
        ),
        layer(T(12), Lrb, eibm(l4, l5, true), "lrb.stage5.eibm0", &["l11"], &["l12"]),
        layer(T(12), Hrb, eibm(HRB, HRB_OUT, false), "hrb.stage5.eibm0", &["h11"], &["h12"]),
        layer(T(13), Lrb, BlockDef::Elppm { in_c: l5 }, "lrb.elppm", &["l12"], &["l13"]),
        layer(
            H("boundary"),
            Head,
            BlockDef::BoundaryHead { in_c: STAGE2, mid_c: BOUNDARY },
            "head.boundary",
            &["x5"],
            &["boundary_feature", "boundary_logits"],
        ),
        layer(
            H("fusion"),
            Head,
            BlockDef::Fusion { high_c: HRB_OUT, boundary_c: BOUNDARY, out_c: FUSED },
            "head.fusion",
            &["h12", "l13", "boundary_feature"],
            &["fused"],
        ),
        layer(
            H("seg"),
            Head,
            BlockDef::SegHead { in_c: FUSED, classes: num_classes },
            "head.seg",
            &["fused"],
            &["seg_logits"],
        ),
        layer(
            H("aux"),
            Head,
            BlockDef::SegHead { in_c: l5, classes: num_classes },
            "head.aux",
            &["l12"],
            &["aux_logits"],
        ),
    ]
}

/// One row of the architecture size table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeRow {
    pub layer: u8,
    pub stream: Stream,
    pub shape: FeatureShape,
}

/// Output sizes of every numbered layer for a 1024×1024 input, as listed in
/// the architecture table. Layer 13 is listed after its 8× enlargement.
pub fn golden_table() -> Vec<SizeRow> {
    use Stream::*;
    let r = |layer, stream, h, w, c| SizeRow { layer, stream, shape: FeatureShape::new(c, h, w) };
    vec![
        r(1, Hrb, 512, 512, 32),
        r(2, Hrb, 256, 256, 32),
        r(3, Hrb, 256, 256, 32),
        r(4, Hrb, 128, 128, 64),
        r(5, Hrb, 128, 128, 64),
        r(6, Lrb, 64, 64, 128),
        r(6, Hrb, 128, 128, 64),
        r(7, Lrb, 64, 64, 128),
        r(7, Hrb, 128, 128, 64),
        r(8, Lrb, 64, 64, 128),
        r(8, Hrb, 128, 128, 64),
        r(9, Lrb, 32, 32, 256),
        r(9, Hrb, 128, 128, 64),
        r(10, Lrb, 32, 32, 256),
        r(10, Hrb, 128, 128, 64),
        r(11, Lrb, 32, 32, 256),
        r(11, Hrb, 128, 128, 64),
        r(12, Lrb, 16, 16, 512),
        r(12, Hrb, 128, 128, 128),
        r(13, Lrb, 128, 128, 128),
    ]
}

/// Feature names holding the high/low stream output of each numbered layer.
fn table_feature(layer: u8, stream: Stream) -> Option<&'static str> {
    const SHARED: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];
    const HIGH: [&str; 7] = ["h6", "h7", "h8", "h9", "h10", "h11", "h12"];
    const LOW: [&str; 8] = ["l6", "l7", "l8", "l9", "l10", "l11", "l12", "l13"];
    match (layer, stream) {
        (1..=5, Stream::Hrb) => Some(SHARED[layer as usize - 1]),
        (6..=12, Stream::Hrb) => Some(HIGH[layer as usize - 6]),
        (6..=13, Stream::Lrb) => Some(LOW[layer as usize - 6]),
        _ => None,
    }
}

pub fn build_plan(num_classes: usize, input_hw: (usize, usize)) -> Result<NetworkPlan> {
    let (h, w) = input_hw;
    if h == 0 || w == 0 || h % 64 != 0 || w % 64 != 0 {
        return Err(config(format!(
            "resolution must be divisible by 64 (got {w}x{h})"
        )));
    }
    if num_classes < 1 {
        return Err(config("number of classes must be at least 1"));
    }
    let layers = layer_list(num_classes);
    let mut shapes = BTreeMap::new();
    shapes.insert(INPUT, FeatureShape::new(3, h, w));
    for l in &layers {
        l.block.validate()?;
        let ins = l
            .inputs
            .iter()
            .map(|n| {
                shapes
                    .get(n)
                    .copied()
                    .ok_or_else(|| config(format!("layer {} reads undefined feature `{n}`", l.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let outs = l.block.infer(&ins)?;
        for (name, s) in l.outputs.iter().zip(outs) {
            if shapes.insert(name, s).is_some() {
                return Err(config(format!("feature `{name}` defined twice")));
            }
        }
    }
    Ok(NetworkPlan { num_classes, input_hw, layers, shapes })
}

impl NetworkPlan {
    /// Inferred shape of a named feature (see [`LayerDesc::outputs`]).
    pub fn shape_of(&self, feature: &str) -> Option<FeatureShape> {
        self.shapes.get(feature).copied()
    }

    pub fn input_shapes(&self, layer: &LayerDesc) -> Vec<FeatureShape> {
        layer.inputs.iter().map(|n| self.shapes[n]).collect()
    }

    pub fn output_shapes(&self, layer: &LayerDesc) -> Vec<FeatureShape> {
        layer.outputs.iter().map(|n| self.shapes[n]).collect()
    }

    /// Every parameter the plan needs, sorted by name.
    pub fn manifest(&self) -> Result<Vec<ParamSlot>> {
        let mut all = Vec::new();
        for l in &self.layers {
            all.extend(l.block.manifest(l.prefix)?);
        }
        all.sort();
        for pair in all.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(config(format!("parameter name `{}` used twice", pair[0].name)));
            }
        }
        Ok(all)
    }

    /// Per-layer output sizes in architecture-table layout. Layer 13 is
    /// reported at the HRB resolution it is enlarged to for fusion.
    pub fn size_table(&self) -> Vec<SizeRow> {
        let mut rows = Vec::new();
        for g in golden_table() {
            let feature = table_feature(g.layer, g.stream).expect("golden rows map to features");
            let mut shape = self.shapes[feature];
            if g.layer == 13 {
                let hrb = self.shapes["h12"];
                shape = FeatureShape::new(shape.c, hrb.h, hrb.w);
            }
            rows.push(SizeRow { layer: g.layer, stream: g.stream, shape });
        }
        rows
    }

    /// Compares [`Self::size_table`] to [`golden_table`]. Only meaningful at 1024×1024.
    pub fn golden_mismatches(&self) -> Vec<(SizeRow, SizeRow)> {
        self.size_table()
            .into_iter()
            .zip(golden_table())
            .filter(|(got, want)| got != want)
            .collect()
    }

    /// ELPPM output before its enlargement.
    pub fn elppm_native_shape(&self) -> FeatureShape {
        self.shapes["l13"]
    }
}
