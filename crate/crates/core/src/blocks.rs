//! Architectural building blocks composed from the primitive ops.
//!
//! Every block is described by a [`BlockDef`] which enumerates its
//! convolution units. The same enumeration drives the parameter manifest,
//! weight loading and cost accounting, so the three never disagree about
//! which convolutions exist. Parameter names are `<prefix>.<unit>.weight`,
//! `<prefix>.<unit>.bias`, and `<prefix>.<unit>.norm.{weight,bias,running_mean,running_var}`.

use std::collections::BTreeMap;

use crate::error::{config, shape, Result};
use crate::network::{ParamSlot, WeightStore};
use crate::ops;
use crate::tensor::{AffineNorm, ConvSpec, Tensor};

/// Pooling geometry `(kernel, stride, padding)` of the three windowed context paths.
pub const ELPPM_POOLS: [(usize, usize, usize); 3] = [(5, 2, 2), (9, 4, 4), (17, 8, 8)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Stem,
    Eibm,
    Bfm,
    Elppm,
    BoundaryHead,
    /// 1×1 merge of the two branches and the boundary feature.
    Fusion,
    SegHead,
}

impl BlockKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Stem => "stem",
            Self::Eibm => "EIBM",
            Self::Bfm => "BFM",
            Self::Elppm => "ELPPM",
            Self::BoundaryHead => "boundary-head",
            Self::Fusion => "fusion",
            Self::SegHead => "seg-head",
        }
    }
}

/// Convolution followed by optional normalization and ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitDef {
    pub conv: ConvSpec,
    pub norm: bool,
    pub relu: bool,
}

impl UnitDef {
    const fn conv_norm_relu(conv: ConvSpec) -> Self {
        Self { conv, norm: true, relu: true }
    }

    const fn conv_norm(conv: ConvSpec) -> Self {
        Self { conv, norm: true, relu: false }
    }

    const fn classifier(conv: ConvSpec) -> Self {
        Self { conv: conv.with_bias(true), norm: false, relu: false }
    }
}

/// A unit together with where it runs, for symbolic cost evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSite {
    pub name: &'static str,
    pub unit: UnitDef,
    pub out_h: usize,
    pub out_w: usize,
}

/// Channels and spatial extent of one feature map (batch excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FeatureShape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }

    fn of(t: &Tensor) -> Self {
        let d = t.dims();
        Self::new(d.c, d.h, d.w)
    }
}

impl std::fmt::Display for FeatureShape {
    /// Rendered as `H×W×C`, the layout used in the architecture table.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

/// Structural definition of one block instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockDef {
    Stem { in_c: usize, out_c: usize },
    Eibm { in_c: usize, out_c: usize, strided: bool },
    /// `gap` is the spatial ratio between the high and low streams (2 or 4).
    Bfm { high_c: usize, low_c: usize, gap: usize },
    Elppm { in_c: usize },
    BoundaryHead { in_c: usize, mid_c: usize },
    Fusion { high_c: usize, boundary_c: usize, out_c: usize },
    SegHead { in_c: usize, classes: usize },
}

fn down(v: usize, s: usize) -> usize {
    (v - 1) / s + 1
}

impl BlockDef {
    pub fn kind(&self) -> BlockKind {
        match self {
            Self::Stem { .. } => BlockKind::Stem,
            Self::Eibm { .. } => BlockKind::Eibm,
            Self::Bfm { .. } => BlockKind::Bfm,
            Self::Elppm { .. } => BlockKind::Elppm,
            Self::BoundaryHead { .. } => BlockKind::BoundaryHead,
            Self::Fusion { .. } => BlockKind::Fusion,
            Self::SegHead { .. } => BlockKind::SegHead,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Bfm { gap, low_c, .. } => {
                if gap != 2 && gap != 4 {
                    return Err(config(format!("BFM gap must be 2 or 4, got {gap}")));
                }
                if gap == 4 && low_c % 2 != 0 {
                    return Err(config("BFM with gap 4 needs an even low-stream width"));
                }
            }
            Self::Elppm { in_c } if in_c % 4 != 0 || in_c == 0 => {
                return Err(config(format!("ELPPM input channels {in_c} not divisible by 4")));
            }
            Self::SegHead { classes, .. } if classes < 1 => {
                return Err(config("segmentation head needs at least one class"));
            }
            _ => {}
        }
        for site in self.sites(&self.reference_inputs())? {
            site.unit.conv.validate()?;
        }
        Ok(())
    }

    /// Number of input feature maps the block consumes.
    pub fn arity(&self) -> usize {
        match self {
            Self::Bfm { .. } => 2,
            Self::Fusion { .. } => 3,
            _ => 1,
        }
    }

    /// A valid input geometry used when only names and dims are needed.
    fn reference_inputs(&self) -> Vec<FeatureShape> {
        match *self {
            Self::Stem { in_c, .. } => vec![FeatureShape::new(in_c, 64, 64)],
            Self::Eibm { in_c, .. } => vec![FeatureShape::new(in_c, 64, 64)],
            Self::Bfm { high_c, low_c, gap } => vec![
                FeatureShape::new(high_c, 64, 64),
                FeatureShape::new(low_c, 64 / gap.max(1), 64 / gap.max(1)),
            ],
            Self::Elppm { in_c } => vec![FeatureShape::new(in_c, 16, 16)],
            Self::BoundaryHead { in_c, .. } => vec![FeatureShape::new(in_c, 64, 64)],
            Self::Fusion { high_c, boundary_c, .. } => vec![
                FeatureShape::new(high_c, 64, 64),
                FeatureShape::new(high_c, 8, 8),
                FeatureShape::new(boundary_c, 64, 64),
            ],
            Self::SegHead { in_c, .. } => vec![FeatureShape::new(in_c, 64, 64)],
        }
    }

    /// Every convolution unit with the spatial size of its output, given the inputs.
    pub fn sites(&self, inputs: &[FeatureShape]) -> Result<Vec<UnitSite>> {
        if inputs.len() != self.arity() {
            return Err(shape(format!(
                "{} takes {} inputs, got {}",
                self.kind().as_str(),
                self.arity(),
                inputs.len()
            )));
        }
        let site = |name, unit, h, w| UnitSite { name, unit, out_h: h, out_w: w };
        let x = inputs[0];
        Ok(match *self {
            Self::Stem { in_c, out_c } => vec![site(
                "conv",
                UnitDef::conv_norm_relu(ConvSpec::conv3x3(in_c, out_c, 2)),
                down(x.h, 2),
                down(x.w, 2),
            )],
            Self::Eibm { in_c, out_c, strided } => {
                let e = 2 * in_c;
                let s = if strided { 2 } else { 1 };
                let (oh, ow) = (down(x.h, s), down(x.w, s));
                let mut v = vec![
                    site("expand", UnitDef::conv_norm_relu(ConvSpec::pointwise(in_c, e)), x.h, x.w),
                    site("dw1", UnitDef::conv_norm_relu(ConvSpec::depthwise3x3(e, s)), oh, ow),
                    site("dw2", UnitDef::conv_norm_relu(ConvSpec::depthwise3x3(e, 1)), oh, ow),
                    site("project", UnitDef::conv_norm(ConvSpec::pointwise(e, out_c)), oh, ow),
                ];
                if strided || in_c != out_c {
                    v.push(site(
                        "skip",
                        UnitDef::conv_norm(ConvSpec::pointwise(in_c, out_c).with_stride(s)),
                        oh,
                        ow,
                    ));
                }
                v
            }
            Self::Bfm { high_c, low_c, gap } => {
                let low = inputs[1];
                let mut v = vec![site(
                    "up",
                    UnitDef::conv_norm(ConvSpec::pointwise(low_c, high_c)),
                    low.h,
                    low.w,
                )];
                if gap == 4 {
                    v.push(site(
                        "down0",
                        UnitDef::conv_norm_relu(ConvSpec::conv3x3(high_c, low_c / 2, 2)),
                        down(x.h, 2),
                        down(x.w, 2),
                    ));
                    v.push(site(
                        "down1",
                        UnitDef::conv_norm(ConvSpec::conv3x3(low_c / 2, low_c, 2)),
                        down(x.h, 4),
                        down(x.w, 4),
                    ));
                } else {
                    v.push(site(
                        "down0",
                        UnitDef::conv_norm(ConvSpec::conv3x3(high_c, low_c, 2)),
                        down(x.h, 2),
                        down(x.w, 2),
                    ));
                }
                v
            }
            Self::Elppm { in_c } => {
                let q = in_c / 4;
                let mut v = vec![site("path0.conv", UnitDef::conv_norm_relu(ConvSpec::pointwise(in_c, q)), x.h, x.w)];
                const CONV: [&str; 4] = ["path1.conv", "path2.conv", "path3.conv", "path4.conv"];
                const DW: [&str; 4] = ["path1.dw", "path2.dw", "path3.dw", "path4.dw"];
                const PW: [&str; 4] = ["path1.pw", "path2.pw", "path3.pw", "path4.pw"];
                for i in 0..4 {
                    let (ph, pw) = match ELPPM_POOLS.get(i) {
                        Some(&(k, s, p)) => (
                            crate::tensor::window_count(x.h, k, s, p).unwrap_or(0),
                            crate::tensor::window_count(x.w, k, s, p).unwrap_or(0),
                        ),
                        None => (1, 1),
                    };
                    v.push(site(CONV[i], UnitDef::conv_norm_relu(ConvSpec::pointwise(in_c, q)), ph, pw));
                    v.push(site(DW[i], UnitDef::conv_norm(ConvSpec::depthwise3x3(q, 1)), x.h, x.w));
                    v.push(site(PW[i], UnitDef::conv_norm_relu(ConvSpec::pointwise(q, q)), x.h, x.w));
                }
                v.push(site("fuse", UnitDef::conv_norm_relu(ConvSpec::pointwise(5 * q, q)), x.h, x.w));
                v.push(site("shortcut", UnitDef::conv_norm(ConvSpec::pointwise(in_c, q)), x.h, x.w));
                v
            }
            Self::BoundaryHead { in_c, mid_c } => vec![
                site("embed", UnitDef::conv_norm_relu(ConvSpec::pointwise(in_c, mid_c)), x.h, x.w),
                site("logit", UnitDef::classifier(ConvSpec::pointwise(mid_c, 1)), x.h, x.w),
            ],
            Self::Fusion { high_c, boundary_c, out_c } => vec![site(
                "conv",
                UnitDef::conv_norm_relu(ConvSpec::pointwise(high_c + boundary_c, out_c)),
                x.h,
                x.w,
            )],
            Self::SegHead { in_c, classes } => vec![
                site("dw", UnitDef::conv_norm_relu(ConvSpec::depthwise3x3(in_c, 1)), x.h, x.w),
                site("cls", UnitDef::classifier(ConvSpec::pointwise(in_c, classes)), x.h, x.w),
            ],
        })
    }

    /// Parameter slots under `prefix`, sorted by name.
    pub fn manifest(&self, prefix: &str) -> Result<Vec<ParamSlot>> {
        let mut out = Vec::new();
        for s in self.sites(&self.reference_inputs())? {
            let base = format!("{prefix}.{}", s.name);
            let conv = s.unit.conv;
            out.push(ParamSlot {
                name: format!("{base}.weight"),
                shape: conv.weight_dims().to_array().to_vec(),
            });
            if conv.has_bias {
                out.push(ParamSlot {
                    name: format!("{base}.bias"),
                    shape: vec![conv.out_channels],
                });
            }
            if s.unit.norm {
                for field in ["bias", "running_mean", "running_var", "weight"] {
                    out.push(ParamSlot {
                        name: format!("{base}.norm.{field}"),
                        shape: vec![conv.out_channels],
                    });
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Output feature shapes for the given inputs, validating the block's preconditions.
    pub fn infer(&self, inputs: &[FeatureShape]) -> Result<Vec<FeatureShape>> {
        if inputs.len() != self.arity() {
            return Err(shape(format!(
                "{} takes {} inputs, got {}",
                self.kind().as_str(),
                self.arity(),
                inputs.len()
            )));
        }
        let x = inputs[0];
        let want_c = |got: usize, want: usize, what: &str| {
            if got == want {
                Ok(())
            } else {
                Err(config(format!("{what} expects {want} channels, got {got}")))
            }
        };
        match *self {
            Self::Stem { in_c, out_c } => {
                want_c(x.c, in_c, "stem")?;
                Ok(vec![FeatureShape::new(out_c, down(x.h, 2), down(x.w, 2))])
            }
            Self::Eibm { in_c, out_c, strided } => {
                want_c(x.c, in_c, "EIBM")?;
                let s = if strided { 2 } else { 1 };
                Ok(vec![FeatureShape::new(out_c, down(x.h, s), down(x.w, s))])
            }
            Self::Bfm { high_c, low_c, gap } => {
                let low = inputs[1];
                want_c(x.c, high_c, "BFM high stream")?;
                want_c(low.c, low_c, "BFM low stream")?;
                check_gap(x, low, gap)?;
                Ok(vec![x, low])
            }
            Self::Elppm { in_c } => {
                want_c(x.c, in_c, "ELPPM")?;
                if in_c % 4 != 0 {
                    return Err(config(format!("ELPPM input channels {in_c} not divisible by 4")));
                }
                if x.h == 0 || x.w == 0 {
                    return Err(shape("ELPPM needs a non-empty input"));
                }
                Ok(vec![FeatureShape::new(in_c / 4, x.h, x.w)])
            }
            Self::BoundaryHead { in_c, mid_c } => {
                want_c(x.c, in_c, "boundary head")?;
                Ok(vec![FeatureShape::new(mid_c, x.h, x.w), FeatureShape::new(1, x.h, x.w)])
            }
            Self::Fusion { high_c, boundary_c, out_c } => {
                let (ctx, b) = (inputs[1], inputs[2]);
                want_c(x.c, high_c, "fusion high stream")?;
                want_c(ctx.c, high_c, "fusion context stream")?;
                want_c(b.c, boundary_c, "fusion boundary stream")?;
                if (b.h, b.w) != (x.h, x.w) || ctx.h > x.h || ctx.w > x.w {
                    return Err(shape("fusion inputs have incompatible spatial sizes"));
                }
                Ok(vec![FeatureShape::new(out_c, x.h, x.w)])
            }
            Self::SegHead { in_c, classes } => {
                want_c(x.c, in_c, "segmentation head")?;
                Ok(vec![FeatureShape::new(classes, x.h, x.w)])
            }
        }
    }

    /// Elements written by non-convolution ops (pool, upsample, add, concat).
    pub fn memory_ops(&self, inputs: &[FeatureShape]) -> Result<u64> {
        let outs = self.infer(inputs)?;
        let x = inputs[0];
        let hw = (x.h * x.w) as u64;
        Ok(match *self {
            Self::Stem { .. } | Self::BoundaryHead { .. } | Self::SegHead { .. } => 0,
            Self::Eibm { .. } => outs[0].numel() as u64,
            // upsample + add on the high stream, add on the low stream
            Self::Bfm { .. } => 2 * x.numel() as u64 + inputs[1].numel() as u64,
            Self::Elppm { in_c } => {
                let q = (in_c / 4) as u64;
                let mut pooled = 0u64;
                for &(k, s, p) in &ELPPM_POOLS {
                    let ph = crate::tensor::window_count(x.h, k, s, p).unwrap_or(0);
                    let pw = crate::tensor::window_count(x.w, k, s, p).unwrap_or(0);
                    pooled += (in_c * ph * pw) as u64;
                }
                pooled += in_c as u64;
                // 4 upsamples, 4 hierarchical adds, concat of 5 paths, output add
                pooled + 4 * q * hw + 4 * q * hw + 5 * q * hw + q * hw
            }
            Self::Fusion { high_c, boundary_c, .. } => {
                // upsample + add of the context stream, then concat
                2 * (high_c as u64) * hw + ((high_c + boundary_c) as u64) * hw
            }
        })
    }
}

fn check_gap(high: FeatureShape, low: FeatureShape, gap: usize) -> Result<()> {
    if high.h != low.h * gap || high.w != low.w * gap {
        return Err(shape(format!(
            "BFM gap {gap}: high stream {}x{} is not {gap}x low stream {}x{}",
            high.h, high.w, low.h, low.w
        )));
    }
    Ok(())
}

/// A loaded convolution unit.
#[derive(Debug, Clone)]
pub struct ConvUnit {
    pub def: UnitDef,
    pub weight: Tensor,
    pub bias: Option<Vec<f32>>,
    pub norm: Option<AffineNorm>,
}

impl ConvUnit {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = ops::conv2d(x, &self.weight, self.bias.as_deref(), &self.def.conv)?;
        if let Some(n) = &self.norm {
            y = ops::affine_norm(&y, n)?;
        }
        if self.def.relu {
            y = ops::relu(&y);
        }
        Ok(y)
    }
}

/// Weights of one block bound to its definition.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub def: BlockDef,
    pub prefix: String,
    units: BTreeMap<&'static str, ConvUnit>,
}

impl BlockParams {
    /// Binds `def` to the tensors under `prefix` in `store`.
    pub fn load(def: BlockDef, prefix: &str, store: &WeightStore) -> Result<Self> {
        def.validate()?;
        let mut units = BTreeMap::new();
        for s in def.sites(&def.reference_inputs())? {
            let base = format!("{prefix}.{}", s.name);
            let conv = s.unit.conv;
            let weight = store.tensor4(&format!("{base}.weight"))?;
            if weight.dims() != conv.weight_dims() {
                return Err(config(format!(
                    "`{base}.weight` has dims {}, expected {}",
                    weight.dims(),
                    conv.weight_dims()
                )));
            }
            let bias = if conv.has_bias {
                Some(store.vector(&format!("{base}.bias"), conv.out_channels)?)
            } else {
                None
            };
            let norm = if s.unit.norm {
                Some(store.norm(&format!("{base}.norm"), conv.out_channels)?)
            } else {
                None
            };
            units.insert(s.name, ConvUnit { def: s.unit, weight, bias, norm });
        }
        Ok(Self { def, prefix: prefix.to_string(), units })
    }

    pub fn kind(&self) -> BlockKind {
        self.def.kind()
    }

    pub fn unit(&self, name: &str) -> Result<&ConvUnit> {
        self.units
            .get(name)
            .ok_or_else(|| config(format!("{} has no unit `{name}`", self.prefix)))
    }

    fn expect(&self, kind: BlockKind) -> Result<()> {
        if self.kind() != kind {
            return Err(config(format!(
                "`{}` is a {} block, not {}",
                self.prefix,
                self.kind().as_str(),
                kind.as_str()
            )));
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &[&Tensor]) -> Result<()> {
        let shapes: Vec<FeatureShape> = inputs.iter().map(|t| FeatureShape::of(t)).collect();
        self.def.infer(&shapes).map(|_| ())
    }

    /// Runs the block on its inputs, returning outputs in [`BlockDef::infer`] order.
    pub fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        match self.kind() {
            BlockKind::Stem => Ok(vec![stem_forward(inputs[0], self)?]),
            BlockKind::Eibm => Ok(vec![eibm_forward(inputs[0], self)?]),
            BlockKind::Bfm => {
                let (h, l) = bfm_forward(inputs[0], inputs.get(1).copied().ok_or_else(|| shape("BFM needs two inputs"))?, self)?;
                Ok(vec![h, l])
            }
            BlockKind::Elppm => Ok(vec![elppm_forward(inputs[0], self)?]),
            BlockKind::BoundaryHead => {
                let (f, l) = boundary_head_forward(inputs[0], self)?;
                Ok(vec![f, l])
            }
            BlockKind::Fusion => {
                if inputs.len() != 3 {
                    return Err(shape("fusion needs three inputs"));
                }
                Ok(vec![fusion_forward(inputs[0], inputs[1], inputs[2], self)?])
            }
            BlockKind::SegHead => {
                let BlockDef::SegHead { classes, .. } = self.def else { unreachable!() };
                Ok(vec![seg_head_forward(inputs[0], self, classes)?])
            }
        }
    }
}

/// Strided 3×3 convolution, normalization and ReLU.
pub fn stem_forward(x: &Tensor, p: &BlockParams) -> Result<Tensor> {
    p.expect(BlockKind::Stem)?;
    p.check_inputs(&[x])?;
    p.unit("conv")?.apply(x)
}

/// Inverted bottleneck: expand ×2, two depthwise 3×3, linear projection, residual add.
/// Strided blocks downsample in the first depthwise conv and project the skip path.
pub fn eibm_forward(x: &Tensor, p: &BlockParams) -> Result<Tensor> {
    p.expect(BlockKind::Eibm)?;
    p.check_inputs(&[x])?;
    let mut y = p.unit("expand")?.apply(x)?;
    y = p.unit("dw1")?.apply(&y)?;
    y = p.unit("dw2")?.apply(&y)?;
    y = p.unit("project")?.apply(&y)?;
    match p.units.get("skip") {
        Some(skip) => ops::add(&y, &skip.apply(x)?),
        None => ops::add(&y, x),
    }
}

/// Cross-resolution exchange. Returns `(high_out, low_out)`:
/// `high_out = relu(x_high + U(norm(conv1x1(x_low))))`,
/// `low_out = relu(x_low + down(x_high))` where `down` is one (gap 2) or two
/// (gap 4) stride-2 3×3 conv units.
pub fn bfm_forward(x_high: &Tensor, x_low: &Tensor, p: &BlockParams) -> Result<(Tensor, Tensor)> {
    p.expect(BlockKind::Bfm)?;
    p.check_inputs(&[x_high, x_low])?;
    let hd = x_high.dims();
    let up = ops::bilinear_upsample(&p.unit("up")?.apply(x_low)?, hd.h, hd.w)?;
    let high = ops::relu(&ops::add(x_high, &up)?);

    let mut d = p.unit("down0")?.apply(x_high)?;
    if let Some(second) = p.units.get("down1") {
        d = second.apply(&d)?;
    }
    let low = ops::relu(&ops::add(x_low, &d)?);
    Ok((high, low))
}

/// Intermediate tensors of one ELPPM evaluation.
#[derive(Debug, Clone)]
pub struct ElppmState {
    /// Pooled inputs of paths 1–4 (path 0 consumes the input directly).
    pub pooled: Vec<Tensor>,
    /// Per-path features after the 1×1 reduction (and upsampling for paths 1–4).
    pub mid: Vec<Tensor>,
    /// Per-path outputs of the hierarchical stage.
    pub out: Vec<Tensor>,
    pub fused: Tensor,
    pub shortcut: Tensor,
    pub output: Tensor,
}

pub fn elppm_forward(x: &Tensor, p: &BlockParams) -> Result<Tensor> {
    Ok(elppm_trace(x, p)?.output)
}

/// Five-path pyramid pooling with hierarchical residual blending, C → C/4.
pub fn elppm_trace(x: &Tensor, p: &BlockParams) -> Result<ElppmState> {
    p.expect(BlockKind::Elppm)?;
    p.check_inputs(&[x])?;
    let d = x.dims();
    let mut pooled = Vec::with_capacity(4);
    for &(k, s, pad) in &ELPPM_POOLS {
        pooled.push(ops::avg_pool(x, (k, k), (s, s), (pad, pad))?);
    }
    pooled.push(ops::global_avg_pool(x)?);

    let mut mid = vec![p.unit("path0.conv")?.apply(x)?];
    for (i, pooled_i) in pooled.iter().enumerate() {
        let reduced = p.unit(&format!("path{}.conv", i + 1))?.apply(pooled_i)?;
        mid.push(ops::bilinear_upsample(&reduced, d.h, d.w)?);
    }

    let mut out = vec![mid[0].clone()];
    for i in 1..5 {
        let merged = ops::add(&mid[i], &out[i - 1])?;
        let y = p.unit(&format!("path{i}.dw"))?.apply(&merged)?;
        out.push(p.unit(&format!("path{i}.pw"))?.apply(&y)?);
    }

    let stacked = ops::concat_channels(&out.iter().collect::<Vec<_>>())?;
    let fused = p.unit("fuse")?.apply(&stacked)?;
    let shortcut = p.unit("shortcut")?.apply(x)?;
    let output = ops::add(&fused, &shortcut)?;
    Ok(ElppmState { pooled, mid, out, fused, shortcut, output })
}

/// Returns `(feature, logit_map)`; the boundary probability is `logistic(logit)`.
pub fn boundary_head_forward(x: &Tensor, p: &BlockParams) -> Result<(Tensor, Tensor)> {
    p.expect(BlockKind::BoundaryHead)?;
    p.check_inputs(&[x])?;
    let feature = p.unit("embed")?.apply(x)?;
    let logit = p.unit("logit")?.apply(&feature)?;
    Ok((feature, logit))
}

/// `conv1x1(concat(high + U(context), boundary))` with norm and ReLU.
pub fn fusion_forward(high: &Tensor, context: &Tensor, boundary: &Tensor, p: &BlockParams) -> Result<Tensor> {
    p.expect(BlockKind::Fusion)?;
    p.check_inputs(&[high, context, boundary])?;
    let hd = high.dims();
    let ctx = ops::bilinear_upsample(context, hd.h, hd.w)?;
    let merged = ops::add(high, &ctx)?;
    let stacked = ops::concat_channels(&[&merged, boundary])?;
    p.unit("conv")?.apply(&stacked)
}

/// Depthwise 3×3 + norm + ReLU, then a biased 1×1 classifier. Logits at input resolution.
pub fn seg_head_forward(x: &Tensor, p: &BlockParams, num_classes: usize) -> Result<Tensor> {
    p.expect(BlockKind::SegHead)?;
    if num_classes < 1 {
        return Err(config("segmentation head needs at least one class"));
    }
    let BlockDef::SegHead { classes, .. } = p.def else { unreachable!() };
    if classes != num_classes {
        return Err(config(format!(
            "head was built for {classes} classes, asked for {num_classes}"
        )));
    }
    p.check_inputs(&[x])?;
    let y = p.unit("dw")?.apply(x)?;
    p.unit("cls")?.apply(&y)
}
