//! Full network assembly: plan, weights, seeded initialization and forward pass.

mod plan;
mod weights;

use std::collections::HashMap;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use plan::{build_plan, golden_table, widths, LayerDesc, LayerId, NetworkPlan, SizeRow, Stream, INPUT};
pub use weights::{Param, ParamSlot, WeightStore};

use crate::blocks::BlockParams;
use crate::error::{config, shape, Result};
use crate::io::weights_file;
use crate::ops;
use crate::tensor::{Dims, Tensor};

/// The three supervised outputs, all at the input's spatial resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub seg_logits: Tensor,
    pub aux_seg_logits: Tensor,
    /// Single-channel boundary logits; probabilities are `logistic(logit)`.
    pub boundary_logits: Tensor,
}

/// Draws every convolution weight from `U[−√(6/fan_in), +√(6/fan_in)]` with
/// a ChaCha8 generator seeded by `seed`, visiting parameters in name order and
/// elements in storage order. Norms start at γ=1, β=0, μ=0, σ²=1; biases at 0.
pub fn init_weights(plan: &NetworkPlan, seed: u64) -> Result<WeightStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for slot in plan.manifest()? {
        let n = &slot.name;
        let p = if n.ends_with(".norm.weight") || n.ends_with(".norm.running_var") {
            Param::filled(slot.shape.clone(), 1.0)
        } else if n.ends_with(".weight") {
            let fan_in: usize = slot.shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt() as f32;
            let dist = Uniform::new_inclusive(-bound, bound);
            let count: usize = slot.shape.iter().product();
            let data = (0..count).map(|_| dist.sample(&mut rng)).collect();
            Param::new(slot.shape.clone(), data)?
        } else {
            Param::filled(slot.shape.clone(), 0.0)
        };
        store.insert(slot.name, p)?;
    }
    Ok(store)
}

/// Reads a DRBW file and checks it covers `plan` exactly.
pub fn load_weights(path: impl AsRef<Path>, plan: &NetworkPlan) -> Result<WeightStore> {
    let bytes = std::fs::read(path)?;
    weights_file::decode_weights_checked(&bytes, &plan.manifest()?)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    weights_file::write_weights(path, store)
}

/// A plan with every block bound to its weights, ready for repeated forwards.
#[derive(Debug, Clone)]
pub struct Network {
    plan: NetworkPlan,
    blocks: Vec<BlockParams>,
    /// Index of the last layer reading each feature, for early release.
    last_use: HashMap<&'static str, usize>,
}

impl Network {
    pub fn new(plan: NetworkPlan, weights: &WeightStore) -> Result<Self> {
        weights.verify(&plan.manifest()?)?;
        let blocks = plan
            .layers
            .iter()
            .map(|l| BlockParams::load(l.block, l.prefix, weights))
            .collect::<Result<Vec<_>>>()?;
        let mut last_use = HashMap::new();
        for (i, l) in plan.layers.iter().enumerate() {
            for &name in &l.inputs {
                last_use.insert(name, i);
            }
        }
        Ok(Self { plan, blocks, last_use })
    }

    pub fn plan(&self) -> &NetworkPlan {
        &self.plan
    }

    pub fn forward(&self, input: &Tensor) -> Result<ForwardOutputs> {
        self.forward_observed(input, |_, _| {})
    }

    /// Forward pass that reports every produced feature to `observe`.
    ///
    /// After each layer the produced tensors are checked against the plan's
    /// symbolic shapes and for non-finite values.
    pub fn forward_observed(
        &self,
        input: &Tensor,
        mut observe: impl FnMut(&str, &Tensor),
    ) -> Result<ForwardOutputs> {
        let (h, w) = self.plan.input_hw;
        let d = input.dims();
        if d.c != 3 || d.h != h || d.w != w || d.n == 0 {
            return Err(shape(format!(
                "network built for (n, 3, {h}, {w}) input, got {d}"
            )));
        }
        input.validate_finite("input")?;
        let mut live: HashMap<&'static str, Tensor> = HashMap::new();
        live.insert(INPUT, input.clone());

        let keep = |name: &'static str| {
            matches!(name, "seg_logits" | "aux_logits" | "boundary_logits")
        };
        for (i, (layer, block)) in self.plan.layers.iter().zip(&self.blocks).enumerate() {
            let ins: Vec<&Tensor> = layer
                .inputs
                .iter()
                .map(|n| live.get(n).ok_or_else(|| config(format!("feature `{n}` not available"))))
                .collect::<Result<_>>()?;
            let outs = block.forward(&ins)?;
            for (&name, t) in layer.outputs.iter().zip(outs) {
                let want = self.plan.shape_of(name).expect("planned feature");
                let got = t.dims();
                if got != Dims::new(d.n, want.c, want.h, want.w) {
                    return Err(shape(format!(
                        "layer {} produced {got} for `{name}`, plan expects {}",
                        layer.id, want
                    )));
                }
                t.validate_finite(&format!("layer {} ({})", layer.id, layer.prefix))?;
                observe(name, &t);
                live.insert(name, t);
            }
            live.retain(|name, _| {
                keep(name) || self.last_use.get(name).is_none_or(|&last| last > i)
            });
        }

        let mut take = |name: &str| -> Result<Tensor> {
            let t = live
                .remove(name)
                .ok_or_else(|| config(format!("output `{name}` not produced")))?;
            let up = ops::bilinear_upsample(&t, h, w)?;
            up.validate_finite(&format!("output {name}"))?;
            Ok(up)
        };
        Ok(ForwardOutputs {
            seg_logits: take("seg_logits")?,
            aux_seg_logits: take("aux_logits")?,
            boundary_logits: take("boundary_logits")?,
        })
    }
}

/// One-shot forward pass.
pub fn forward(plan: &NetworkPlan, weights: &WeightStore, input: &Tensor) -> Result<ForwardOutputs> {
    Network::new(plan.clone(), weights)?.forward(input)
}
