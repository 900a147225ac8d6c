//! Symbolic parameter and multiply-accumulate counting over a [`NetworkPlan`].
//!
//! Nothing here touches tensor data. Convolution MACs are the weight count
//! times the output area; norms, pooling, resizing, adds and concats cost
//! no MACs and are tallied as memory operations (elements written) instead.
//! FLOPs are reported as 2×MACs.

use std::fmt::Write as _;

use crate::blocks::{BlockKind, FeatureShape};
use crate::error::Result;
use crate::network::{build_plan, LayerId, NetworkPlan, Stream};
use crate::tensor::ConvSpec;

pub const CLAIMED_PARAMS: f64 = 2.3e6;
pub const CLAIMED_FLOPS: f64 = 11.9e9;
pub const PARAMS_TOLERANCE: f64 = 0.15;
pub const FLOPS_TOLERANCE: f64 = 0.30;
/// Candidate input resolutions `(h, w)` for the FLOP claim.
pub const CLAIM_RESOLUTIONS: [(usize, usize); 2] = [(1024, 1024), (1024, 2048)];
pub const FLOP_CONVENTION: &str = "FLOPs = 2 x MACs; norms, pooling, resizing and adds count 0 MACs";

/// Features enlarged to the input resolution after the last layer.
const FULL_RES_OUTPUTS: [&str; 3] = ["seg_logits", "aux_logits", "boundary_logits"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub id: LayerId,
    pub kind: BlockKind,
    pub stream: Stream,
    pub outputs: Vec<FeatureShape>,
    /// Convolution weights and biases.
    pub conv_params: u64,
    /// Four values per normalized channel.
    pub norm_params: u64,
    /// Scale and shift only.
    pub norm_learnable: u64,
    pub macs: u64,
    pub memory_ops: u64,
}

impl CostRow {
    pub fn params(&self) -> u64 {
        self.conv_params + self.norm_params
    }

    pub fn learnable(&self) -> u64 {
        self.conv_params + self.norm_learnable
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    /// `(h, w)`.
    pub resolution: (usize, usize),
    pub rows: Vec<CostRow>,
}

fn conv_weights(c: &ConvSpec) -> u64 {
    ((c.in_channels / c.groups) * c.out_channels * c.kernel.0 * c.kernel.1) as u64
}

/// Parameter totals; identical at every resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub total: u64,
    pub learnable: u64,
    pub conv: u64,
    pub norm: u64,
}

pub fn count_params(plan: &NetworkPlan) -> Result<ParamCount> {
    Ok(cost_report(plan)?.params())
}

/// Full report for `plan` at a different input resolution.
pub fn count_macs(plan: &NetworkPlan, resolution: (usize, usize)) -> Result<CostReport> {
    cost_report(&build_plan(plan.num_classes, resolution)?)
}

/// Per-layer costs at the plan's own resolution.
pub fn cost_report(plan: &NetworkPlan) -> Result<CostReport> {
    let (h, w) = plan.input_hw;
    let mut rows = Vec::with_capacity(plan.layers.len());
    for layer in &plan.layers {
        let inputs = plan.input_shapes(layer);
        let mut row = CostRow {
            id: layer.id,
            kind: layer.block.kind(),
            stream: layer.stream,
            outputs: plan.output_shapes(layer),
            conv_params: 0,
            norm_params: 0,
            norm_learnable: 0,
            macs: 0,
            memory_ops: layer.block.memory_ops(&inputs)?,
        };
        for site in layer.block.sites(&inputs)? {
            let conv = site.unit.conv;
            let weights = conv_weights(&conv);
            row.conv_params += weights + if conv.has_bias { conv.out_channels as u64 } else { 0 };
            if site.unit.norm {
                row.norm_params += 4 * conv.out_channels as u64;
                row.norm_learnable += 2 * conv.out_channels as u64;
            }
            row.macs += weights * (site.out_h * site.out_w) as u64;
        }
        for (name, s) in layer.outputs.iter().zip(&row.outputs) {
            if FULL_RES_OUTPUTS.contains(name) {
                row.memory_ops += (s.c * h * w) as u64;
            }
        }
        rows.push(row);
    }
    Ok(CostReport { resolution: plan.input_hw, rows })
}

fn giga(v: f64) -> f64 {
    v / 1e9
}

impl CostReport {
    pub fn params(&self) -> ParamCount {
        let conv: u64 = self.rows.iter().map(|r| r.conv_params).sum();
        let norm: u64 = self.rows.iter().map(|r| r.norm_params).sum();
        let learn: u64 = self.rows.iter().map(|r| r.norm_learnable).sum();
        ParamCount { total: conv + norm, learnable: conv + learn, conv, norm }
    }

    pub fn macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn flops(&self) -> u64 {
        2 * self.macs()
    }

    pub fn memory_ops(&self) -> u64 {
        self.rows.iter().map(|r| r.memory_ops).sum()
    }

    fn res_tag(&self) -> String {
        format!("{}x{}", self.resolution.1, self.resolution.0)
    }

    /// Aligned table with one row per layer and a totals line.
    pub fn to_table(&self) -> String {
        let header = ["layer", "kind", "stream", "output", "params", "MACs", "mem ops"];
        let mut cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.id.to_string(),
                    r.kind.as_str().to_string(),
                    r.stream.as_str().to_string(),
                    r.outputs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
                    r.params().to_string(),
                    r.macs.to_string(),
                    r.memory_ops.to_string(),
                ]
            })
            .collect();
        cells.push([
            "total".into(),
            String::new(),
            String::new(),
            String::new(),
            self.params().total.to_string(),
            self.macs().to_string(),
            self.memory_ops().to_string(),
        ]);
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        writeln!(out, "input {}", self.res_tag()).unwrap();
        let line = |out: &mut String, row: &[&str]| {
            for (i, (c, w)) in row.iter().zip(&widths).enumerate() {
                if i >= 4 {
                    write!(out, "  {c:>w$}").unwrap();
                } else {
                    write!(out, "{}{c:<w$}", if i == 0 { "" } else { "  " }).unwrap();
                }
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        };
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        let p = self.params();
        writeln!(out, "params: {} total, {} learnable ({} conv, {} norm)", p.total, p.learnable, p.conv, p.norm).unwrap();
        writeln!(out, "MACs: {:.3} G   FLOPs: {:.3} G", giga(self.macs() as f64), giga(self.flops() as f64)).unwrap();
        writeln!(out, "{FLOP_CONVENTION}").unwrap();
        out
    }

    /// `key=value` lines.
    pub fn to_machine(&self) -> String {
        let r = self.res_tag();
        let p = self.params();
        let mut out = String::new();
        writeln!(out, "resolution={r}").unwrap();
        writeln!(out, "params.total={}", p.total).unwrap();
        writeln!(out, "params.learnable={}", p.learnable).unwrap();
        writeln!(out, "params.conv={}", p.conv).unwrap();
        writeln!(out, "params.norm={}", p.norm).unwrap();
        writeln!(out, "macs.total@{r}={}", self.macs()).unwrap();
        writeln!(out, "flops.total@{r}={}", self.flops()).unwrap();
        writeln!(out, "gflops.total@{r}={:.4}", giga(self.flops() as f64)).unwrap();
        writeln!(out, "memops.total@{r}={}", self.memory_ops()).unwrap();
        for row in &self.rows {
            writeln!(out, "layer.{}.params={}", row.id, row.params()).unwrap();
            writeln!(out, "layer.{}.macs@{r}={}", row.id, row.macs).unwrap();
        }
        writeln!(out, "flops.convention=2xMACs").unwrap();
        out
    }
}

/// One number compared against its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimCheck {
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
}

impl ClaimCheck {
    /// Signed relative deviation from the target.
    pub fn delta(&self) -> f64 {
        (self.value - self.target) / self.target
    }

    pub fn pass(&self) -> bool {
        self.delta().abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClaimVerdict {
    pub params: ClaimCheck,
    /// `(resolution (h, w), check)` per candidate.
    pub flops: Vec<((usize, usize), ClaimCheck)>,
}

impl ClaimVerdict {
    pub fn params_pass(&self) -> bool {
        self.params.pass()
    }

    pub fn flops_pass(&self) -> bool {
        self.flops.iter().any(|(_, c)| c.pass())
    }

    pub fn pass(&self) -> bool {
        self.params_pass() && self.flops_pass()
    }

    /// Candidate resolution whose FLOPs lie closest to the target.
    pub fn nearest(&self) -> Option<(usize, usize)> {
        self.flops
            .iter()
            .min_by(|a, b| a.1.delta().abs().total_cmp(&b.1.delta().abs()))
            .map(|(r, _)| *r)
    }

    fn verdict(pass: bool) -> &'static str {
        if pass {
            "PASS"
        } else {
            "FAIL"
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        writeln!(
            out,
            "params {:.3} M vs {:.1} M: {:+.1}% (limit ±{:.0}%) {}",
            p.value / 1e6,
            p.target / 1e6,
            100.0 * p.delta(),
            100.0 * p.tolerance,
            Self::verdict(p.pass())
        )
        .unwrap();
        let nearest = self.nearest();
        for (res, c) in &self.flops {
            writeln!(
                out,
                "FLOPs@{}x{} {:.2} G vs {:.1} G: {:+.1}% (limit ±{:.0}%) {}{}",
                res.1,
                res.0,
                giga(c.value),
                giga(c.target),
                100.0 * c.delta(),
                100.0 * c.tolerance,
                Self::verdict(c.pass()),
                if Some(*res) == nearest { " (nearest)" } else { "" }
            )
            .unwrap();
        }
        writeln!(out, "{FLOP_CONVENTION}").unwrap();
        writeln!(out, "claims: {}", Self::verdict(self.pass())).unwrap();
        out
    }

    pub fn to_machine(&self) -> String {
        let mut out = String::new();
        writeln!(out, "claim.params.value={}", self.params.value).unwrap();
        writeln!(out, "claim.params.delta={:.6}", self.params.delta()).unwrap();
        writeln!(out, "claim.params.pass={}", self.params.pass()).unwrap();
        for (res, c) in &self.flops {
            let r = format!("{}x{}", res.1, res.0);
            writeln!(out, "claim.flops@{r}.value={}", c.value).unwrap();
            writeln!(out, "claim.flops@{r}.delta={:.6}", c.delta()).unwrap();
            writeln!(out, "claim.flops@{r}.pass={}", c.pass()).unwrap();
        }
        if let Some(r) = self.nearest() {
            writeln!(out, "claim.flops.nearest={}x{}", r.1, r.0).unwrap();
        }
        writeln!(out, "claim.pass={}", self.pass()).unwrap();
        out
    }
}

/// Checks a parameter total and per-resolution FLOP figures against the targets.
pub fn verify_claims(params: u64, flops: &[((usize, usize), u64)]) -> ClaimVerdict {
    ClaimVerdict {
        params: ClaimCheck { value: params as f64, target: CLAIMED_PARAMS, tolerance: PARAMS_TOLERANCE },
        flops: flops
            .iter()
            .map(|&(r, f)| (r, ClaimCheck { value: f as f64, target: CLAIMED_FLOPS, tolerance: FLOPS_TOLERANCE }))
            .collect(),
    }
}

/// Counts `plan` at every candidate resolution and checks the targets.
pub fn verify_plan(plan: &NetworkPlan) -> Result<ClaimVerdict> {
    let params = count_params(plan)?.total;
    let flops = CLAIM_RESOLUTIONS
        .iter()
        .map(|&r| Ok((r, count_macs(plan, r)?.flops())))
        .collect::<Result<Vec<_>>>()?;
    Ok(verify_claims(params, &flops))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_counts() {
        let plan = build_plan(19, (1024, 1024)).unwrap();
        let r = cost_report(&plan).unwrap();
        let stem = &r.rows[0];
        assert_eq!(stem.conv_params, 864);
        assert_eq!(stem.norm_learnable, 64);
        assert_eq!(stem.macs, 864 * 512 * 512);
    }

    #[test]
    fn params_out_of_band() {
        let v = verify_claims(3_100_000, &[((1024, 1024), 11_900_000_000)]);
        assert!(!v.params_pass());
        assert!((100.0 * v.params.delta() - 34.8).abs() < 0.05);
        assert!(v.to_text().contains("+34.8%"));
        assert!(verify_claims(2_200_000, &[]).params_pass());
    }

    #[test]
    fn nearer_resolution_is_flagged() {
        let v = verify_claims(2_300_000, &[((1024, 1024), 9_800_000_000), ((1024, 2048), 39_200_000_000)]);
        assert!(v.pass());
        assert_eq!(v.nearest(), Some((1024, 1024)));
    }

    #[test]
    fn rows_sum_to_totals() {
        let plan = build_plan(19, (512, 512)).unwrap();
        let r = cost_report(&plan).unwrap();
        assert_eq!(r.rows.len(), plan.layers.len());
        assert_eq!(r.params().total, r.rows.iter().map(|x| x.params()).sum::<u64>());
    }
}
