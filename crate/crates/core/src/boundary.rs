//! Boundary targets from label maps via multi-scale Laplacian filtering.
//!
//! Each scale filters the label image with the 8-neighbour Laplacian at a
//! stride of 1, 2 or 4 (edge-replicate padding), keeps responses above
//! [`THRESHOLD`], and is enlarged back to full size. The three maps are
//! blended with fixed weights and thresholded again.

use crate::error::{config, shape, Result};
use crate::labels::{BoundaryMap, LabelMap};
use crate::ops;
use crate::tensor::Tensor;

pub const STRIDES: [usize; 3] = [1, 2, 4];
pub const THRESHOLD: f32 = 0.1;
pub const DEFAULT_WEIGHTS: [f32; 3] = [1.0 / 3.0; 3];

/// `|L * labels|` sampled every `stride` pixels, as a `(1, 1, ⌈h/s⌉, ⌈w/s⌉)` tensor.
pub fn laplacian_response(labels: &LabelMap, stride: usize) -> Result<Tensor> {
    if !STRIDES.contains(&stride) {
        return Err(config(format!("Laplacian stride must be 1, 2 or 4, got {stride}")));
    }
    let (h, w) = (labels.height(), labels.width());
    if h == 0 || w == 0 {
        return Err(shape("label map is empty"));
    }
    let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let out = Tensor::from_fn([1, 1, oh, ow], |_, _, oy, ox| {
        let (cy, cx) = ((oy * stride) as isize, (ox * stride) as isize);
        let mut acc = 0.0f32;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let v = labels.get(clamp(cy + dy, h), clamp(cx + dx, w)) as f32;
                acc += if dy == 0 && dx == 0 { 8.0 * v } else { -v };
            }
        }
        acc.abs()
    });
    Ok(out)
}

fn check_weights(weights: [f32; 3]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(config(format!("boundary fusion weights must be finite and non-negative, got {weights:?}")));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(config("boundary fusion weights are all zero"));
    }
    Ok(())
}

/// The blended multi-scale map before the final threshold, `(1, 1, h, w)`.
pub fn fused_response(labels: &LabelMap, weights: [f32; 3]) -> Result<Tensor> {
    check_weights(weights)?;
    let (h, w) = (labels.height(), labels.width());
    if h * w <= 2 {
        return Err(shape(format!("label map {h}x{w} is too small for boundary extraction")));
    }
    let mut fused = vec![0.0f32; h * w];
    for (&stride, &weight) in STRIDES.iter().zip(&weights) {
        let binary = laplacian_response(labels, stride)?.map(|v| if v > THRESHOLD { 1.0 } else { 0.0 });
        let full = ops::bilinear_upsample(&binary, h, w)?;
        for (f, &v) in fused.iter_mut().zip(full.data()) {
            *f += weight * v;
        }
    }
    Tensor::new([1, 1, h, w], fused)
}

/// Binary boundary target. Pixels next to an ignore label are cleared.
pub fn boundary_ground_truth(labels: &LabelMap, weights: [f32; 3]) -> Result<BoundaryMap> {
    let fused = fused_response(labels, weights)?;
    let (h, w) = (labels.height(), labels.width());
    let near_ignore = |y: usize, x: usize| {
        labels.ignore_value().is_some()
            && (y.saturating_sub(1)..(y + 2).min(h))
                .any(|yy| (x.saturating_sub(1)..(x + 2).min(w)).any(|xx| labels.is_ignored(labels.get(yy, xx))))
    };
    let data = fused.data();
    Ok(BoundaryMap::from_fn(h, w, |y, x| data[y * w + x] > THRESHOLD && !near_ignore(y, x)))
}
