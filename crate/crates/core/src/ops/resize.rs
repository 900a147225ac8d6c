use rayon::prelude::*;

use crate::error::{shape, Result};
use crate::tensor::{Dims, Tensor};

/// Source sample for one output coordinate: lower index, upper index, upper weight.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

/// Half-pixel (align-corners = false) source taps, clamped at both borders.
fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f32 / dst as f32;
    (0..dst)
        .map(|o| {
            let s = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let lo = (s.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = if lo == hi { 0.0 } else { s - lo as f32 };
            Tap { lo, hi, frac }
        })
        .collect()
}

/// Bilinear enlargement to `out_h × out_w`. Downsampling requests are rejected.
pub fn bilinear_upsample(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let d = input.dims();
    if d.h == 0 || d.w == 0 {
        return Err(shape("cannot upsample an empty tensor"));
    }
    if out_h < d.h || out_w < d.w {
        return Err(shape(format!(
            "bilinear_upsample only enlarges: {}x{} -> {out_h}x{out_w}",
            d.h, d.w
        )));
    }
    let ty = taps(d.h, out_h);
    let tx = taps(d.w, out_w);
    let out_dims = Dims::new(d.n, d.c, out_h, out_w);
    let mut out = vec![0.0f32; out_dims.numel()];
    out.par_chunks_mut(out_h * out_w).enumerate().for_each(|(idx, plane)| {
        let src = input.plane(idx / d.c, idx % d.c);
        for (oy, y) in ty.iter().enumerate() {
            let r0 = &src[y.lo * d.w..(y.lo + 1) * d.w];
            let r1 = &src[y.hi * d.w..(y.hi + 1) * d.w];
            for (ox, x) in tx.iter().enumerate() {
                let top = r0[x.lo] + (r0[x.hi] - r0[x.lo]) * x.frac;
                let bottom = r1[x.lo] + (r1[x.hi] - r1[x.lo]) * x.frac;
                plane[oy * out_w + ox] = top + (bottom - top) * y.frac;
            }
        }
    });
    Ok(Tensor::from_parts(out_dims, out))
}
