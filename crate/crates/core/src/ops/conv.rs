use rayon::prelude::*;

use crate::error::{config, shape, Result};
use crate::tensor::{ConvSpec, Dims, Tensor};

/// Direct zero-padded grouped convolution over NCHW tensors.
///
/// Each output plane `(n, oc)` is produced by one task. Within a plane every
/// element accumulates in the same order: input channels of the group outer,
/// kernel rows, then kernel columns. The bias is added last. The result is
/// therefore independent of how many threads rayon uses.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Tensor> {
    spec.validate()?;
    let d = input.dims();
    if d.c != spec.in_channels {
        return Err(config(format!(
            "conv expects {} input channels, got {}",
            spec.in_channels, d.c
        )));
    }
    if weights.dims() != spec.weight_dims() {
        return Err(config(format!(
            "conv weight dims {} do not match expected {}",
            weights.dims(),
            spec.weight_dims()
        )));
    }
    match (bias, spec.has_bias) {
        (Some(b), true) if b.len() != spec.out_channels => {
            return Err(config(format!(
                "bias has {} entries, expected {}",
                b.len(),
                spec.out_channels
            )))
        }
        (None, true) => return Err(config("conv spec requires a bias vector")),
        (Some(_), false) => return Err(config("conv spec has no bias but one was supplied")),
        _ => {}
    }
    let (oh, ow) = spec.output_hw(d.h, d.w)?;
    if oh == 0 || ow == 0 {
        return Err(shape("convolution output is empty"));
    }
    let out_dims = Dims::new(d.n, spec.out_channels, oh, ow);
    let out_plane = oh * ow;
    let mut out = vec![0.0f32; out_dims.numel()];

    let in_per_group = spec.in_channels / spec.groups;
    let out_per_group = spec.out_channels / spec.groups;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let wdata = weights.data();

    out.par_chunks_mut(out_plane).enumerate().for_each(|(idx, plane)| {
        let n = idx / spec.out_channels;
        let oc = idx % spec.out_channels;
        let group = oc / out_per_group;
        for icl in 0..in_per_group {
            let ic = group * in_per_group + icl;
            let src = input.plane(n, ic);
            let wbase = (oc * in_per_group + icl) * kh * kw;
            for ky in 0..kh {
                let (y0, y1) = valid_range(oh, d.h, sh, ky, ph);
                for kx in 0..kw {
                    let wv = wdata[wbase + ky * kw + kx];
                    let (x0, x1) = valid_range(ow, d.w, sw, kx, pw);
                    if x0 >= x1 {
                        continue;
                    }
                    for oy in y0..y1 {
                        let iy = oy * sh + ky - ph;
                        let row = &src[iy * d.w..(iy + 1) * d.w];
                        let dst = &mut plane[oy * ow + x0..oy * ow + x1];
                        let ix0 = x0 * sw + kx - pw;
                        if sw == 1 {
                            for (o, &v) in dst.iter_mut().zip(&row[ix0..ix0 + (x1 - x0)]) {
                                *o += wv * v;
                            }
                        } else {
                            for (j, o) in dst.iter_mut().enumerate() {
                                *o += wv * row[ix0 + j * sw];
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = bias {
            let bv = b[oc];
            for o in plane.iter_mut() {
                *o += bv;
            }
        }
    });

    Ok(Tensor::from_parts(out_dims, out))
}

/// Output indices `[lo, hi)` whose tap `k` lands inside `[0, in_size)`.
fn valid_range(out_size: usize, in_size: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // input index = o*stride + k - pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let limit = in_size + pad; // need o*stride + k < in_size + pad
    let hi = if limit <= k {
        0
    } else {
        ((limit - k - 1) / stride + 1).min(out_size)
    };
    (lo.min(hi), hi)
}
