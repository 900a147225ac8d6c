//! Naive reference implementations and fixtures shared by the integration tests.
//!
//! The oracles use signed index arithmetic, f64 accumulation and explicit
//! bounds checks so they share no code paths with the library kernels.

#![allow(dead_code)]

use drbanet::blocks::{BlockDef, BlockParams};
use drbanet::network::{Param, WeightStore};
use drbanet::{AffineNorm, ConvSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(r: &mut impl Rng, dims: [usize; 4]) -> Tensor {
    Tensor::from_fn(dims, |_, _, _, _| r.gen_range(-1.0f32..1.0))
}

/// `max |a − b| / max |b|`, 0 when both are zero.
pub fn rel_error(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    let diff = got.iter().zip(want).map(|(&g, &w)| (g as f64 - w).abs()).fold(0.0, f64::max);
    let scale = want.iter().map(|w| w.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn at(t: &Tensor, n: usize, c: usize, y: isize, x: isize) -> Option<f64> {
    let d = t.dims();
    if y < 0 || x < 0 || y >= d.h as isize || x >= d.w as isize {
        None
    } else {
        Some(t.at(n, c, y as usize, x as usize) as f64)
    }
}

pub fn conv_oracle(x: &Tensor, w: &Tensor, bias: Option<&[f32]>, s: &ConvSpec) -> (Vec<usize>, Vec<f64>) {
    let d = x.dims();
    let (kh, kw) = s.kernel;
    let (sh, sw) = s.stride;
    let (ph, pw) = s.padding;
    let oh = (d.h + 2 * ph - kh) / sh + 1;
    let ow = (d.w + 2 * pw - kw) / sw + 1;
    let cin_g = s.in_channels / s.groups;
    let cout_g = s.out_channels / s.groups;
    let mut out = Vec::new();
    for n in 0..d.n {
        for oc in 0..s.out_channels {
            let g = oc / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for icl in 0..cin_g {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * sh + ky) as isize - ph as isize;
                                let ix = (ox * sw + kx) as isize - pw as isize;
                                if let Some(v) = at(x, n, g * cin_g + icl, iy, ix) {
                                    acc += v * w.at(oc, icl, ky, kx) as f64;
                                }
                            }
                        }
                    }
                    if let Some(b) = bias {
                        acc += b[oc] as f64;
                    }
                    out.push(acc);
                }
            }
        }
    }
    (vec![d.n, s.out_channels, oh, ow], out)
}

pub fn avg_pool_oracle(x: &Tensor, k: (usize, usize), s: (usize, usize), p: (usize, usize)) -> (Vec<usize>, Vec<f64>) {
    let d = x.dims();
    let oh = (d.h + 2 * p.0 - k.0) / s.0 + 1;
    let ow = (d.w + 2 * p.1 - k.1) / s.1 + 1;
    let mut out = Vec::new();
    for n in 0..d.n {
        for c in 0..d.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let (mut sum, mut cnt) = (0.0f64, 0usize);
                    for ky in 0..k.0 {
                        for kx in 0..k.1 {
                            let iy = (oy * s.0 + ky) as isize - p.0 as isize;
                            let ix = (ox * s.1 + kx) as isize - p.1 as isize;
                            if let Some(v) = at(x, n, c, iy, ix) {
                                sum += v;
                                cnt += 1;
                            }
                        }
                    }
                    out.push(sum / cnt as f64);
                }
            }
        }
    }
    (vec![d.n, d.c, oh, ow], out)
}

/// Half-pixel-centre sampling: `src = (dst + 0.5)·in/out − 0.5`, clamped to the grid.
pub fn bilinear_oracle(x: &Tensor, oh: usize, ow: usize) -> Vec<f64> {
    let d = x.dims();
    let coord = |dst: usize, inn: usize, out: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * inn as f64 / out as f64 - 0.5).max(0.0);
        let lo = (src.floor() as usize).min(inn - 1);
        let hi = (lo + 1).min(inn - 1);
        (lo, hi, src - lo as f64)
    };
    let mut out = Vec::new();
    for n in 0..d.n {
        for c in 0..d.c {
            for oy in 0..oh {
                let (y0, y1, fy) = coord(oy, d.h, oh);
                for ox in 0..ow {
                    let (x0, x1, fx) = coord(ox, d.w, ow);
                    let p = |y: usize, xx: usize| x.at(n, c, y, xx) as f64;
                    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                    let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                    out.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    out
}

pub fn norm_oracle(x: &Tensor, n: &AffineNorm) -> Vec<f64> {
    let d = x.dims();
    let mut out = Vec::new();
    for b in 0..d.n {
        for c in 0..d.c {
            for &v in x.plane(b, c) {
                let std = (n.var[c] as f64 + n.eps as f64).sqrt();
                out.push(n.gamma[c] as f64 * (v as f64 - n.mean[c] as f64) / std + n.beta[c] as f64);
            }
        }
    }
    out
}

/// A store holding every parameter of `def` under `prefix`, filled by `fill(name, index)`.
pub fn block_store(def: BlockDef, prefix: &str, mut fill: impl FnMut(&str, usize) -> f32) -> WeightStore {
    let mut store = WeightStore::new();
    for slot in def.manifest(prefix).unwrap() {
        let count: usize = slot.shape.iter().product();
        let data = (0..count).map(|i| fill(&slot.name, i)).collect();
        store.insert(slot.name, Param::new(slot.shape, data).unwrap()).unwrap();
    }
    store
}

/// Random conv weights, positive variances, small random affine terms.
pub fn random_block(def: BlockDef, prefix: &str, seed: u64) -> BlockParams {
    let mut r = rng(seed);
    let store = block_store(def, prefix, |name, _| {
        if name.ends_with("running_var") {
            r.gen_range(0.5f32..1.5)
        } else if name.ends_with(".norm.weight") {
            r.gen_range(0.5f32..1.5)
        } else {
            r.gen_range(-0.5f32..0.5)
        }
    });
    BlockParams::load(def, prefix, &store).unwrap()
}
