use rayon::prelude::*;

use crate::error::{shape, Result};
use crate::tensor::{window_count, Dims, Tensor};

/// Average pooling with zero-excluded padding: the divisor counts only the
/// window positions that fall inside the input.
pub fn avg_pool(
    input: &Tensor,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor> {
    let d = input.dims();
    let (kh, kw) = kernel;
    let (sh, sw) = stride;
    let (ph, pw) = padding;
    if kh == 0 || kw == 0 {
        return Err(shape("pooling kernel must be at least 1x1"));
    }
    if ph >= kh || pw >= kw {
        // a window lying entirely in padding would have an empty divisor
        return Err(shape(format!(
            "pooling padding {padding:?} must be smaller than kernel {kernel:?}"
        )));
    }
    let (oh, ow) = match (window_count(d.h, kh, sh, ph), window_count(d.w, kw, sw, pw)) {
        (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
        _ => {
            return Err(shape(format!(
                "pooling k{kernel:?} s{stride:?} p{padding:?} degenerates on {}x{}",
                d.h, d.w
            )))
        }
    };
    let out_dims = Dims::new(d.n, d.c, oh, ow);
    let mut out = vec![0.0f32; out_dims.numel()];
    out.par_chunks_mut(oh * ow).enumerate().for_each(|(idx, plane)| {
        let src = input.plane(idx / d.c, idx % d.c);
        for oy in 0..oh {
            let y_lo = (oy * sh).saturating_sub(ph);
            let y_hi = (oy * sh + kh).saturating_sub(ph).min(d.h);
            for ox in 0..ow {
                let x_lo = (ox * sw).saturating_sub(pw);
                let x_hi = (ox * sw + kw).saturating_sub(pw).min(d.w);
                // f64 accumulation keeps the mean of a constant window exact
                let mut sum = 0.0f64;
                for y in y_lo..y_hi {
                    for &v in &src[y * d.w + x_lo..y * d.w + x_hi] {
                        sum += v as f64;
                    }
                }
                let count = (y_hi - y_lo) * (x_hi - x_lo);
                plane[oy * ow + ox] = (sum / count as f64) as f32;
            }
        }
    });
    Ok(Tensor::from_parts(out_dims, out))
}

/// Per-channel spatial mean, producing `(n, c, 1, 1)`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let d = input.dims();
    if d.h == 0 || d.w == 0 {
        return Err(shape("global pooling needs a non-empty spatial extent"));
    }
    let count = d.plane() as f64;
    let data = (0..d.n * d.c)
        .into_par_iter()
        .map(|idx| {
            let mut sum = 0.0f64;
            for &v in input.plane(idx / d.c, idx % d.c) {
                sum += v as f64;
            }
            (sum / count) as f32
        })
        .collect();
    Ok(Tensor::from_parts(Dims::new(d.n, d.c, 1, 1), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_mean() {
        let x = Tensor::new([1, 1, 4, 4], (1..=16).map(|v| v as f32).collect()).unwrap();
        let y = avg_pool(&x, (2, 2), (2, 2), (0, 0)).unwrap();
        assert_eq!(y.data(), &[3.5, 5.5, 11.5, 13.5]);
    }

    #[test]
    fn padding_excluded_from_divisor() {
        let x = Tensor::full([1, 2, 5, 7], 3.25);
        let y = avg_pool(&x, (5, 5), (2, 2), (2, 2)).unwrap();
        assert_eq!(y.dims(), Dims::new(1, 2, 3, 4));
        assert!(y.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn global_mean() {
        let x = Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.5]);
    }

    #[test]
    fn degenerate_window_rejected() {
        let x = Tensor::zeros([1, 1, 3, 3]);
        assert!(avg_pool(&x, (5, 5), (1, 1), (0, 0)).is_err());
        assert!(avg_pool(&x, (2, 2), (1, 1), (2, 2)).is_err());
    }
}
