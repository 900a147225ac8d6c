use rayon::prelude::*;

use crate::error::{config, shape, Result};
use crate::tensor::{AffineNorm, Dims, Tensor};

pub fn affine_norm(input: &Tensor, norm: &AffineNorm) -> Result<Tensor> {
    norm.validate()?;
    let d = input.dims();
    if norm.channels() != d.c {
        return Err(config(format!(
            "norm has {} channels, tensor has {}",
            norm.channels(),
            d.c
        )));
    }
    let mut out = input.data().to_vec();
    out.par_chunks_mut(d.plane().max(1)).enumerate().for_each(|(idx, plane)| {
        let c = idx % d.c;
        let inv = 1.0 / (norm.var[c] + norm.eps).sqrt();
        let (g, b, m) = (norm.gamma[c], norm.beta[c], norm.mean[c]);
        for v in plane.iter_mut() {
            *v = g * (*v - m) * inv + b;
        }
    });
    Ok(Tensor::from_parts(d, out))
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(shape(format!("add: {} vs {}", a.dims(), b.dims())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_parts(a.dims(), data))
}

/// Concatenates along the channel axis in argument order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| shape("concat_channels needs at least one tensor"))?;
    let d0 = first.dims();
    for t in parts {
        let d = t.dims();
        if (d.n, d.h, d.w) != (d0.n, d0.h, d0.w) {
            return Err(shape(format!("concat_channels: {} vs {}", d0, d)));
        }
    }
    let c: usize = parts.iter().map(|t| t.dims().c).sum();
    let out_dims = Dims::new(d0.n, c, d0.h, d0.w);
    let mut data = Vec::with_capacity(out_dims.numel());
    for n in 0..d0.n {
        for t in parts {
            let per = t.dims().c * d0.plane();
            data.extend_from_slice(&t.data()[n * per..(n + 1) * per]);
        }
    }
    Ok(Tensor::from_parts(out_dims, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_hand_value() {
        let x = Tensor::full([1, 1, 1, 1], 5.0);
        let norm = AffineNorm {
            gamma: vec![2.0],
            beta: vec![3.0],
            mean: vec![1.0],
            var: vec![4.0],
            eps: 0.0,
        };
        assert_eq!(affine_norm(&x, &norm).unwrap().data(), &[7.0]);
    }

    #[test]
    fn norm_identity() {
        let x = Tensor::from_fn([2, 3, 2, 2], |n, c, y, x| (n + c) as f32 * 0.5 - (y * x) as f32);
        let mut norm = AffineNorm::identity(3);
        norm.eps = 0.0;
        assert_eq!(affine_norm(&x, &norm).unwrap(), x);
    }

    #[test]
    fn norm_channel_mismatch() {
        let x = Tensor::zeros([1, 2, 1, 1]);
        assert!(matches!(
            affine_norm(&x, &AffineNorm::identity(3)),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::new([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::full([1, 2, 2, 2], -3.0);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn add_zero_and_mismatch() {
        let x = Tensor::from_fn([1, 2, 2, 2], |_, c, y, x| (c * 4 + y * 2 + x) as f32);
        assert_eq!(add(&x, &Tensor::zeros(x.dims())).unwrap(), x);
        assert!(add(&x, &Tensor::zeros([1, 2, 2, 3])).is_err());
    }

    #[test]
    fn concat_order() {
        let a = Tensor::full([1, 2, 1, 1], 1.0);
        let b = Tensor::full([1, 3, 1, 1], 2.0);
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_interleaves_batches() {
        let a = Tensor::from_fn([2, 1, 1, 1], |n, _, _, _| n as f32);
        let b = Tensor::from_fn([2, 1, 1, 1], |n, _, _, _| 10.0 + n as f32);
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.data(), &[0.0, 10.0, 1.0, 11.0]);
    }
}
