//! Dense NCHW tensors and the descriptors consumed by the primitive ops.

use std::fmt;

use crate::error::{config, shape, Error, Result};

/// Rank-4 extents in (batch, channel, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn to_array(self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl From<[usize; 4]> for Dims {
    fn from(d: [usize; 4]) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Contiguous row-major f32 tensor. Immutable once built; ops return new tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Dims,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: impl Into<Dims>, data: Vec<f32>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.numel() {
            return Err(shape(format!(
                "buffer holds {} values but dims {} need {}",
                data.len(),
                dims,
                dims.numel()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: impl Into<Dims>, value: f32) -> Self {
        let dims = dims.into();
        Self {
            dims,
            data: vec![value; dims.numel()],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` in storage order.
    pub fn from_fn(dims: impl Into<Dims>, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.numel());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let d = self.dims;
        ((n * d.c + c) * d.h + y) * d.w + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(n, c, y, x)]
    }

    /// The `h·w` slice holding channel `c` of batch item `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Batch item `i` as a tensor with `n == 1`.
    pub fn batch_item(&self, i: usize) -> Result<Self> {
        if i >= self.dims.n {
            return Err(shape(format!("batch index {i} out of range for {}", self.dims)));
        }
        let per = self.dims.c * self.dims.plane();
        Ok(Self {
            dims: Dims::new(1, self.dims.c, self.dims.h, self.dims.w),
            data: self.data[i * per..(i + 1) * per].to_vec(),
        })
    }

    /// Stacks tensors with identical (c, h, w) along the batch axis.
    pub fn concat_batch(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| shape("cannot concatenate an empty batch list"))?;
        let d = first.dims;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            if (t.dims.c, t.dims.h, t.dims.w) != (d.c, d.h, d.w) {
                return Err(shape(format!("batch concat mismatch: {} vs {}", d, t.dims)));
            }
            n += t.dims.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            dims: Dims::new(n, d.c, d.h, d.w),
            data,
        })
    }

    /// Fails with a numeric error on the first NaN or infinity.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(pos) => Err(Error::Numeric {
                layer: context.to_string(),
                message: format!("non-finite value {} at flat index {pos}", self.data[pos]),
            }),
        }
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.numel(), data.len());
        Self { dims, data }
    }
}

/// Geometry of a 2-D convolution. Depthwise is `groups == in_channels == out_channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, no padding, dense, no bias.
    pub const fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: (1, 1),
            padding: (0, 0),
            groups: 1,
            has_bias: false,
        }
    }

    pub const fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1)
    }

    /// 3×3 "same" convolution (pad 1) with the given stride.
    pub const fn conv3x3(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self::new(in_channels, out_channels, 3)
            .with_stride(stride)
            .with_padding(1)
    }

    pub const fn depthwise3x3(channels: usize, stride: usize) -> Self {
        Self::conv3x3(channels, channels, stride).with_groups(channels)
    }

    pub const fn with_stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub const fn with_padding(mut self, p: usize) -> Self {
        self.padding = (p, p);
        self
    }

    pub const fn with_groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub const fn with_bias(mut self, b: bool) -> Self {
        self.has_bias = b;
        self
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups > 1 && self.groups == self.in_channels && self.groups == self.out_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(config("convolution channel counts must be positive"));
        }
        if self.groups == 0 {
            return Err(config("groups must be positive"));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(config(format!(
                "channels {}->{} not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(config("kernel extents must be at least 1"));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(config("stride must be at least 1"));
        }
        Ok(())
    }

    /// (out_channels, in_channels / groups, kh, kw).
    pub fn weight_dims(&self) -> Dims {
        Dims::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel.0,
            self.kernel.1,
        )
    }

    /// Output spatial extents for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = window_count(h, self.kernel.0, self.stride.0, self.padding.0);
        let ow = window_count(w, self.kernel.1, self.stride.1, self.padding.1);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(shape(format!(
                "convolution {:?} k{:?} s{:?} p{:?} yields an empty output for {h}x{w}",
                (self.in_channels, self.out_channels),
                self.kernel,
                self.stride,
                self.padding
            ))),
        }
    }
}

/// `⌊(size + 2·pad − kernel)/stride⌋ + 1`, or `None` if the window never fits.
pub fn window_count(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

/// Inference-mode per-channel normalization: `γ·(x − μ)/√(σ² + ε) + β`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

/// Epsilon used by every normalization layer in the network.
pub const NORM_EPS: f32 = 1e-5;

impl AffineNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            eps: NORM_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.mean.len() != c || self.var.len() != c {
            return Err(config("normalization parameter vectors differ in length"));
        }
        if self.var.iter().any(|&v| !(v >= 0.0)) {
            return Err(config("normalization variance must be non-negative"));
        }
        if !(self.eps >= 0.0) {
            return Err(config("normalization epsilon must be non-negative"));
        }
        Ok(())
    }
}
