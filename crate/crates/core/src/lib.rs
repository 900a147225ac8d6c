//! Reference implementation of a lightweight dual-resolution segmentation
//! network with boundary supervision.
//!
//! The crate covers the full inference path (stem, inverted-bottleneck
//! blocks, bilateral fusion, pyramid pooling, heads), the Laplacian
//! boundary-target pipeline, the training losses, mIoU evaluation, and a
//! symbolic parameter/MAC counter. Everything runs on the CPU in f32 with
//! deterministic reduction order.

pub mod accounting;
pub mod blocks;
pub mod boundary;
pub mod error;
pub mod io;
pub mod labels;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod tensor;

pub use error::{Error, Result};
pub use network::{build_plan, init_weights, ForwardOutputs, Network, NetworkPlan, WeightStore};
pub use tensor::{AffineNorm, ConvSpec, Dims, Tensor};
