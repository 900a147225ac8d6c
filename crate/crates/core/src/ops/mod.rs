//! Primitive numerical kernels. All are pure and deterministic at any thread count.

mod conv;
mod elementwise;
mod pool;
mod resize;

pub use conv::conv2d;
pub use elementwise::{add, affine_norm, concat_channels, relu};
pub use pool::{avg_pool, global_avg_pool};
pub use resize::bilinear_upsample;
