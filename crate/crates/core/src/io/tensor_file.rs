//! DRBT: `"DRBT"`, u32 version (1), u32 rank (4), 4×u32 dims, then f32 data, all little-endian.

use std::path::Path;

use super::{dim_u32, put_f32s, put_u32, ByteReader};
use crate::error::{format_err, Result};
use crate::tensor::{Dims, Tensor};

pub const MAGIC: &[u8; 4] = b"DRBT";
pub const VERSION: u32 = 1;

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + t.len() * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, 4);
    for d in t.dims().to_array() {
        put_u32(&mut out, dim_u32(d, "dimension")?);
    }
    put_f32s(&mut out, t.data());
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(at, format!("unsupported DRBT version {version}")));
    }
    let at = r.offset();
    let rank = r.u32("rank")?;
    if rank != 4 {
        return Err(format_err(at, format!("DRBT rank must be 4, found {rank}")));
    }
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = r.u32("dimension")? as usize;
    }
    let dims = Dims::from(dims);
    let numel = dims
        .n
        .checked_mul(dims.c)
        .and_then(|v| v.checked_mul(dims.h))
        .and_then(|v| v.checked_mul(dims.w))
        .ok_or_else(|| format_err(8, "dimension product overflows"))?;
    let data = r.f32_vec(numel, "tensor data")?;
    r.expect_end()?;
    Tensor::new(dims, data)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&std::fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_tensor(t)?)?;
    Ok(())
}
