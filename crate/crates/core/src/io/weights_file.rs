//! DRBW: `"DRBW"`, u32 version (1), u32 entry count, then per entry
//! `{u32 name length, UTF-8 name, u32 rank, rank×u32 dims, f32 data}`. Entries sorted by name.

use std::path::Path;

use super::{dim_u32, put_f32s, put_u32, ByteReader};
use crate::error::{format_err, Result};
use crate::network::{Param, ParamSlot, WeightStore};

pub const MAGIC: &[u8; 4] = b"DRBW";
pub const VERSION: u32 = 1;

pub fn encode_weights(store: &WeightStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, dim_u32(store.len(), "entry count")?);
    for (name, p) in store.iter() {
        put_u32(&mut out, dim_u32(name.len(), "name length")?);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, dim_u32(p.shape.len(), "rank")?);
        for &d in &p.shape {
            put_u32(&mut out, dim_u32(d, "dimension")?);
        }
        put_f32s(&mut out, &p.data);
    }
    Ok(out)
}

/// Decoded entry plus the byte offset where it starts.
struct Entry {
    offset: usize,
    name: String,
    param: Param,
}

fn decode_entries(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(at, format!("unsupported DRBW version {version}")));
    }
    let count = r.u32("entry count")? as usize;
    let mut entries: Vec<Entry> = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let offset = r.offset();
        let len = r.u32("name length")? as usize;
        let raw = r.take(len, "name")?;
        let name = std::str::from_utf8(raw)
            .map_err(|_| format_err(offset + 4, "entry name is not UTF-8"))?
            .to_string();
        if let Some(prev) = entries.last() {
            if prev.name == name {
                return Err(format_err(offset, format!("duplicate entry `{name}`")));
            }
            if prev.name > name {
                return Err(format_err(
                    offset,
                    format!("entry `{name}` out of order after `{}`", prev.name),
                ));
            }
        }
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(format_err(offset, format!("entry `{name}` has implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format_err(offset, format!("entry `{name}` size overflows")))?;
        let data = r.f32_vec(numel, &format!("data of `{name}`"))?;
        entries.push(Entry {
            offset,
            name,
            param: Param { shape, data },
        });
    }
    r.expect_end()?;
    Ok(entries)
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore> {
    let mut store = WeightStore::new();
    for e in decode_entries(bytes)? {
        store.insert(e.name, e.param)?;
    }
    Ok(store)
}

/// Decodes and checks exact cover against `manifest`, naming any missing,
/// unknown or misshapen entry in a format error.
pub fn decode_weights_checked(bytes: &[u8], manifest: &[ParamSlot]) -> Result<WeightStore> {
    let entries = decode_entries(bytes)?;
    let mut expected: std::collections::BTreeMap<&str, &[usize]> =
        manifest.iter().map(|s| (s.name.as_str(), s.shape.as_slice())).collect();
    let mut store = WeightStore::new();
    for e in entries {
        match expected.remove(e.name.as_str()) {
            None => {
                return Err(format_err(e.offset, format!("unknown tensor `{}`", e.name)))
            }
            Some(shape) if shape != e.param.shape.as_slice() => {
                return Err(format_err(
                    e.offset,
                    format!(
                        "tensor `{}` has shape {:?}, expected {:?}",
                        e.name, e.param.shape, shape
                    ),
                ))
            }
            Some(_) => store.insert(e.name, e.param)?,
        }
    }
    if let Some((name, _)) = expected.into_iter().next() {
        return Err(format_err(bytes.len(), format!("missing tensor `{name}`")));
    }
    Ok(store)
}

pub fn write_weights(path: impl AsRef<Path>, store: &WeightStore) -> Result<()> {
    std::fs::write(path, encode_weights(store)?)?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    decode_weights(&std::fs::read(path)?)
}
