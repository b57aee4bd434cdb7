use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamRegistry;
use crate::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MSFC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes a registry: magic, version, then per parameter the name
/// length (u16), name, rows and cols (u32) and row-major f64 values, all
/// little-endian.
pub fn encode_checkpoint(params: &ParamRegistry) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + params.scalar_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, m) in params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::contract(format!("parameter name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<ParamRegistry, String> {
    struct Reader<'a>(&'a [u8]);
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
            if self.0.len() < n {
                return Err("truncated checkpoint".into());
            }
            let (head, tail) = self.0.split_at(n);
            self.0 = tail;
            Ok(head)
        }
        fn u32(&mut self) -> std::result::Result<u32, String> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
    }
    let mut r = Reader(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let mut reg = ParamRegistry::new();
    while !r.0.is_empty() {
        let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "parameter name is not UTF-8".to_string())?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let count = rows.checked_mul(cols).ok_or("parameter too large")?;
        let raw = r.take(count.checked_mul(8).ok_or("parameter too large")?)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let m = Matrix::new(rows, cols, values).map_err(|e| format!("parameter {name}: {e}"))?;
        reg.insert(name, m).map_err(|e| e.to_string())?;
    }
    Ok(reg)
}

pub fn save_checkpoint(path: &Path, params: &ParamRegistry) -> Result<()> {
    fs::write(path, encode_checkpoint(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamRegistry> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|m| Error::format(path, m))
}
