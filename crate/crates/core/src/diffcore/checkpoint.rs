//! Flat binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CCGN"  u32 version
//! repeated until EOF:
//!   u32 name_len  name (UTF-8)  u32 rank  u64 dims[rank]  f64 payload[prod(dims)] (row-major)
//! ```

use std::io::{Read, Write};

use super::graph::ParamStore;
use super::tensor::Tensor;
use super::DiffError;

pub const MAGIC: &[u8; 4] = b"CCGN";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<(), DiffError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for (_, name, value) in store.iter() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&2u32.to_le_bytes())?;
        out.write_all(&(value.rows() as u64).to_le_bytes())?;
        out.write_all(&(value.cols() as u64).to_le_bytes())?;
        for v in value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DiffError> {
        if self.bytes.len() - self.pos < n {
            return Err(DiffError::Checkpoint(format!("truncated {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, DiffError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, DiffError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Reads every tensor in a checkpoint, in file order.
pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<(String, Tensor)>, DiffError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(DiffError::Checkpoint("bad magic bytes".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(DiffError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut tensors = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| DiffError::Checkpoint(format!("non UTF-8 name before byte {}", cur.pos)))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let dims = (0..rank).map(|_| cur.u64("dimension").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let (rows, cols) = match dims.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => return Err(DiffError::Checkpoint(format!("tensor '{name}' has rank {rank} > 2"))),
        };
        let count = rows.checked_mul(cols).ok_or_else(|| DiffError::Checkpoint("shape overflow".into()))?;
        let payload = cur.take(count.checked_mul(8).unwrap_or(usize::MAX), "payload")?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push((name, Tensor::from_vec(rows, cols, data).expect("length checked")));
    }
    Ok(tensors)
}

/// Overwrites store entries with checkpoint tensors of the same name and shape.
pub fn restore(store: &mut ParamStore, tensors: &[(String, Tensor)]) -> Result<(), DiffError> {
    for (name, value) in tensors {
        let id = store.find(name).ok_or_else(|| DiffError::Checkpoint(format!("unknown parameter '{name}'")))?;
        if store.get(id).shape() != value.shape() {
            return Err(DiffError::Checkpoint(format!(
                "shape of '{name}' is {:?}, checkpoint has {:?}",
                store.get(id).shape(),
                value.shape()
            )));
        }
        *store.get_mut(id) = value.clone();
    }
    Ok(())
}
