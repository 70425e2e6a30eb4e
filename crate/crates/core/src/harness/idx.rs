//! Big-endian IDX files: `u32` magic, one `u32` per dimension, then `u8` data.

use std::path::Path;

use crate::diffcore::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("bad magic 0x{found:08x} at byte 0 (expected 0x{expected:08x})")]
    BadMagic { found: u32, expected: u32 },
    #[error("file truncated at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], IdxError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(IdxError::Truncated { offset: self.bytes.len(), needed: n - available });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IdxError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn header<'a>(bytes: &'a [u8], expected: u32, dims: usize) -> Result<(Reader<'a>, Vec<usize>), IdxError> {
    let mut r = Reader { bytes, pos: 0 };
    let found = r.u32()?;
    if found != expected {
        return Err(IdxError::BadMagic { found, expected });
    }
    let shape = (0..dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
    Ok((r, shape))
}

/// Images as rows of `rows·cols` pixels scaled to `[0, 1]`.
pub fn parse_images(bytes: &[u8]) -> Result<Tensor, IdxError> {
    let (mut r, shape) = header(bytes, IMAGES_MAGIC, 3)?;
    let (n, d) = (shape[0], shape[1] * shape[2]);
    let pixels = r.take(n * d)?;
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Ok(Tensor::from_vec(n, d, data).expect("n x d"))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>, IdxError> {
    let (mut r, shape) = header(bytes, LABELS_MAGIC, 1)?;
    Ok(r.take(shape[0])?.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<(Tensor, Vec<usize>), IdxError> {
    let x = parse_images(&read(images)?)?;
    let y = parse_labels(&read(labels)?)?;
    if x.rows() != y.len() {
        return Err(IdxError::CountMismatch { images: x.rows(), labels: y.len() });
    }
    Ok((x, y))
}
