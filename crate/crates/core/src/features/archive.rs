//! QBEF1 feature archives.
//!
//! Layout (little-endian): magic `QBEF1\0`, `u32` record count, then per
//! record `u16` id length, UTF-8 id, `u32` frames, `u32` dim,
//! `f32` frame shift in ms, `u8` feature kind, and `frames * dim` `f32`
//! values in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{FeatureError, FeatureKind, FeatureMatrix};
use crate::scalar::Real;

pub const ARCHIVE_MAGIC: &[u8; 6] = b"QBEF1\0";

/// Records keyed (and therefore ordered) by id.
pub type FeatureArchive<T> = BTreeMap<String, FeatureMatrix<T>>;

pub fn encode_archive<T: Real>(ms: &FeatureArchive<T>) -> Result<Vec<u8>, FeatureError> {
    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&(ms.len() as u32).to_le_bytes());
    for (id, m) in ms {
        let id_len = u16::try_from(id.len()).map_err(|_| FeatureError::Malformed(format!("id too long: {id:?}")))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&(m.num_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
        out.extend_from_slice(&m.frame_shift_ms.to_le_bytes());
        out.push(m.kind.code());
        for v in m.as_slice() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FeatureError::Malformed(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, FeatureError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FeatureError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_archive<T: Real>(bytes: &[u8]) -> Result<FeatureArchive<T>, FeatureError> {
    if bytes.len() < ARCHIVE_MAGIC.len() || &bytes[..6] != ARCHIVE_MAGIC {
        return Err(FeatureError::BadMagic);
    }
    let mut cur = Cursor { buf: bytes, pos: 6 };
    let count = cur.u32()?;
    let mut out = FeatureArchive::new();
    let mut shared_dim: Option<usize> = None;
    for _ in 0..count {
        let id_len = cur.u16()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?)
            .map_err(|_| FeatureError::Malformed("id is not UTF-8".into()))?
            .to_string();
        let frames = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let shift = cur.f32()?;
        let kind_code = cur.take(1)?[0];
        let kind = FeatureKind::from_code(kind_code)
            .ok_or_else(|| FeatureError::Malformed(format!("unknown feature kind {kind_code}")))?;
        match shared_dim {
            Some(d) if d != dim => {
                return Err(FeatureError::DimMismatch {
                    expected: d,
                    found: dim,
                    id,
                })
            }
            _ => shared_dim = Some(dim),
        }
        let n = frames
            .checked_mul(dim)
            .ok_or_else(|| FeatureError::Malformed("shape overflow".into()))?;
        let raw = cur.take(
            n.checked_mul(4)
                .ok_or_else(|| FeatureError::Malformed("shape overflow".into()))?,
        )?;
        let data: Vec<T> = raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        let m = FeatureMatrix::new(data, frames, dim, shift, kind)?;
        if out.insert(id.clone(), m).is_some() {
            return Err(FeatureError::Malformed(format!("duplicate id {id:?}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(FeatureError::Malformed("trailing bytes".into()));
    }
    Ok(out)
}

/// Writes `ms` to `path`. Values are stored as `f32`.
pub fn write_archive<T: Real>(ms: &FeatureArchive<T>, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let bytes = encode_archive(ms)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_archive<T: Real>(path: impl AsRef<Path>) -> Result<FeatureArchive<T>, FeatureError> {
    decode_archive(&fs::read(path)?)
}

/// Loads an archive produced by an external extractor (bottleneck features
/// and the like), tagging every record as imported.
pub fn import_external<T: Real>(
    path: impl AsRef<Path>,
    expected_dim: usize,
) -> Result<FeatureArchive<T>, FeatureError> {
    let mut ms = read_archive::<T>(path)?;
    for (id, m) in ms.iter_mut() {
        if m.dim() != expected_dim {
            return Err(FeatureError::DimMismatch {
                expected: expected_dim,
                found: m.dim(),
                id: id.clone(),
            });
        }
        m.kind = FeatureKind::Imported;
    }
    Ok(ms)
}
