//! Frame-level feature representations: MFCC front end, delta stacking, the
//! QBEF1 archive format and the external-feature import path.

mod archive;
mod deltas;
mod mfcc;

use thiserror::Error;

use crate::scalar::Real;

pub use archive::{
    decode_archive, encode_archive, import_external, read_archive, write_archive, FeatureArchive, ARCHIVE_MAGIC,
};
pub use deltas::compute_deltas;
pub use mfcc::{log_mel_energies, mfcc, MfccConfig, LOG_FLOOR};

/// Archive bytes, panicking on ids longer than 65535 bytes.
pub fn encode_archive_bytes<T: Real>(ms: &FeatureArchive<T>) -> Vec<u8> {
    encode_archive(ms).expect("encodable archive")
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("waveform too short: {samples} samples, need at least {needed} for one frame")]
    TooShort { samples: usize, needed: usize },
    #[error("sample rate mismatch: waveform {waveform} Hz, config {config} Hz")]
    RateMismatch { waveform: u32, config: u32 },
    #[error("invalid mfcc config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found} (record {id:?})")]
    DimMismatch { expected: usize, found: usize, id: String },
    #[error("bad archive magic")]
    BadMagic,
    #[error("malformed archive: {0}")]
    Malformed(String),
    #[error("invalid feature matrix: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Provenance tag of a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Mfcc39,
    Sae39,
    Imported,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Mfcc39 => 0,
            FeatureKind::Sae39 => 1,
            FeatureKind::Imported => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::Mfcc39),
            1 => Some(FeatureKind::Sae39),
            2 => Some(FeatureKind::Imported),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc39 => "mfcc39",
            FeatureKind::Sae39 => "sae39",
            FeatureKind::Imported => "imported",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mfcc39" | "mfcc" => Some(FeatureKind::Mfcc39),
            "sae39" | "sae" => Some(FeatureKind::Sae39),
            "imported" => Some(FeatureKind::Imported),
            _ => None,
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A `T x D` sequence of feature frames stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    data: Vec<T>,
    num_frames: usize,
    dim: usize,
    pub frame_shift_ms: f32,
    pub kind: FeatureKind,
}

impl<T: Real> FeatureMatrix<T> {
    /// Builds a matrix, rejecting empty shapes and non-finite entries.
    pub fn new(
        data: Vec<T>,
        num_frames: usize,
        dim: usize,
        frame_shift_ms: f32,
        kind: FeatureKind,
    ) -> Result<Self, FeatureError> {
        if num_frames == 0 || dim == 0 {
            return Err(FeatureError::InvalidMatrix(format!(
                "shape {num_frames}x{dim} is empty"
            )));
        }
        if data.len() != num_frames * dim {
            return Err(FeatureError::InvalidMatrix(format!(
                "{} values for shape {num_frames}x{dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self {
            data,
            num_frames,
            dim,
            frame_shift_ms,
            kind,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], frame_shift_ms: f32, kind: FeatureKind) -> Result<Self, FeatureError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(FeatureError::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.concat(), rows.len(), dim, frame_shift_ms, kind)
    }

    #[inline]
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[T] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Copy of frames `start..end`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Self {
        assert!(start < end && end <= self.num_frames);
        Self {
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            num_frames: end - start,
            dim: self.dim,
            frame_shift_ms: self.frame_shift_ms,
            kind: self.kind,
        }
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Real>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            num_frames: self.num_frames,
            dim: self.dim,
            frame_shift_ms: self.frame_shift_ms,
            kind: self.kind,
        }
    }

    /// Subtracts the per-dimension mean over frames.
    pub fn mean_normalized(&self) -> Self {
        let n = T::lit(self.num_frames as f64);
        let mut mean = vec![T::zero(); self.dim];
        for row in self.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let data = self
            .rows()
            .flat_map(|row| row.iter().zip(&mean).map(|(&v, &m)| v - m).collect::<Vec<_>>())
            .collect();
        Self { data, ..self.clone() }
    }
}
