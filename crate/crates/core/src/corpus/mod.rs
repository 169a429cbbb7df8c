//! Audio ingestion, manifests, keyword sets and the seeded synthetic corpus.

mod manifest;
mod synth;
mod wav;

use thiserror::Error;

pub use manifest::{GroundTruth, KeywordSet, Manifest, ManifestEntry, Occurrence, Split};
pub use synth::{
    generate_synthetic, split_archive_name, SplitCounts, SyntheticCorpus, SyntheticSpec, EXEMPLAR_ARCHIVE,
    GROUND_TRUTH_FILE, KEYWORD_FILE, MANIFEST_FILE,
};
pub use wav::{load_wav, Waveform};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt wav header: {0}")]
    CorruptHeader(String),
    #[error("audio file has no samples")]
    EmptyAudio,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unresolvable path {0:?}")]
    MissingPath(String),
    #[error("invalid keyword set: {0}")]
    InvalidKeywordSet(String),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
