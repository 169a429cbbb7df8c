//! Exemplar matching: per-frame cosine cost, endpoint-constrained DTW,
//! sliding-window subsequence search and the distillation targets derived
//! from it.

mod align;
mod scores;
mod sweep;

use thiserror::Error;

pub use align::{cosine_cost, dtw_align, dtw_align_banded};
pub use scores::{format_sig9, make_targets, targets_to_matrix, Polarity, ScoreMatrix, TargetVector};
pub use sweep::{
    keyword_score, keyword_score_ks, keyword_score_qbye, search_corpus, sweep_min, window_lengths, ScoreMode, SweepHit,
};

#[derive(Debug, Error)]
pub enum DtwError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty exemplar list")]
    EmptyExemplarList,
    #[error("missing features for {0:?}")]
    MissingFeatures(String),
    #[error("mixed feature kinds: {0} and {1}")]
    MixedFeatureKinds(crate::features::FeatureKind, crate::features::FeatureKind),
    #[error("cost {value} for ({utterance}, {keyword}) outside [0, 2]")]
    OutOfRange {
        utterance: String,
        keyword: String,
        value: f64,
    },
    #[error("invalid dtw config: {0}")]
    InvalidConfig(String),
    #[error("{line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Window policy of the subsequence search.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwConfig {
    /// Stride between window start offsets, in frames.
    pub window_skip: usize,
    /// Window lengths as (min, max) multiples of the exemplar length.
    pub length_factors: (f64, f64),
    /// Number of evenly spaced factors sampled from `length_factors`.
    pub length_steps: usize,
    /// Optional Sakoe-Chiba radius inside each window.
    pub band_width: Option<usize>,
}

impl Default for DtwConfig {
    fn default() -> Self {
        Self {
            window_skip: 3,
            length_factors: (0.8, 1.2),
            length_steps: 3,
            band_width: None,
        }
    }
}

impl DtwConfig {
    pub fn validate(&self) -> Result<(), DtwError> {
        let (lo, hi) = self.length_factors;
        if self.window_skip == 0 {
            return Err(DtwError::InvalidConfig("window_skip must be at least 1".into()));
        }
        if !(0.0 < lo && lo <= 1.0 && 1.0 <= hi) {
            return Err(DtwError::InvalidConfig(
                "length factors need 0 < min <= 1 <= max".into(),
            ));
        }
        if self.length_steps == 0 {
            return Err(DtwError::InvalidConfig("length_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// The length-factor grid.
    pub fn factors(&self) -> Vec<f64> {
        let (lo, hi) = self.length_factors;
        if self.length_steps == 1 || lo == hi {
            return vec![if lo == hi { lo } else { 1.0 }];
        }
        (0..self.length_steps)
            .map(|i| lo + (hi - lo) * i as f64 / (self.length_steps - 1) as f64)
            .collect()
    }
}
