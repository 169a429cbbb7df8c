use rayon::prelude::*;

use super::align::{band_test, cost_matrix, frame_norms, DpScratch};
use super::{DtwConfig, DtwError, Polarity, ScoreMatrix};
use crate::corpus::KeywordSet;
use crate::features::{FeatureArchive, FeatureMatrix};
use crate::scalar::Real;

/// Best window found by [`sweep_min`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepHit<T> {
    pub cost: T,
    pub offset: usize,
    pub length: usize,
}

/// Candidate window lengths for an exemplar of `keyword_frames` frames,
/// ascending and deduplicated.
pub fn window_lengths(keyword_frames: usize, cfg: &DtwConfig) -> Vec<usize> {
    let mut lens: Vec<usize> = cfg
        .factors()
        .iter()
        .map(|f| ((f * keyword_frames as f64).round() as usize).max(1))
        .collect();
    lens.sort_unstable();
    lens.dedup();
    lens
}

/// Minimum DTW cost of `keyword` over windows of `utterance`.
///
/// Windows start at multiples of `window_skip` and take every length from
/// [`window_lengths`]; a window that would run past the end of the utterance
/// is only used when the utterance is shorter than that length, in which case
/// the whole utterance is the window. Ties go to the earliest offset, then
/// the shortest length.
pub fn sweep_min<T: Real>(
    keyword: &FeatureMatrix<T>,
    utterance: &FeatureMatrix<T>,
    cfg: &DtwConfig,
) -> Result<SweepHit<T>, DtwError> {
    if keyword.dim() != utterance.dim() {
        return Err(DtwError::DimMismatch(keyword.dim(), utterance.dim()));
    }
    cfg.validate()?;
    let cost = cost_matrix(keyword, &frame_norms(keyword), utterance, &frame_norms(utterance));
    Ok(sweep_costs(
        &cost,
        keyword.num_frames(),
        utterance.num_frames(),
        cfg,
        &mut DpScratch::new(),
    ))
}

fn sweep_costs<T: Real>(cost: &[T], n: usize, ts: usize, cfg: &DtwConfig, scratch: &mut DpScratch<T>) -> SweepHit<T> {
    let lengths = window_lengths(n, cfg);
    let mut best = SweepHit {
        cost: T::infinity(),
        offset: usize::MAX,
        length: usize::MAX,
    };
    let mut offer = |c: T, offset: usize, length: usize| {
        if c < best.cost || (c == best.cost && (offset, length) < (best.offset, best.length)) {
            best = SweepHit {
                cost: c,
                offset,
                length,
            };
        }
    };

    // whole-utterance window, for every length that does not fit
    if lengths.iter().any(|&w| w >= ts) {
        match cfg.band_width {
            None => scratch.run(cost, ts, n, 0, ts, None, |j, acc, nodes| {
                if j == ts - 1 {
                    offer(acc / T::lit(nodes as f64), 0, ts);
                }
            }),
            Some(r) => {
                let band = band_test(n, ts, r);
                scratch.run(cost, ts, n, 0, ts, Some(&band), |j, acc, nodes| {
                    if j == ts - 1 {
                        offer(acc / T::lit(nodes as f64), 0, ts);
                    }
                });
            }
        }
    }
    let fitting: Vec<usize> = lengths.iter().copied().filter(|&w| w < ts).collect();
    let Some(&longest) = fitting.last() else {
        return best;
    };
    let shortest = fitting[0];
    let mut offset = 0;
    while offset + shortest <= ts {
        match cfg.band_width {
            None => {
                // one DP pass per offset scores every length
                let width = longest.min(ts - offset);
                scratch.run(cost, ts, n, offset, width, None, |j, acc, nodes| {
                    let w = j + 1;
                    if fitting.binary_search(&w).is_ok() {
                        offer(acc / T::lit(nodes as f64), offset, w);
                    }
                });
            }
            Some(r) => {
                for &w in fitting.iter().filter(|&&w| offset + w <= ts) {
                    let band = band_test(n, w, r);
                    scratch.run(cost, ts, n, offset, w, Some(&band), |j, acc, nodes| {
                        if j == w - 1 {
                            offer(acc / T::lit(nodes as f64), offset, w);
                        }
                    });
                }
            }
        }
        offset += cfg.window_skip;
    }
    best
}

/// How per-exemplar sweep costs are combined into one keyword score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Minimum over exemplars.
    Ks,
    /// Mean over exemplars.
    Qbye,
}

impl ScoreMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ks" | "dtw-ks" => Some(ScoreMode::Ks),
            "qbye" | "dtw-qbye" => Some(ScoreMode::Qbye),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Ks => "dtw-ks",
            ScoreMode::Qbye => "dtw-qbye",
        }
    }
}

fn exemplar_costs<T: Real>(
    exemplars: &[&FeatureMatrix<T>],
    utterance: &FeatureMatrix<T>,
    cfg: &DtwConfig,
) -> Result<Vec<T>, DtwError> {
    if exemplars.is_empty() {
        return Err(DtwError::EmptyExemplarList);
    }
    cfg.validate()?;
    let un = frame_norms(utterance);
    let mut scratch = DpScratch::new();
    exemplars
        .iter()
        .map(|k| {
            if k.dim() != utterance.dim() {
                return Err(DtwError::DimMismatch(k.dim(), utterance.dim()));
            }
            let cost = cost_matrix(k, &frame_norms(k), utterance, &un);
            Ok(sweep_costs(&cost, k.num_frames(), utterance.num_frames(), cfg, &mut scratch).cost)
        })
        .collect()
}

/// Minimum over exemplars of [`sweep_min`].
pub fn keyword_score_ks<T: Real>(
    exemplars: &[&FeatureMatrix<T>],
    utterance: &FeatureMatrix<T>,
    cfg: &DtwConfig,
) -> Result<T, DtwError> {
    Ok(exemplar_costs(exemplars, utterance, cfg)?
        .into_iter()
        .fold(T::infinity(), T::min))
}

/// Mean over exemplars of [`sweep_min`].
pub fn keyword_score_qbye<T: Real>(
    exemplars: &[&FeatureMatrix<T>],
    utterance: &FeatureMatrix<T>,
    cfg: &DtwConfig,
) -> Result<T, DtwError> {
    let costs = exemplar_costs(exemplars, utterance, cfg)?;
    let n = T::lit(costs.len() as f64);
    Ok(costs.into_iter().sum::<T>() / n)
}

pub fn keyword_score<T: Real>(
    exemplars: &[&FeatureMatrix<T>],
    utterance: &FeatureMatrix<T>,
    cfg: &DtwConfig,
    mode: ScoreMode,
) -> Result<T, DtwError> {
    match mode {
        ScoreMode::Ks => keyword_score_ks(exemplars, utterance, cfg),
        ScoreMode::Qbye => keyword_score_qbye(exemplars, utterance, cfg),
    }
}

/// Scores every (utterance, keyword) pair.
///
/// Cells are computed independently in parallel on the current rayon pool;
/// the result does not depend on the number of threads.
pub fn search_corpus<T: Real>(
    keywords: &KeywordSet,
    exemplars: &FeatureArchive<T>,
    utterances: &FeatureArchive<T>,
    cfg: &DtwConfig,
    mode: ScoreMode,
) -> Result<ScoreMatrix, DtwError> {
    cfg.validate()?;
    let mut kind = None;
    for m in exemplars.values().chain(utterances.values()) {
        match kind {
            None => kind = Some(m.kind),
            Some(k) if k != m.kind => return Err(DtwError::MixedFeatureKinds(k, m.kind)),
            _ => {}
        }
    }
    let per_keyword: Vec<Vec<&FeatureMatrix<T>>> = keywords
        .keywords()
        .iter()
        .map(|kw| {
            keywords
                .exemplars(kw)
                .iter()
                .map(|id| exemplars.get(id).ok_or_else(|| DtwError::MissingFeatures(id.clone())))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let utts: Vec<(&String, &FeatureMatrix<T>)> = utterances.iter().collect();
    let l = per_keyword.len();
    let cells: Vec<f64> = (0..utts.len() * l)
        .into_par_iter()
        .map(|cell| {
            let (u, k) = (cell / l, cell % l);
            keyword_score(&per_keyword[k], utts[u].1, cfg, mode).map(|c| c.as_f64())
        })
        .collect::<Result<_, _>>()?;
    ScoreMatrix::new(
        utts.iter().map(|(id, _)| (*id).clone()).collect(),
        keywords.keywords().to_vec(),
        cells,
        Polarity::LowerIsMatch,
    )
}
