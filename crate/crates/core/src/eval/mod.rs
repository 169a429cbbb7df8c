//! Detection metrics: ROC curves, AUC, EER and per-system comparison
//! reports.

mod report;
mod roc;

use thiserror::Error;

pub use report::{pooled_report, EvalReport, ReportRow, SystemScores, MACRO_ROW, POOLED_ROW, REPORT_HEADER};
pub use roc::{auc, eer, roc, RocCurve, RocPoint};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least one positive and one negative label ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score is NaN")]
    NanScore,
    #[error("no ground truth for utterance {0}")]
    MissingGroundTruth(String),
    #[error("keyword {0} is not in the keyword set")]
    UnknownKeyword(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
