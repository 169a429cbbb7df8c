use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::roc::{auc, eer, roc, RocCurve};
use super::EvalError;
use crate::dtw::{format_sig9, ScoreMatrix};

pub const REPORT_HEADER: &str = "system,feature,keyword,auc,eer,n_pos,n_neg";
/// Keyword column of the micro-pooled row.
pub const POOLED_ROW: &str = "ALL";
/// Keyword column of the keyword-averaged row.
pub const MACRO_ROW: &str = "MEAN";

/// One system's score table with the labels used in the report.
#[derive(Debug, Clone)]
pub struct SystemScores {
    pub system: String,
    pub feature: String,
    pub scores: ScoreMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub system: String,
    pub feature: String,
    pub keyword: String,
    pub auc: f64,
    pub eer: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// `(system, feature, keyword, curve)`, including the pooled curves.
    pub curves: Vec<(String, String, String, RocCurve)>,
}

impl EvalReport {
    pub fn find(&self, system: &str, feature: &str, keyword: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.feature == feature && r.keyword == keyword)
    }

    /// Micro-pooled row of a system.
    pub fn pooled(&self, system: &str, feature: &str) -> Option<&ReportRow> {
        self.find(system, feature, POOLED_ROW)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.system,
                r.feature,
                r.keyword,
                format_sig9(r.auc),
                format_sig9(r.eer),
                r.n_pos,
                r.n_neg
            );
        }
        out
    }

    /// Writes one `threshold\tfpr\ttpr` file per curve into `dir`.
    pub fn write_roc_files(&self, dir: &Path) -> Result<Vec<String>, EvalError> {
        std::fs::create_dir_all(dir)?;
        let mut names = Vec::new();
        for (system, feature, keyword, curve) in &self.curves {
            let name = format!("{system}.{feature}.{keyword}.roc.tsv");
            let mut text = String::from("threshold\tfpr\ttpr\n");
            for p in &curve.points {
                let _ = writeln!(
                    text,
                    "{}\t{}\t{}",
                    format_sig9(p.threshold),
                    format_sig9(p.fpr),
                    format_sig9(p.tpr)
                );
            }
            std::fs::write(dir.join(&name), text)?;
            names.push(name);
        }
        Ok(names)
    }
}

/// Per-keyword metrics for every system plus a micro-pooled `ALL` row (all
/// utterance/keyword decisions in one ROC) and a keyword-averaged `MEAN` row.
///
/// `truth` maps each scored utterance to the keywords it contains. Keywords
/// with no positive or no negative utterance get no row of their own but
/// still enter the pooled curve.
pub fn pooled_report(
    systems: &[SystemScores],
    truth: &BTreeMap<String, BTreeSet<String>>,
    keywords: &[String],
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for sys in systems {
        let table = &sys.scores;
        let cols: Vec<usize> = keywords
            .iter()
            .map(|kw| {
                table
                    .keyword_ids
                    .iter()
                    .position(|k| k == kw)
                    .ok_or_else(|| EvalError::UnknownKeyword(kw.clone()))
            })
            .collect::<Result<_, _>>()?;
        let present: Vec<&BTreeSet<String>> = table
            .utterance_ids
            .iter()
            .map(|u| truth.get(u).ok_or_else(|| EvalError::MissingGroundTruth(u.clone())))
            .collect::<Result<_, _>>()?;
        let oriented = table.match_scores();
        let l = table.num_keywords();
        let per_keyword: Vec<(Vec<f64>, Vec<bool>)> = keywords
            .iter()
            .zip(&cols)
            .map(|(kw, &c)| {
                let s = (0..table.num_utterances()).map(|u| oriented[u * l + c]).collect();
                let y = present.iter().map(|set| set.contains(kw)).collect();
                (s, y)
            })
            .collect();
        let results: Vec<Option<RocCurve>> = per_keyword
            .par_iter()
            .map(|(s, y)| match roc(s, y) {
                Ok(c) => Ok(Some(c)),
                Err(EvalError::DegenerateLabels { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_, _>>()?;
        let (mut auc_sum, mut eer_sum, mut counted, mut np, mut nn) = (0.0, 0.0, 0usize, 0usize, 0usize);
        let mut kw_rows = Vec::new();
        for (kw, curve) in keywords.iter().zip(results) {
            let Some(curve) = curve else {
                log::warn!("{}: keyword {kw} has degenerate labels, no per-keyword row", sys.system);
                continue;
            };
            let row = ReportRow {
                system: sys.system.clone(),
                feature: sys.feature.clone(),
                keyword: kw.clone(),
                auc: auc(&curve),
                eer: eer(&curve),
                n_pos: curve.positives,
                n_neg: curve.negatives,
            };
            auc_sum += row.auc;
            eer_sum += row.eer;
            counted += 1;
            np += row.n_pos;
            nn += row.n_neg;
            kw_rows.push(row);
            curves.push((sys.system.clone(), sys.feature.clone(), kw.clone(), curve));
        }
        let all_s: Vec<f64> = per_keyword.iter().flat_map(|(s, _)| s.iter().copied()).collect();
        let all_y: Vec<bool> = per_keyword.iter().flat_map(|(_, y)| y.iter().copied()).collect();
        let pooled = roc(&all_s, &all_y)?;
        rows.push(ReportRow {
            system: sys.system.clone(),
            feature: sys.feature.clone(),
            keyword: POOLED_ROW.into(),
            auc: auc(&pooled),
            eer: eer(&pooled),
            n_pos: pooled.positives,
            n_neg: pooled.negatives,
        });
        if counted > 0 {
            rows.push(ReportRow {
                system: sys.system.clone(),
                feature: sys.feature.clone(),
                keyword: MACRO_ROW.into(),
                auc: auc_sum / counted as f64,
                eer: eer_sum / counted as f64,
                n_pos: np,
                n_neg: nn,
            });
        }
        rows.extend(kw_rows);
        curves.push((sys.system.clone(), sys.feature.clone(), POOLED_ROW.into(), pooled));
    }
    Ok(EvalReport { rows, curves })
}
