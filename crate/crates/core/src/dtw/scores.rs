//! Score tables and distillation targets.
//!
//! Text format: a header row whose first cell is the polarity
//! (`lower-is-match` for DTW costs, `higher-is-match` for scores and targets)
//! followed by the keyword ids, then one tab-separated row per utterance with
//! values printed to 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::DtwError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    LowerIsMatch,
    HigherIsMatch,
}

impl Polarity {
    pub fn token(self) -> &'static str {
        match self {
            Polarity::LowerIsMatch => "lower-is-match",
            Polarity::HigherIsMatch => "higher-is-match",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lower-is-match" => Some(Polarity::LowerIsMatch),
            "higher-is-match" => Some(Polarity::HigherIsMatch),
            _ => None,
        }
    }
}

/// `|U| x L` table of per-(utterance, keyword) values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub utterance_ids: Vec<String>,
    pub keyword_ids: Vec<String>,
    values: Vec<f64>,
    pub polarity: Polarity,
}

impl ScoreMatrix {
    pub fn new(
        utterance_ids: Vec<String>,
        keyword_ids: Vec<String>,
        values: Vec<f64>,
        polarity: Polarity,
    ) -> Result<Self, DtwError> {
        if values.len() != utterance_ids.len() * keyword_ids.len() {
            return Err(DtwError::Parse {
                line: 0,
                msg: format!(
                    "{} values for a {}x{} table",
                    values.len(),
                    utterance_ids.len(),
                    keyword_ids.len()
                ),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(DtwError::Parse {
                line: 0,
                msg: format!("non-finite value {v}"),
            });
        }
        Ok(Self {
            utterance_ids,
            keyword_ids,
            values,
            polarity,
        })
    }

    pub fn num_utterances(&self) -> usize {
        self.utterance_ids.len()
    }

    pub fn num_keywords(&self) -> usize {
        self.keyword_ids.len()
    }

    pub fn get(&self, u: usize, k: usize) -> f64 {
        self.values[u * self.keyword_ids.len() + k]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        let l = self.keyword_ids.len();
        &self.values[u * l..(u + 1) * l]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.num_utterances()).map(|u| self.get(u, k)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values oriented so that larger means "more likely a match".
    pub fn match_scores(&self) -> Vec<f64> {
        match self.polarity {
            Polarity::HigherIsMatch => self.values.clone(),
            Polarity::LowerIsMatch => self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from(self.polarity.token());
        for k in &self.keyword_ids {
            s.push('\t');
            s.push_str(k);
        }
        s.push('\n');
        for (u, id) in self.utterance_ids.iter().enumerate() {
            s.push_str(id);
            for &v in self.row(u) {
                s.push('\t');
                s.push_str(&format_sig9(v));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, DtwError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(DtwError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let mut cols = header.split('\t');
        let polarity = cols.next().and_then(Polarity::parse).ok_or(DtwError::Parse {
            line: 1,
            msg: "header must start with a polarity token".into(),
        })?;
        let keyword_ids: Vec<String> = cols.map(str::to_string).collect();
        let mut utterance_ids = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines {
            let mut cols = line.split('\t');
            utterance_ids.push(cols.next().unwrap_or_default().to_string());
            let row: Vec<f64> = cols
                .map(|c| {
                    c.parse::<f64>().map_err(|_| DtwError::Parse {
                        line: i + 1,
                        msg: format!("bad number {c:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if row.len() != keyword_ids.len() {
                return Err(DtwError::Parse {
                    line: i + 1,
                    msg: format!("expected {} values, found {}", keyword_ids.len(), row.len()),
                });
            }
            values.extend(row);
        }
        Self::new(utterance_ids, keyword_ids, values, polarity)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DtwError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DtwError> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// `%.9g`-style formatting.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let s = format!("{:.*}", (8 - exp) as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        let mut out = String::new();
        write!(out, "{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs()).unwrap();
        out
    }
}

/// Soft target vector of one utterance, `y = 1 - c / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub utterance_id: String,
    pub y: Vec<f64>,
}

/// Maps every cost `c` in `[0, 2]` to `1 - c / 2`.
pub fn make_targets(scores: &ScoreMatrix) -> Result<Vec<TargetVector>, DtwError> {
    (0..scores.num_utterances())
        .map(|u| {
            let y = scores
                .row(u)
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    if scores.polarity != Polarity::LowerIsMatch || !(0.0..=2.0).contains(&c) {
                        Err(DtwError::OutOfRange {
                            utterance: scores.utterance_ids[u].clone(),
                            keyword: scores.keyword_ids[k].clone(),
                            value: c,
                        })
                    } else {
                        Ok(1.0 - c / 2.0)
                    }
                })
                .collect::<Result<_, _>>()?;
            Ok(TargetVector {
                utterance_id: scores.utterance_ids[u].clone(),
                y,
            })
        })
        .collect()
}

/// Packs targets back into a higher-is-match table.
pub fn targets_to_matrix(targets: &[TargetVector], keyword_ids: &[String]) -> Result<ScoreMatrix, DtwError> {
    ScoreMatrix::new(
        targets.iter().map(|t| t.utterance_id.clone()).collect(),
        keyword_ids.to_vec(),
        targets.iter().flat_map(|t| t.y.iter().copied()).collect(),
        Polarity::HigherIsMatch,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn costs(vals: Vec<f64>) -> ScoreMatrix {
        let n = vals.len();
        ScoreMatrix::new(
            vec!["u".into()],
            (0..n).map(|k| format!("k{k}")).collect(),
            vals,
            Polarity::LowerIsMatch,
        )
        .unwrap()
    }

    #[test]
    fn target_endpoints() {
        let t = make_targets(&costs(vec![0.0, 2.0, 1.0])).unwrap();
        assert_eq!(t[0].y, vec![1.0, 0.0, 0.5]);
    }

    #[test]
    fn out_of_range_costs_are_rejected() {
        assert!(matches!(
            make_targets(&costs(vec![2.5])),
            Err(DtwError::OutOfRange { .. })
        ));
        assert!(matches!(
            make_targets(&costs(vec![-0.1])),
            Err(DtwError::OutOfRange { .. })
        ));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.5), "0.5");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.123456789123), "0.123456789");
        assert_eq!(format_sig9(-std::f64::consts::LN_2), "-0.693147181");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(123456789012.0), "1.23456789e+11");
        assert_eq!(format_sig9(0.0), "0");
    }

    #[test]
    fn tsv_roundtrip_and_polarity_header() {
        let m = ScoreMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["k1".into(), "k2".into()],
            vec![0.25, 1.5, 0.0, 2.0],
            Polarity::LowerIsMatch,
        )
        .unwrap();
        let text = m.to_tsv();
        assert!(text.starts_with("lower-is-match\tk1\tk2\n"));
        assert_eq!(ScoreMatrix::parse(&text).unwrap(), m);
        assert!(ScoreMatrix::parse("utt\tk1\na\t0.1\n").is_err());
        assert!(ScoreMatrix::parse("higher-is-match\tk1\na\t0.1\t0.2\n").is_err());
    }

    proptest! {
        #[test]
        fn targets_invert_exactly(c in 0.0f64..=2.0) {
            let t = make_targets(&costs(vec![c])).unwrap();
            let y = t[0].y[0];
            prop_assert!((0.0..=1.0).contains(&y));
            prop_assert!((2.0 * (1.0 - y) - c).abs() < 1e-15);
        }

        #[test]
        fn sig9_parses_back_within_precision(v in -1e3f64..1e3) {
            let back: f64 = format_sig9(v).parse().unwrap();
            prop_assert!((back - v).abs() <= v.abs() * 1e-8 + 1e-300);
        }
    }
}
