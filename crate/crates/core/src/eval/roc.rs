use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points ordered by decreasing threshold, from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

/// Sweeps the threshold over the distinct scores; equal scores switch
/// together.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NanScore);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (np, nn) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
        });
    }
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Rate at which false positives equal misses, interpolated linearly
/// between the two curve points that bracket the crossing.
pub fn eer(curve: &RocCurve) -> f64 {
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    let pts = &curve.points;
    for i in 0..pts.len() {
        let d = gap(&pts[i]);
        if d == 0.0 {
            return pts[i].fpr;
        }
        if d > 0.0 {
            if i == 0 {
                return pts[0].fpr;
            }
            let d0 = gap(&pts[i - 1]);
            let t = -d0 / (d - d0);
            return pts[i - 1].fpr + t * (pts[i].fpr - pts[i - 1].fpr);
        }
    }
    pts.last().map_or(0.5, |p| p.fpr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let c = roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert!(c.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&c), 1.0);
        assert_eq!(eer(&c), 0.0);
    }

    #[test]
    fn all_scores_equal() {
        let c = roc(&[0.3; 5], &[true, false, true, false, false]).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!((c.points[1].fpr, c.points[1].tpr), (1.0, 1.0));
        assert_eq!(auc(&c), 0.5);
        assert_eq!(eer(&c), 0.5);
    }

    #[test]
    fn inverted_scores() {
        let c = roc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        assert_eq!(auc(&c), 0.0);
        assert_eq!(eer(&c), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            roc(&[1.0, 2.0], &[true, true]),
            Err(EvalError::DegenerateLabels { .. })
        ));
        assert!(matches!(
            roc(&[1.0], &[true, false]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            roc(&[f64::NAN, 1.0], &[true, false]),
            Err(EvalError::NanScore)
        ));
    }

    #[test]
    fn endpoints_and_monotone() {
        let c = roc(
            &[0.5, 0.1, 0.5, 0.7, 0.2, 0.7],
            &[true, false, false, true, true, false],
        )
        .unwrap();
        let (first, last) = (c.points[0], *c.points.last().unwrap());
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr && w[1].threshold < w[0].threshold);
        }
    }
}
