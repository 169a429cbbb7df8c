use super::NnError;
use crate::scalar::Real;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

fn check(pred: usize, target: usize) -> Result<(), NnError> {
    if pred != target {
        return Err(NnError::ShapeMismatch(format!(
            "{pred} predictions for {target} targets"
        )));
    }
    Ok(())
}

/// `sum_j -[y_j log p_j + (1 - y_j) log(1 - p_j)]` on clamped predictions.
pub fn summed_cross_entropy<T: Real>(pred: &[T], target: &[T]) -> Result<T, NnError> {
    check(pred.len(), target.len())?;
    let (lo, hi) = (T::lit(PROB_CLAMP), T::one() - T::lit(PROB_CLAMP));
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.max(lo).min(hi);
            -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
        })
        .sum())
}

/// Gradient of [`summed_cross_entropy`] with respect to the predictions.
pub fn summed_cross_entropy_grad<T: Real>(pred: &[T], target: &[T]) -> Result<Vec<T>, NnError> {
    check(pred.len(), target.len())?;
    let (lo, hi) = (T::lit(PROB_CLAMP), T::one() - T::lit(PROB_CLAMP));
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            if p < lo || p > hi {
                T::zero()
            } else {
                (p - y) / (p * (T::one() - p))
            }
        })
        .collect())
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy of `logits` against class `class`, with its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], class: usize) -> Result<(T, Vec<T>), NnError> {
    if class >= logits.len() {
        return Err(NnError::ShapeMismatch(format!("class {class} of {}", logits.len())));
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let log_total = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    let loss = log_total - logits[class];
    let mut grad = softmax(logits);
    grad[class] -= T::one();
    Ok((loss, grad))
}

/// Mean squared error and its gradient.
pub fn mse<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>), NnError> {
    check(pred.len(), target.len())?;
    let n = T::lit(pred.len() as f64);
    let diff: Vec<T> = pred.iter().zip(target).map(|(&p, &y)| p - y).collect();
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / n;
    let two = T::lit(2.0);
    Ok((loss, diff.into_iter().map(|d| two * d / n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_binary_predictions_have_near_zero_loss() {
        let y = [1.0, 0.0, 1.0, 0.0];
        assert!(summed_cross_entropy(&y, &y).unwrap() < 1e-5);
    }

    #[test]
    fn half_half_is_log_two() {
        let l = summed_cross_entropy(&[0.5f64], &[0.5]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn random_instance_matches_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let p: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut expect = 0.0;
        for j in 0..4 {
            expect -= y[j] * p[j].ln() + (1.0 - y[j]) * (1.0 - p[j]).ln();
        }
        assert!((summed_cross_entropy(&p, &y).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(summed_cross_entropy(&[0.5f64], &[0.5, 0.5]).is_err());
        assert!(softmax_cross_entropy(&[0.5f64], 1).is_err());
    }

    #[test]
    fn softmax_ce_gradient_is_p_minus_onehot() {
        let (loss, g) = softmax_cross_entropy(&[1.0f64, 2.0, 0.5], 1).unwrap();
        let p = softmax(&[1.0f64, 2.0, 0.5]);
        assert!((loss + p[1].ln()).abs() < 1e-12);
        assert!((g[1] - (p[1] - 1.0)).abs() < 1e-15 && (g[0] - p[0]).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn loss_is_non_negative(p in prop::collection::vec(0.0f64..=1.0, 1..6), seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = p.iter().map(|_| rng.random_range(0.0..=1.0)).collect();
            prop_assert!(summed_cross_entropy(&p, &y).unwrap() >= 0.0);
        }

        #[test]
        fn grad_matches_central_difference(p in 0.05f64..0.95, y in 0.0f64..1.0) {
            let h = 1e-6;
            let fd = (summed_cross_entropy(&[p + h], &[y]).unwrap() - summed_cross_entropy(&[p - h], &[y]).unwrap()) / (2.0 * h);
            let g = summed_cross_entropy_grad(&[p], &[y]).unwrap()[0];
            prop_assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0));
        }
    }
}
