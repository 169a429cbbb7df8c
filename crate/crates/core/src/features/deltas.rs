use crate::scalar::Real;

/// Regression deltas over a `frames x dim` row-major matrix.
///
/// `d[t] = sum_{n=1..window} n * (m[t+n] - m[t-n]) / (2 * sum n^2)`, with
/// out-of-range frame indices clamped to the first/last frame.
pub fn compute_deltas<T: Real>(m: &[T], frames: usize, dim: usize, window: usize) -> Vec<T> {
    assert!(window >= 1, "delta window must be at least 1");
    assert_eq!(m.len(), frames * dim);
    let denom = T::lit(2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>());
    let last = frames as isize - 1;
    let at = |t: isize| t.clamp(0, last) as usize;
    let mut out = vec![T::zero(); m.len()];
    for t in 0..frames {
        let row = &mut out[t * dim..(t + 1) * dim];
        for n in 1..=window {
            let fwd = at(t as isize + n as isize);
            let bwd = at(t as isize - n as isize);
            let w = T::lit(n as f64);
            for d in 0..dim {
                row[d] += w * (m[fwd * dim + d] - m[bwd * dim + d]);
            }
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_input_has_zero_deltas() {
        let m = vec![3.5f64; 6 * 4];
        assert!(compute_deltas(&m, 6, 4, 2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_has_unit_slope_inside() {
        let m: Vec<f64> = (0..12).map(|t| t as f64).collect();
        let d = compute_deltas(&m, 12, 1, 2);
        assert!(d[2..10].iter().all(|&v| v == 1.0));
        let dd = compute_deltas(&d, 12, 1, 2);
        assert!(dd[4..8].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_direct_formula_with_replicated_edges() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (frames, dim) = (7, 3);
        let m: Vec<f64> = (0..frames * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d = compute_deltas(&m, frames, dim, 1);
        for t in 0..frames {
            let next = if t + 1 < frames { t + 1 } else { frames - 1 };
            let prev = if t == 0 { 0 } else { t - 1 };
            for k in 0..dim {
                let expect = (m[next * dim + k] - m[prev * dim + k]) / 2.0;
                assert!((d[t * dim + k] - expect).abs() < 1e-15);
            }
        }
    }
}
