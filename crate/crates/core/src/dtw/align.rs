use std::sync::Once;

use super::DtwError;
use crate::features::FeatureMatrix;
use crate::scalar::{dot, Real};

static ZERO_FRAME_WARNING: Once = Once::new();

/// Squared norm of every frame.
pub(crate) fn frame_norms<T: Real>(m: &FeatureMatrix<T>) -> Vec<T> {
    m.rows().map(|r| dot(r, r)).collect()
}

/// Cosine cost given precomputed squared norms. Zero frames cost 1.0.
#[inline]
pub(crate) fn cost_with_norms<T: Real>(a: &[T], b: &[T], na: T, nb: T) -> T {
    if na == T::zero() || nb == T::zero() {
        ZERO_FRAME_WARNING.call_once(|| log::warn!("zero-norm frame scored with cost 1.0"));
        return T::one();
    }
    let c = T::one() - dot(a, b) / (na * nb).sqrt();
    c.max(T::zero()).min(T::lit(2.0))
}

/// `1 - a.b / (|a| |b|)`, in `[0, 2]`.
pub fn cosine_cost<T: Real>(a: &[T], b: &[T]) -> Result<T, DtwError> {
    if a.len() != b.len() {
        return Err(DtwError::DimMismatch(a.len(), b.len()));
    }
    Ok(cost_with_norms(a, b, dot(a, a), dot(b, b)))
}

/// Full `rows x cols` cosine cost matrix, row-major.
pub(crate) fn cost_matrix<T: Real>(k: &FeatureMatrix<T>, kn: &[T], s: &FeatureMatrix<T>, sn: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(k.num_frames() * s.num_frames());
    for (a, &na) in k.rows().zip(kn) {
        for (b, &nb) in s.rows().zip(sn) {
            out.push(cost_with_norms(a, b, na, nb));
        }
    }
    out
}

/// Reusable buffers for the accumulated-cost DP.
pub(crate) struct DpScratch<T> {
    acc: [Vec<T>; 2],
    len: [Vec<u32>; 2],
}

impl<T: Real> DpScratch<T> {
    pub(crate) fn new() -> Self {
        Self {
            acc: [Vec::new(), Vec::new()],
            len: [Vec::new(), Vec::new()],
        }
    }

    /// Aligns all `rows` against columns `col0..col0 + width` of `cost`
    /// (row stride `stride`), starting at `(0, col0)`. Steps are (1,0), (0,1),
    /// (1,1); among equal-cost predecessors the shorter path wins. Calls `emit`
    /// with `(j, accumulated, nodes)` for every cell of the last row, so one
    /// pass scores every window length that starts at `col0`.
    #[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
    pub(crate) fn run(
        &mut self,
        cost: &[T],
        stride: usize,
        rows: usize,
        col0: usize,
        width: usize,
        band: Option<&dyn Fn(usize, usize) -> bool>,
        mut emit: impl FnMut(usize, T, u32),
    ) {
        let inf = T::infinity();
        for b in 0..2 {
            self.acc[b].clear();
            self.acc[b].resize(width, inf);
            self.len[b].clear();
            self.len[b].resize(width, 0);
        }
        for i in 0..rows {
            let (cur, prev) = (i % 2, (i + 1) % 2);
            let crow = &cost[i * stride + col0..i * stride + col0 + width];
            for j in 0..width {
                if let Some(allowed) = band {
                    if !allowed(i, j) {
                        self.acc[cur][j] = inf;
                        self.len[cur][j] = 0;
                        continue;
                    }
                }
                let (best, blen) = if i == 0 && j == 0 {
                    (T::zero(), 0)
                } else {
                    let mut best = inf;
                    let mut blen = 0u32;
                    let mut consider = |a: T, l: u32| {
                        // totals a few ulps apart count as tied
                        let tol = if best.is_finite() {
                            T::epsilon() * T::lit(256.0) * (T::one() + best.abs())
                        } else {
                            T::zero()
                        };
                        if a < best - tol || (a <= best + tol && l < blen) {
                            best = a;
                            blen = l;
                        }
                    };
                    if i > 0 && j > 0 {
                        consider(self.acc[prev][j - 1], self.len[prev][j - 1]);
                    }
                    if i > 0 {
                        consider(self.acc[prev][j], self.len[prev][j]);
                    }
                    if j > 0 {
                        consider(self.acc[cur][j - 1], self.len[cur][j - 1]);
                    }
                    (best, blen)
                };
                self.acc[cur][j] = best + crow[j];
                self.len[cur][j] = blen + 1;
            }
        }
        let last = (rows - 1) % 2;
        for j in 0..width {
            emit(j, self.acc[last][j], self.len[last][j]);
        }
    }
}

/// Sakoe-Chiba membership test for an `n x m` grid with radius `r`.
pub(crate) fn band_test(n: usize, m: usize, r: usize) -> impl Fn(usize, usize) -> bool {
    let slope = if n > 1 {
        (m as f64 - 1.0) / (n as f64 - 1.0)
    } else {
        0.0
    };
    let radius = (r as f64).max(slope / 2.0).max(1.0);
    move |i: usize, j: usize| {
        if n == 1 || m == 1 {
            return true;
        }
        (j as f64 - i as f64 * slope).abs() <= radius
    }
}

fn check_dims<T: Real>(k: &FeatureMatrix<T>, s: &FeatureMatrix<T>) -> Result<(), DtwError> {
    if k.dim() != s.dim() {
        return Err(DtwError::DimMismatch(k.dim(), s.dim()));
    }
    Ok(())
}

/// Endpoint-constrained DTW cost divided by the node count of the optimal
/// path, so the result stays in `[0, 2]`.
pub fn dtw_align<T: Real>(k: &FeatureMatrix<T>, s: &FeatureMatrix<T>) -> Result<T, DtwError> {
    align_impl(k, s, None)
}

/// [`dtw_align`] restricted to a Sakoe-Chiba band of radius `radius`.
pub fn dtw_align_banded<T: Real>(k: &FeatureMatrix<T>, s: &FeatureMatrix<T>, radius: usize) -> Result<T, DtwError> {
    align_impl(k, s, Some(radius))
}

fn align_impl<T: Real>(k: &FeatureMatrix<T>, s: &FeatureMatrix<T>, radius: Option<usize>) -> Result<T, DtwError> {
    check_dims(k, s)?;
    let (n, m) = (k.num_frames(), s.num_frames());
    let cost = cost_matrix(k, &frame_norms(k), s, &frame_norms(s));
    let mut scratch = DpScratch::new();
    let mut out = T::nan();
    let band = radius.map(|r| band_test(n, m, r));
    let band_ref = band.as_ref().map(|b| b as &dyn Fn(usize, usize) -> bool);
    scratch.run(&cost, m, n, 0, m, band_ref, |j, acc, nodes| {
        if j == m - 1 {
            out = acc / T::lit(nodes as f64);
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix<f64> {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        FeatureMatrix::from_rows(&rows, 10.0, FeatureKind::Mfcc39).unwrap()
    }

    #[test]
    fn cosine_cost_landmarks() {
        let a = [1.0, 2.0, -0.5];
        assert_eq!(cosine_cost(&a, &a).unwrap(), 0.0);
        assert_eq!(cosine_cost(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(cosine_cost(&a, &neg).unwrap(), 2.0);
        assert_eq!(cosine_cost(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(cosine_cost(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_frames_reduce_to_cosine() {
        let k = fm(&[&[1.0, 0.5]]);
        let s = fm(&[&[-0.3, 2.0]]);
        assert_eq!(dtw_align(&k, &s).unwrap(), cosine_cost(k.row(0), s.row(0)).unwrap());
    }

    #[test]
    fn identical_sequences_cost_zero() {
        let k = fm(&[&[1.0, 0.5], &[0.2, -1.0], &[3.0, 3.0]]);
        assert_eq!(dtw_align(&k, &k).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let k = fm(&[&[1.0, 0.5]]);
        let s = fm(&[&[1.0, 0.5, 0.1]]);
        assert!(matches!(dtw_align(&k, &s), Err(DtwError::DimMismatch(2, 3))));
    }

    #[test]
    fn band_never_lowers_cost() {
        let k = fm(&[&[1.0, 0.1], &[0.2, 1.0], &[-1.0, 0.3], &[0.4, 0.4], &[1.0, -1.0]]);
        let s = fm(&[
            &[0.3, 1.0],
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[-0.5, 0.5],
            &[0.5, 0.5],
            &[1.0, -0.9],
            &[0.2, 0.2],
        ]);
        let full = dtw_align(&k, &s).unwrap();
        for r in 0..4 {
            assert!(dtw_align_banded(&k, &s, r).unwrap() >= full);
        }
        assert_eq!(dtw_align_banded(&k, &s, 10).unwrap(), full);
    }
}
