use rayon::prelude::*;

use super::{Gradients, Mode, Network, NnError, Tensor};
use crate::rng::StageRng;
use crate::scalar::Real;

/// Examples per work unit. Fixed so the reduction order never depends on the
/// thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone)]
pub struct BatchResult<T> {
    /// Sum of per-example losses.
    pub loss: T,
    /// Sum of per-example gradients.
    pub grads: Gradients<T>,
}

/// Forward and backward passes for examples `0..n` in train mode.
///
/// `input(i)` yields example `i`, `rng_for(i)` its private random stream and
/// `loss(i, output)` the loss with its gradient w.r.t. the output.
pub fn batch_gradients<T, I, R, L>(
    net: &Network<T>,
    n: usize,
    input: I,
    rng_for: R,
    loss: L,
) -> Result<BatchResult<T>, NnError>
where
    T: Real,
    I: Fn(usize) -> Tensor<T> + Sync,
    R: Fn(usize) -> StageRng + Sync,
    L: Fn(usize, &Tensor<T>) -> Result<(T, Vec<T>), NnError> + Sync,
{
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partials: Vec<(T, Gradients<T>)> = starts
        .par_iter()
        .map(|&s| {
            let mut grads = net.zero_gradients();
            let mut total = T::zero();
            for i in s..(s + CHUNK).min(n) {
                let mut rng = rng_for(i);
                let (out, cache) = net.forward(&input(i), Mode::Train, &mut rng)?;
                let (l, g) = loss(i, &out)?;
                total += l;
                net.backward_into(&cache, &g, &mut grads, false)?;
            }
            Ok((total, grads))
        })
        .collect::<Result<_, NnError>>()?;
    let mut iter = partials.into_iter();
    let (mut loss_sum, mut grads) = iter.next().unwrap_or_else(|| (T::zero(), net.zero_gradients()));
    for (l, g) in iter {
        loss_sum += l;
        grads.add_assign(&g);
    }
    Ok(BatchResult { loss: loss_sum, grads })
}
