//! Model-based spotters: a sliding-window CNN classifier trained on
//! exemplars, and a CNN trained on DTW soft targets that scores a whole
//! utterance in one forward pass.

mod classifier;
mod distill;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::nn::{batch_gradients, AdamState, Network, NnError, Tensor};
use crate::rng::indexed;
use crate::scalar::Real;

pub use classifier::{
    classifier_specs, classify_archive, classify_utterance, classify_window, train_classifier, ClassifierConfig,
    ClassifierModel,
};
pub use distill::{distill_specs, spot, spot_archive, train_cnn_dtw, CnnDtwModel, DistillConfig};

#[derive(Debug, Error)]
pub enum SpotterError {
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("no target for training utterance {0}")]
    MissingTargets(String),
    #[error("invalid spotter config: {0}")]
    InvalidConfig(String),
    #[error("feature dimension {found}, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("missing features for {0}")]
    MissingFeatures(String),
    #[error("malformed spotter checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-epoch mean training loss.
pub type LossHistory = Vec<f64>;

static TRUNCATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of inputs truncated by [`pad_or_truncate`] so far in this process.
pub fn truncation_count() -> usize {
    TRUNCATIONS.load(Ordering::Relaxed)
}

/// Copies `frames` rows starting at `start` into a `frames x D` tensor,
/// zero-filling past the end of `m`.
pub fn window_tensor<T: Real>(m: &FeatureMatrix<T>, start: usize, frames: usize) -> Tensor<T> {
    let d = m.dim();
    let mut data = vec![T::zero(); frames * d];
    let avail = m.num_frames().saturating_sub(start).min(frames);
    data[..avail * d].copy_from_slice(&m.as_slice()[start * d..(start + avail) * d]);
    Tensor::matrix(frames, d, data).expect("window shape")
}

/// Zero-pads at the end or truncates to `frames` frames.
pub fn pad_or_truncate<T: Real>(m: &FeatureMatrix<T>, frames: usize) -> Tensor<T> {
    if m.num_frames() > frames {
        TRUNCATIONS.fetch_add(1, Ordering::Relaxed);
        log::warn!("truncating {} frames to {frames}", m.num_frames());
    }
    window_tensor(m, 0, frames)
}

pub(crate) fn check_dim<T: Real>(net: &Network<T>, m: &FeatureMatrix<T>) -> Result<(), SpotterError> {
    let expected = net.input_shape().1;
    if m.dim() != expected {
        return Err(SpotterError::DimMismatch {
            expected,
            found: m.dim(),
        });
    }
    Ok(())
}

pub(crate) fn digest_of(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

pub(crate) fn extra_usize(extra: &BTreeMap<String, String>, key: &str) -> Result<usize, SpotterError> {
    extra
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SpotterError::Malformed(format!("missing or bad {key}")))
}

pub(crate) struct Schedule<'a> {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub tag: &'a str,
}

/// Mini-batch training with per-epoch shuffling. `loss(i, output)` gives the
/// loss of example `i` and its gradient; batch gradients are averaged.
pub(crate) fn run_training<T, L>(
    net: &mut Network<T>,
    inputs: &[Tensor<T>],
    adam: &mut AdamState<T>,
    plan: &Schedule,
    loss: L,
) -> Result<LossHistory, SpotterError>
where
    T: Real,
    L: Fn(usize, &Tensor<T>) -> Result<(T, Vec<T>), NnError> + Sync,
{
    let n = inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(plan.epochs);
    let mut seen: u64 = 0;
    let noise_tag = format!("{}-example", plan.tag);
    for epoch in 0..plan.epochs {
        order.sort_unstable();
        order.shuffle(&mut indexed(plan.seed, &format!("{}-shuffle", plan.tag), epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(plan.batch) {
            let base = seen;
            let res = batch_gradients(
                net,
                chunk.len(),
                |i| inputs[chunk[i]].clone(),
                |i| indexed(plan.seed, &noise_tag, base + i as u64),
                |i, out| loss(chunk[i], out),
            )?;
            seen += chunk.len() as u64;
            total += res.loss.as_f64();
            let mut grads = res.grads;
            grads.scale(T::lit(1.0 / chunk.len() as f64));
            adam.step_network(net, &grads)?;
        }
        let mean = total / n as f64;
        log::info!("{} epoch {}/{}: loss {mean:.6}", plan.tag, epoch + 1, plan.epochs);
        history.push(mean);
    }
    Ok(history)
}
