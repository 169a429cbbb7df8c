//! Exemplar-based keyword spotting without a speech recognizer.
//!
//! A handful of isolated keyword recordings are matched against untranscribed
//! speech with subsequence DTW; the resulting costs become soft targets for a
//! CNN that spots keywords in a single forward pass. The crate also carries
//! the MFCC front end, a stacked denoising autoencoder feature learner, an
//! end-to-end CNN classifier baseline and ROC/AUC/EER evaluation.
//!
//! Numeric code is generic over [`Real`] (`f32` and `f64`); the aliases
//! below name the concrete instantiations used by the pipeline.

pub mod corpus;
pub mod dtw;
pub mod eval;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sae;
pub mod scalar;
pub mod spotter;

mod codec;
mod error;

pub use error::Error;
pub use scalar::Real;

pub type FeatureMatrix32 = features::FeatureMatrix<f32>;
pub type FeatureMatrix64 = features::FeatureMatrix<f64>;
pub type FeatureArchive32 = features::FeatureArchive<f32>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type SaeModel32 = sae::SaeModel<f32>;
