use rayon::prelude::*;

use super::{check_dim, digest_of, extra_usize, pad_or_truncate, run_training, LossHistory, Schedule, SpotterError};
use crate::dtw::{Polarity, ScoreMatrix, TargetVector};
use crate::features::{FeatureArchive, FeatureMatrix};
use crate::nn::{
    decode_network, encode_network, summed_cross_entropy, summed_cross_entropy_grad, AdamState, CheckpointMeta,
    LayerSpec, Network, NnError,
};
use crate::rng::substream;
use crate::scalar::Real;

pub const DISTILL_CONV_LAYERS: usize = 10;
pub const MIN_FILTERS: usize = 80;
pub const MAX_FILTERS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Every utterance is zero-padded or truncated to this many frames.
    pub input_frames: usize,
    /// Ten filter counts, each in `[80, 512]`.
    pub conv_filters: Vec<usize>,
    pub conv_kernel: usize,
    /// Per-layer convolution stride.
    pub conv_strides: Vec<usize>,
    /// Per-layer max-pool size after the ReLU; 1 means none.
    pub pool_sizes: Vec<usize>,
    pub dense_widths: Vec<usize>,
    pub dropout: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Train-time input noise (the GNL variant) when set.
    pub gaussian_noise: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            input_frames: 1000,
            conv_filters: vec![80, 96, 128, 160, 192, 256, 320, 384, 448, 512],
            conv_kernel: 3,
            conv_strides: vec![1; DISTILL_CONV_LAYERS],
            pool_sizes: vec![1, 2, 1, 2, 1, 2, 1, 2, 1, 2],
            dense_widths: vec![3000, 3000],
            dropout: 0.5,
            lr_start: 1e-4,
            lr_end: 1e-5,
            gaussian_noise: None,
            epochs: 20,
            batch_size: 16,
            seed: 7,
        }
    }
}

impl DistillConfig {
    /// A smaller network for short synthetic utterances on a single CPU:
    /// 240-frame inputs, a stride-3 first layer, narrow dense layers, no
    /// dropout and a tenfold learning rate.
    pub fn desk_scale() -> Self {
        Self {
            input_frames: 240,
            conv_filters: vec![80, 80, 96, 96, 128, 128, 160, 160, 192, 192],
            conv_kernel: 3,
            conv_strides: vec![3, 1, 1, 1, 1, 1, 1, 1, 1, 1],
            pool_sizes: vec![2, 2, 1, 2, 1, 2, 1, 1, 1, 1],
            dense_widths: vec![256, 256],
            dropout: 0.0,
            lr_start: 5e-4,
            lr_end: 5e-5,
            gaussian_noise: None,
            epochs: 40,
            batch_size: 4,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<(), SpotterError> {
        let bad = |m: String| Err(SpotterError::InvalidConfig(m));
        if self.conv_filters.len() != DISTILL_CONV_LAYERS
            || self.conv_strides.len() != DISTILL_CONV_LAYERS
            || self.pool_sizes.len() != DISTILL_CONV_LAYERS
        {
            return bad(format!(
                "conv_filters, conv_strides and pool_sizes need {DISTILL_CONV_LAYERS} entries"
            ));
        }
        if let Some(f) = self
            .conv_filters
            .iter()
            .find(|f| !(MIN_FILTERS..=MAX_FILTERS).contains(f))
        {
            return bad(format!("filter count {f} outside [{MIN_FILTERS}, {MAX_FILTERS}]"));
        }
        if self.input_frames == 0
            || self.conv_kernel == 0
            || self.conv_strides.contains(&0)
            || self.pool_sizes.contains(&0)
        {
            return bad("input_frames, conv_kernel, strides and pool sizes must be positive".into());
        }
        if self.dense_widths.is_empty() || self.dense_widths.contains(&0) {
            return bad("dense_widths must be non-empty and positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) || self.batch_size == 0 {
            return bad("learning rates and batch_size must be positive".into());
        }
        if let Some(s) = self.gaussian_noise {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("gaussian_noise must be finite and >= 0".into());
            }
        }
        Ok(())
    }
}

/// Optional input noise, ten conv blocks, a max over the remaining frames,
/// the dense stack and one sigmoid per keyword.
pub fn distill_specs(cfg: &DistillConfig, num_keywords: usize) -> Result<Vec<LayerSpec>, SpotterError> {
    cfg.validate()?;
    let mut specs = Vec::new();
    if let Some(sigma) = cfg.gaussian_noise {
        specs.push(LayerSpec::GaussianNoise { sigma });
    }
    let mut frames = cfg.input_frames;
    for i in 0..DISTILL_CONV_LAYERS {
        let stride = cfg.conv_strides[i];
        specs.push(LayerSpec::Conv1d {
            filters: cfg.conv_filters[i],
            kernel: cfg.conv_kernel,
            stride,
        });
        specs.push(LayerSpec::Relu);
        frames = (frames - 1) / stride + 1;
        if cfg.pool_sizes[i] > 1 {
            if frames < cfg.pool_sizes[i] {
                return Err(SpotterError::InvalidConfig(format!(
                    "input_frames {} too short for the conv stack",
                    cfg.input_frames
                )));
            }
            specs.push(LayerSpec::MaxPool {
                size: cfg.pool_sizes[i],
            });
            frames /= cfg.pool_sizes[i];
        }
    }
    if frames > 1 {
        specs.push(LayerSpec::MaxPool { size: frames });
    }
    specs.push(LayerSpec::Flatten);
    for &w in &cfg.dense_widths {
        specs.push(LayerSpec::Dense { units: w });
        specs.push(LayerSpec::Relu);
        if cfg.dropout > 0.0 {
            specs.push(LayerSpec::Dropout { rate: cfg.dropout });
        }
    }
    specs.push(LayerSpec::Dense { units: num_keywords });
    specs.push(LayerSpec::Sigmoid);
    Ok(specs)
}

/// Distilled spotter.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnDtwModel<T: Real> {
    pub network: Network<T>,
    pub labels: Vec<String>,
    pub input_frames: usize,
    pub seed: u64,
    pub config_digest: [u8; 32],
}

impl<T: Real> CnnDtwModel<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = CheckpointMeta {
            seed: self.seed,
            config_digest: self.config_digest,
            labels: self.labels.clone(),
            ..Default::default()
        };
        meta.extra.insert("model".into(), "cnn-dtw".into());
        meta.extra.insert("input_frames".into(), self.input_frames.to_string());
        encode_network(&self.network, &meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SpotterError> {
        let (network, meta) = decode_network::<T>(bytes)?;
        if meta.extra.get("model").map(String::as_str) != Some("cnn-dtw") {
            return Err(SpotterError::Malformed("not a CNN-DTW checkpoint".into()));
        }
        let input_frames = extra_usize(&meta.extra, "input_frames")?;
        if network.input_shape().0 != input_frames || network.output_shape() != (1, meta.labels.len()) {
            return Err(SpotterError::Malformed("network shape does not match labels".into()));
        }
        Ok(Self {
            network,
            labels: meta.labels,
            input_frames,
            seed: meta.seed,
            config_digest: meta.config_digest,
        })
    }
}

/// Trains the CNN so its sigmoid outputs reproduce the soft targets of every
/// utterance in `train`, using summed cross-entropy and a linearly decaying
/// learning rate.
pub fn train_cnn_dtw<T: Real>(
    train: &FeatureArchive<T>,
    targets: &[TargetVector],
    keyword_ids: &[String],
    cfg: &DistillConfig,
) -> Result<(CnnDtwModel<T>, LossHistory), SpotterError> {
    let specs = distill_specs(cfg, keyword_ids.len())?;
    if train.is_empty() {
        return Err(SpotterError::InsufficientData("no training utterances".into()));
    }
    let by_id: std::collections::HashMap<&str, &TargetVector> =
        targets.iter().map(|t| (t.utterance_id.as_str(), t)).collect();
    let mut inputs = Vec::with_capacity(train.len());
    let mut ys: Vec<Vec<T>> = Vec::with_capacity(train.len());
    let dim = train.values().next().map_or(0, FeatureMatrix::dim);
    for (id, m) in train {
        let t = by_id
            .get(id.as_str())
            .ok_or_else(|| SpotterError::MissingTargets(id.clone()))?;
        if t.y.len() != keyword_ids.len() {
            return Err(SpotterError::MissingTargets(format!(
                "{id} has {} targets for {} keywords",
                t.y.len(),
                keyword_ids.len()
            )));
        }
        if m.dim() != dim {
            return Err(SpotterError::DimMismatch {
                expected: dim,
                found: m.dim(),
            });
        }
        inputs.push(pad_or_truncate(m, cfg.input_frames));
        ys.push(t.y.iter().map(|&v| T::lit(v)).collect());
    }
    let mut network = Network::new(
        (cfg.input_frames, dim),
        &specs,
        &mut substream(cfg.seed, "distill-init"),
    )
    .map_err(|e| match e {
        NnError::InvalidLayer(m) => SpotterError::InvalidConfig(m),
        e => e.into(),
    })?;
    let steps = cfg.epochs * inputs.len().div_ceil(cfg.batch_size);
    let mut adam = AdamState::new(cfg.lr_start, cfg.lr_end, steps.max(1));
    let plan = Schedule {
        epochs: cfg.epochs,
        batch: cfg.batch_size,
        seed: cfg.seed,
        tag: "distill",
    };
    let history = run_training(&mut network, &inputs, &mut adam, &plan, |i, out| {
        let p = out.data();
        Ok((summed_cross_entropy(p, &ys[i])?, summed_cross_entropy_grad(p, &ys[i])?))
    })?;
    let model = CnnDtwModel {
        network,
        labels: keyword_ids.to_vec(),
        input_frames: cfg.input_frames,
        seed: cfg.seed,
        config_digest: digest_of(&format!("{cfg:?}")),
    };
    Ok((model, history))
}

/// One forward pass over the padded utterance; returns the keyword sigmoids.
pub fn spot<T: Real>(model: &CnnDtwModel<T>, m: &FeatureMatrix<T>) -> Result<Vec<f64>, SpotterError> {
    check_dim(&model.network, m)?;
    let out = model.network.predict(&pad_or_truncate(m, model.input_frames))?;
    Ok(out.data().iter().map(|v| v.as_f64()).collect())
}

/// Scores every utterance of `archive` in parallel.
pub fn spot_archive<T: Real>(model: &CnnDtwModel<T>, archive: &FeatureArchive<T>) -> Result<ScoreMatrix, SpotterError> {
    let entries: Vec<(&String, &FeatureMatrix<T>)> = archive.iter().collect();
    let rows: Vec<Vec<f64>> = entries
        .par_iter()
        .map(|(_, m)| spot(model, m))
        .collect::<Result<_, _>>()?;
    ScoreMatrix::new(
        entries.iter().map(|(id, _)| (*id).clone()).collect(),
        model.labels.clone(),
        rows.concat(),
        Polarity::HigherIsMatch,
    )
    .map_err(|e| SpotterError::Malformed(e.to_string()))
}
