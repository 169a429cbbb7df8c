use rand::Rng;
use rayon::prelude::*;

use super::{check_dim, digest_of, extra_usize, run_training, window_tensor, LossHistory, Schedule, SpotterError};
use crate::dtw::{Polarity, ScoreMatrix};
use crate::features::{FeatureArchive, FeatureMatrix};
use crate::nn::{
    decode_network, encode_network, softmax, softmax_cross_entropy, AdamState, CheckpointMeta, LayerSpec, Network,
    NnError, Tensor,
};
use crate::rng::substream;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub window_frames: usize,
    pub conv_filters: Vec<usize>,
    pub conv_kernel: usize,
    pub pool_size: usize,
    pub dense_widths: Vec<usize>,
    /// Applied after the first and the last hidden dense layer.
    pub dropout: f64,
    pub negatives_per_positive: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Hop between test windows.
    pub test_stride: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            window_frames: 60,
            conv_filters: vec![64, 128, 256],
            conv_kernel: 5,
            pool_size: 2,
            dense_widths: vec![500, 100, 300],
            dropout: 0.5,
            negatives_per_positive: 5.0,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            test_stride: 10,
            seed: 7,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), SpotterError> {
        let bad = |m: &str| Err(SpotterError::InvalidConfig(m.into()));
        if self.window_frames == 0 || self.conv_kernel == 0 || self.pool_size == 0 || self.test_stride == 0 {
            return bad("window_frames, conv_kernel, pool_size and test_stride must be positive");
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("conv_filters must be non-empty and positive");
        }
        if self.dense_widths.is_empty() || self.dense_widths.contains(&0) {
            return bad("dense_widths must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.negatives_per_positive >= 0.0 && self.negatives_per_positive.is_finite()) {
            return bad("negatives_per_positive must be finite and >= 0");
        }
        if self.batch_size == 0 || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("batch_size and learning_rate must be positive");
        }
        Ok(())
    }
}

/// Conv/ReLU/pool blocks, then the dense stack and `num_keywords + 1`
/// logits (the last class is background).
pub fn classifier_specs(cfg: &ClassifierConfig, num_keywords: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for &f in &cfg.conv_filters {
        specs.push(LayerSpec::Conv1d {
            filters: f,
            kernel: cfg.conv_kernel,
            stride: 1,
        });
        specs.push(LayerSpec::Relu);
        if cfg.pool_size > 1 {
            specs.push(LayerSpec::MaxPool { size: cfg.pool_size });
        }
    }
    specs.push(LayerSpec::Flatten);
    let last = cfg.dense_widths.len() - 1;
    for (i, &w) in cfg.dense_widths.iter().enumerate() {
        specs.push(LayerSpec::Dense { units: w });
        specs.push(LayerSpec::Relu);
        if (i == 0 || i == last) && cfg.dropout > 0.0 {
            specs.push(LayerSpec::Dropout { rate: cfg.dropout });
        }
    }
    specs.push(LayerSpec::Dense {
        units: num_keywords + 1,
    });
    specs
}

/// Trained window classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel<T: Real> {
    pub network: Network<T>,
    pub labels: Vec<String>,
    pub window_frames: usize,
    pub test_stride: usize,
    pub seed: u64,
    pub config_digest: [u8; 32],
}

impl<T: Real> ClassifierModel<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = CheckpointMeta {
            seed: self.seed,
            config_digest: self.config_digest,
            labels: self.labels.clone(),
            ..Default::default()
        };
        meta.extra.insert("model".into(), "cnn-classifier".into());
        meta.extra
            .insert("window_frames".into(), self.window_frames.to_string());
        meta.extra.insert("test_stride".into(), self.test_stride.to_string());
        encode_network(&self.network, &meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SpotterError> {
        let (network, meta) = decode_network::<T>(bytes)?;
        if meta.extra.get("model").map(String::as_str) != Some("cnn-classifier") {
            return Err(SpotterError::Malformed("not a classifier checkpoint".into()));
        }
        let window_frames = extra_usize(&meta.extra, "window_frames")?;
        if network.input_shape().0 != window_frames || network.output_shape() != (1, meta.labels.len() + 1) {
            return Err(SpotterError::Malformed("network shape does not match labels".into()));
        }
        Ok(Self {
            network,
            labels: meta.labels,
            window_frames,
            test_stride: extra_usize(&meta.extra, "test_stride")?,
            seed: meta.seed,
            config_digest: meta.config_digest,
        })
    }
}

/// Trains on padded or truncated exemplars (one class per keyword) and on
/// random windows of `background` utterances (the extra class).
///
/// `keywords` lists each keyword id with its exemplar features.
pub fn train_classifier<T: Real>(
    keywords: &[(String, Vec<&FeatureMatrix<T>>)],
    background: &FeatureArchive<T>,
    cfg: &ClassifierConfig,
) -> Result<(ClassifierModel<T>, LossHistory), SpotterError> {
    cfg.validate()?;
    if keywords.is_empty() {
        return Err(SpotterError::InsufficientData("no keywords".into()));
    }
    if let Some((kw, _)) = keywords.iter().find(|(_, ex)| ex.is_empty()) {
        return Err(SpotterError::InsufficientData(format!("keyword {kw} has no exemplars")));
    }
    let dim = keywords[0].1[0].dim();
    for m in keywords
        .iter()
        .flat_map(|(_, ex)| ex.iter().copied())
        .chain(background.values())
    {
        if m.dim() != dim {
            return Err(SpotterError::DimMismatch {
                expected: dim,
                found: m.dim(),
            });
        }
    }
    let w = cfg.window_frames;
    let mut inputs = Vec::new();
    let mut classes = Vec::new();
    for (j, (_, exemplars)) in keywords.iter().enumerate() {
        for m in exemplars {
            inputs.push(window_tensor(m, 0, w));
            classes.push(j);
        }
    }
    let num_neg = (cfg.negatives_per_positive * inputs.len() as f64).round() as usize;
    if num_neg == 0 || background.is_empty() {
        return Err(SpotterError::InsufficientData("background class is empty".into()));
    }
    let utts: Vec<&FeatureMatrix<T>> = background.values().collect();
    let mut rng = substream(cfg.seed, "classifier-negatives");
    let l = keywords.len();
    for _ in 0..num_neg {
        let m = utts[rng.random_range(0..utts.len())];
        let start = rng.random_range(0..=m.num_frames().saturating_sub(w));
        inputs.push(window_tensor(m, start, w));
        classes.push(l);
    }
    let specs = classifier_specs(cfg, l);
    let mut network =
        Network::new((w, dim), &specs, &mut substream(cfg.seed, "classifier-init")).map_err(|e| match e {
            NnError::InvalidLayer(m) => SpotterError::InvalidConfig(m),
            e => e.into(),
        })?;
    let steps = cfg.epochs * inputs.len().div_ceil(cfg.batch_size);
    let mut adam = AdamState::new(cfg.learning_rate, cfg.learning_rate, steps.max(1));
    let plan = Schedule {
        epochs: cfg.epochs,
        batch: cfg.batch_size,
        seed: cfg.seed,
        tag: "classifier",
    };
    let history = run_training(&mut network, &inputs, &mut adam, &plan, |i, out| {
        softmax_cross_entropy(out.data(), classes[i])
    })?;
    let model = ClassifierModel {
        network,
        labels: keywords.iter().map(|(k, _)| k.clone()).collect(),
        window_frames: w,
        test_stride: cfg.test_stride,
        seed: cfg.seed,
        config_digest: digest_of(&format!("{cfg:?}")),
    };
    Ok((model, history))
}

/// Softmax posteriors of one `window_frames x D` window, background last.
pub fn classify_window<T: Real>(model: &ClassifierModel<T>, window: &Tensor<T>) -> Result<Vec<f64>, SpotterError> {
    let logits = model.network.predict(window)?;
    Ok(softmax(logits.data()).into_iter().map(|p| p.as_f64()).collect())
}

/// Slides the window with the model's stride and returns, per keyword, the
/// largest posterior over all windows. Utterances shorter than one window
/// are zero-padded into a single window.
pub fn classify_utterance<T: Real>(model: &ClassifierModel<T>, m: &FeatureMatrix<T>) -> Result<Vec<f64>, SpotterError> {
    check_dim(&model.network, m)?;
    let w = model.window_frames;
    let last = m.num_frames().saturating_sub(w);
    let l = model.labels.len();
    let mut best = vec![f64::NEG_INFINITY; l];
    for start in (0..=last).step_by(model.test_stride) {
        let post = classify_window(model, &window_tensor(m, start, w))?;
        for (b, &p) in best.iter_mut().zip(&post[..l]) {
            *b = b.max(p);
        }
    }
    Ok(best)
}

/// Scores every utterance of `archive` in parallel.
pub fn classify_archive<T: Real>(
    model: &ClassifierModel<T>,
    archive: &FeatureArchive<T>,
) -> Result<ScoreMatrix, SpotterError> {
    let entries: Vec<(&String, &FeatureMatrix<T>)> = archive.iter().collect();
    let rows: Vec<Vec<f64>> = entries
        .par_iter()
        .map(|(_, m)| classify_utterance(model, m))
        .collect::<Result<_, _>>()?;
    ScoreMatrix::new(
        entries.iter().map(|(id, _)| (*id).clone()).collect(),
        model.labels.clone(),
        rows.concat(),
        Polarity::HigherIsMatch,
    )
    .map_err(|e| SpotterError::Malformed(e.to_string()))
}
