//! Stacked denoising autoencoder trained greedily layer by layer, then
//! fine-tuned end to end. Hidden layers use tanh, reconstructions are linear
//! and inputs are standardized with statistics stored in the model.

use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::codec::{put_f64, put_u32, put_u64, put_u8, put_values, Reader};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::nn::{
    batch_gradients, decode_network, encode_network, mse, AdamState, CheckpointMeta, LayerSpec, Network, NnError,
    Tensor,
};
use crate::rng::{indexed, substream};
use crate::scalar::Real;

pub const SAE_MAGIC: &[u8; 6] = b"SAE1\0\0";

#[derive(Debug, Error)]
pub enum SaeError {
    #[error("invalid SAE config: {0}")]
    InvalidConfig(String),
    #[error("no training frames")]
    EmptyInput,
    #[error("feature dimension {found}, model expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("bad SAE checkpoint magic")]
    BadMagic,
    #[error("malformed SAE checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeConfig {
    /// Widths of the seven hidden layers.
    pub layer_dims: Vec<usize>,
    /// 1-based index of the layer whose activations are the features.
    pub extract_layer: usize,
    /// Standard deviation of the corrupting noise on standardized inputs.
    pub noise_sigma: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SaeConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![500, 250, 100, 39, 100, 250, 500],
            extract_layer: 4,
            noise_sigma: 0.1,
            pretrain_epochs: 5,
            finetune_epochs: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 7,
        }
    }
}

pub const SAE_DEPTH: usize = 7;

impl SaeConfig {
    pub fn validate(&self) -> Result<(), SaeError> {
        let bad = |m: &str| Err(SaeError::InvalidConfig(m.into()));
        if self.layer_dims.len() != SAE_DEPTH {
            return bad("layer_dims must list 7 widths");
        }
        if self.layer_dims.contains(&0) {
            return bad("layer widths must be positive");
        }
        if !(1..=SAE_DEPTH).contains(&self.extract_layer) {
            return bad("extract_layer must be in 1..=7");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    /// Width of the extracted features.
    pub fn output_dim(&self) -> usize {
        self.layer_dims[self.extract_layer - 1]
    }
}

/// Trained autoencoder: standardization plus the full
/// `noise, (dense, tanh) x 7, dense` stack.
#[derive(Debug, Clone)]
pub struct SaeModel<T> {
    pub config: SaeConfig,
    mean: Vec<T>,
    scale: Vec<T>,
    network: Network<T>,
}

fn stack_specs(cfg: &SaeConfig, input_dim: usize) -> Vec<LayerSpec> {
    let mut specs = vec![LayerSpec::GaussianNoise { sigma: cfg.noise_sigma }];
    for &w in &cfg.layer_dims {
        specs.push(LayerSpec::Dense { units: w });
        specs.push(LayerSpec::Tanh);
    }
    specs.push(LayerSpec::Dense { units: input_dim });
    specs
}

struct FitPlan<'a> {
    epochs: usize,
    lr: f64,
    batch: usize,
    seed: u64,
    tag: &'a str,
}

/// Minimizes mean squared error between `net(inputs[i])` and `targets[i]`.
/// Returns the mean per-example loss of every epoch.
fn fit<T: Real>(
    net: &mut Network<T>,
    inputs: &[Vec<T>],
    targets: &[Vec<T>],
    plan: &FitPlan,
) -> Result<Vec<f64>, NnError> {
    let n = inputs.len();
    let d_in = inputs[0].len();
    let steps = plan.epochs * n.div_ceil(plan.batch);
    let mut adam = AdamState::new(plan.lr, plan.lr, steps.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(plan.epochs);
    let mut seen: u64 = 0;
    for epoch in 0..plan.epochs {
        order.sort_unstable();
        order.shuffle(&mut indexed(plan.seed, &format!("{}-shuffle", plan.tag), epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(plan.batch) {
            let base = seen;
            let res = batch_gradients(
                net,
                chunk.len(),
                |i| Tensor::matrix(1, d_in, inputs[chunk[i]].clone()).expect("frame shape"),
                |i| indexed(plan.seed, &format!("{}-noise", plan.tag), base + i as u64),
                |i, out| mse(out.data(), &targets[chunk[i]]),
            )?;
            seen += chunk.len() as u64;
            total += res.loss.as_f64();
            let mut grads = res.grads;
            grads.scale(T::lit(1.0 / chunk.len() as f64));
            adam.step_network(net, &grads)?;
        }
        history.push(total / n as f64);
        log::debug!("{} epoch {epoch}: mse {:.6}", plan.tag, total / n as f64);
    }
    Ok(history)
}

/// Trains an autoencoder on every frame of `inputs`.
pub fn train_sae<T: Real>(inputs: &[FeatureMatrix<T>], cfg: &SaeConfig) -> Result<SaeModel<T>, SaeError> {
    Ok(train_sae_with_history(inputs, cfg)?.0)
}

/// Like [`train_sae`], also returning the per-epoch fine-tuning loss.
pub fn train_sae_with_history<T: Real>(
    inputs: &[FeatureMatrix<T>],
    cfg: &SaeConfig,
) -> Result<(SaeModel<T>, Vec<f64>), SaeError> {
    cfg.validate()?;
    let Some(first) = inputs.first() else {
        return Err(SaeError::EmptyInput);
    };
    let d = first.dim();
    if let Some(m) = inputs.iter().find(|m| m.dim() != d) {
        return Err(SaeError::DimMismatch {
            expected: d,
            found: m.dim(),
        });
    }
    let frames: Vec<&[T]> = inputs.iter().flat_map(|m| m.rows()).collect();
    let n = frames.len();
    let nf = T::lit(n as f64);
    let mut mean = vec![T::zero(); d];
    for &r in &frames {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![T::zero(); d];
    for &r in &frames {
        for ((s, &v), &m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<T> = var
        .into_iter()
        .map(|s| {
            let sd = (s / nf).sqrt();
            if sd > T::lit(1e-8) {
                T::one() / sd
            } else {
                T::one()
            }
        })
        .collect();
    let clean: Vec<Vec<T>> = frames.iter().map(|r| standardize(r, &mean, &scale)).collect();

    let mut stack = Network::new((1, d), &stack_specs(cfg, d), &mut substream(cfg.seed, "sae-init"))?;

    // greedy pretraining: layer k reconstructs the clean output of layer k-1
    let mut level = clean.clone();
    let mut first_decoder: Option<(Vec<T>, Vec<T>)> = None;
    for (k, &width) in cfg.layer_dims.iter().enumerate() {
        let in_dim = level[0].len();
        let specs = [
            LayerSpec::GaussianNoise { sigma: cfg.noise_sigma },
            LayerSpec::Dense { units: width },
            LayerSpec::Tanh,
            LayerSpec::Dense { units: in_dim },
        ];
        let mut net = Network::new(
            (1, in_dim),
            &specs,
            &mut indexed(cfg.seed, "sae-pretrain-init", k as u64),
        )?;
        let plan = FitPlan {
            epochs: cfg.pretrain_epochs,
            lr: cfg.learning_rate,
            batch: cfg.batch_size,
            seed: cfg.seed,
            tag: &format!("sae-pretrain{k}"),
        };
        fit(&mut net, &level, &level, &plan)?;
        let p = net.params();
        {
            let mut dst = stack.params_mut();
            dst[2 * k].copy_from_slice(p[0]);
            dst[2 * k + 1].copy_from_slice(p[1]);
        }
        if k == 0 {
            first_decoder = Some((p[2].to_vec(), p[3].to_vec()));
        }
        level = level
            .iter()
            .map(|x| net.predict_prefix(&Tensor::matrix(1, in_dim, x.clone()).expect("frame shape"), 3))
            .collect::<Result<_, _>>()?;
    }
    // the first layer's decoder maps the last hidden width back to the input
    // when the stack is symmetric
    if let Some((w, b)) = first_decoder {
        let mut dst = stack.params_mut();
        let last = dst.len() - 2;
        if dst[last].len() == w.len() {
            dst[last].copy_from_slice(&w);
            dst[last + 1].copy_from_slice(&b);
        }
    }

    let plan = FitPlan {
        epochs: cfg.finetune_epochs,
        lr: cfg.learning_rate,
        batch: cfg.batch_size,
        seed: cfg.seed,
        tag: "sae-finetune",
    };
    let history = fit(&mut stack, &clean, &clean, &plan)?;
    Ok((
        SaeModel {
            config: cfg.clone(),
            mean,
            scale,
            network: stack,
        },
        history,
    ))
}

fn standardize<T: Real>(row: &[T], mean: &[T], scale: &[T]) -> Vec<T> {
    row.iter()
        .zip(mean)
        .zip(scale)
        .map(|((&v, &m), &s)| (v - m) * s)
        .collect()
}

impl<T: Real> PartialEq for SaeModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.mean == other.mean
            && self.scale == other.scale
            && self.network == other.network
    }
}

/// Decoded config, mean, scale and the embedded network bytes.
type Parsed<'a, T> = (SaeConfig, Vec<T>, Vec<T>, &'a [u8]);

impl<T: Real> SaeModel<T> {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    fn check_dim(&self, m: &FeatureMatrix<T>) -> Result<(), SaeError> {
        if m.dim() != self.input_dim() {
            return Err(SaeError::DimMismatch {
                expected: self.input_dim(),
                found: m.dim(),
            });
        }
        Ok(())
    }

    /// Per-frame activations of the extraction layer, without noise.
    pub fn encode(&self, m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>, SaeError> {
        self.check_dim(m)?;
        let d = self.input_dim();
        let depth = 1 + 2 * self.config.extract_layer;
        let mut out = Vec::with_capacity(m.num_frames() * self.output_dim());
        for r in m.rows() {
            let x = Tensor::matrix(1, d, standardize(r, &self.mean, &self.scale))?;
            out.extend(self.network.predict_prefix(&x, depth)?);
        }
        FeatureMatrix::new(
            out,
            m.num_frames(),
            self.output_dim(),
            m.frame_shift_ms,
            FeatureKind::Sae39,
        )
        .map_err(|e| SaeError::Malformed(e.to_string()))
    }

    /// Mean squared reconstruction error in standardized units.
    pub fn reconstruction_mse(&self, m: &FeatureMatrix<T>) -> Result<f64, SaeError> {
        self.check_dim(m)?;
        let d = self.input_dim();
        let mut total = 0.0;
        for r in m.rows() {
            let clean = standardize(r, &self.mean, &self.scale);
            let out = self.network.predict(&Tensor::matrix(1, d, clean.clone())?)?;
            total += mse(out.data(), &clean)?.0.as_f64();
        }
        Ok(total / m.num_frames() as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(SAE_MAGIC);
        put_u8(&mut out, T::WIDTH);
        put_u32(&mut out, c.layer_dims.len() as u32);
        for &w in &c.layer_dims {
            put_u32(&mut out, w as u32);
        }
        put_u32(&mut out, c.extract_layer as u32);
        put_f64(&mut out, c.noise_sigma);
        put_u32(&mut out, c.pretrain_epochs as u32);
        put_u32(&mut out, c.finetune_epochs as u32);
        put_f64(&mut out, c.learning_rate);
        put_u32(&mut out, c.batch_size as u32);
        put_u64(&mut out, c.seed);
        put_values(&mut out, &self.mean);
        put_values(&mut out, &self.scale);
        let net = encode_network(
            &self.network,
            &CheckpointMeta {
                seed: c.seed,
                ..Default::default()
            },
        );
        put_u32(&mut out, net.len() as u32);
        out.extend_from_slice(&net);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SaeError> {
        if bytes.len() < SAE_MAGIC.len() || &bytes[..SAE_MAGIC.len()] != SAE_MAGIC {
            return Err(SaeError::BadMagic);
        }
        let mut r = Reader::new(&bytes[SAE_MAGIC.len()..]);
        let parsed = (|| -> Result<Parsed<'_, T>, String> {
            let width = r.u8()?;
            let layer_dims = (0..r.u32()?)
                .map(|_| r.u32().map(|v| v as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let config = SaeConfig {
                layer_dims,
                extract_layer: r.u32()? as usize,
                noise_sigma: r.f64()?,
                pretrain_epochs: r.u32()? as usize,
                finetune_epochs: r.u32()? as usize,
                learning_rate: r.f64()?,
                batch_size: r.u32()? as usize,
                seed: r.u64()?,
            };
            let mean = r.values(width)?;
            let scale = r.values(width)?;
            let n = r.u32()? as usize;
            let net = r.take(n)?;
            r.finish()?;
            Ok((config, mean, scale, net))
        })();
        let (config, mean, scale, net) = parsed.map_err(SaeError::Malformed)?;
        config.validate().map_err(|e| SaeError::Malformed(e.to_string()))?;
        let (network, _) = decode_network(net)?;
        let d = mean.len();
        if scale.len() != d || network.input_shape() != (1, d) || network.output_shape() != (1, d) {
            return Err(SaeError::Malformed("inconsistent dimensions".into()));
        }
        Ok(Self {
            config,
            mean,
            scale,
            network,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SaeError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SaeError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SaeConfig {
        SaeConfig {
            layer_dims: vec![6, 5, 4, 3, 4, 5, 6],
            extract_layer: 4,
            noise_sigma: 0.1,
            pretrain_epochs: 2,
            finetune_epochs: 3,
            learning_rate: 3e-3,
            batch_size: 8,
            seed: 11,
        }
    }

    fn data(n: usize, d: usize) -> FeatureMatrix<f64> {
        let v: Vec<f64> = (0..n * d)
            .map(|i| ((i * 7919 % 101) as f64 / 17.0).sin() * 3.0 + 1.0)
            .collect();
        FeatureMatrix::new(v, n, d, 10.0, FeatureKind::Mfcc39).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(small_cfg().validate().is_ok());
        let mut c = small_cfg();
        c.extract_layer = 0;
        assert!(c.validate().is_err());
        c.extract_layer = 8;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.layer_dims.pop();
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.noise_sigma = -0.1;
        assert!(matches!(c.validate(), Err(SaeError::InvalidConfig(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let m = data(40, 5);
        let a = train_sae(std::slice::from_ref(&m), &small_cfg()).unwrap();
        let b = train_sae(std::slice::from_ref(&m), &small_cfg()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn untrained_model_depends_only_on_seed() {
        let mut cfg = small_cfg();
        cfg.pretrain_epochs = 0;
        cfg.finetune_epochs = 0;
        let a = train_sae(&[data(10, 5)], &cfg).unwrap();
        let b = train_sae(&[data(30, 5)], &cfg).unwrap();
        assert_eq!(a.network(), b.network());
    }

    #[test]
    fn encode_shape_and_kind() {
        let model = train_sae(&[data(20, 5)], &small_cfg()).unwrap();
        let one = data(1, 5);
        let e = model.encode(&one).unwrap();
        assert_eq!((e.num_frames(), e.dim()), (1, 3));
        assert_eq!(e.kind, FeatureKind::Sae39);
        assert!(matches!(model.encode(&data(3, 4)), Err(SaeError::DimMismatch { .. })));
    }

    #[test]
    fn encode_is_frame_local() {
        let model = train_sae(&[data(20, 5)], &small_cfg()).unwrap();
        let m = data(9, 5);
        let e = model.encode(&m).unwrap();
        let perm = [4usize, 0, 8, 2, 1, 7, 3, 6, 5];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| m.row(i).to_vec()).collect();
        let pm = FeatureMatrix::from_rows(&rows, 10.0, FeatureKind::Mfcc39).unwrap();
        let pe = model.encode(&pm).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(pe.row(k), e.row(i));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = train_sae(&[data(20, 5)], &small_cfg()).unwrap();
        let bytes = model.to_bytes();
        let back = SaeModel::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert!(matches!(SaeModel::<f64>::from_bytes(b"SAE0"), Err(SaeError::BadMagic)));
        assert!(SaeModel::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(matches!(train_sae::<f64>(&[], &small_cfg()), Err(SaeError::EmptyInput)));
        let mixed = [data(3, 5), data(3, 4)];
        assert!(matches!(
            train_sae(&mixed, &small_cfg()),
            Err(SaeError::DimMismatch { .. })
        ));
    }

    #[test]
    fn fits_two_points_without_noise() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 5.0]], 10.0, FeatureKind::Mfcc39).unwrap();
        let cfg = SaeConfig {
            layer_dims: vec![4; 7],
            extract_layer: 4,
            noise_sigma: 0.0,
            pretrain_epochs: 50,
            finetune_epochs: 400,
            learning_rate: 1e-2,
            batch_size: 2,
            seed: 3,
        };
        let model = train_sae(std::slice::from_ref(&m), &cfg).unwrap();
        let err = model.reconstruction_mse(&m).unwrap();
        assert!(err < 1e-3, "mse {err}");
    }

    #[test]
    fn finetuning_does_not_increase_loss() {
        let m = data(64, 5);
        let mut cfg = small_cfg();
        cfg.finetune_epochs = 0;
        let start = train_sae(std::slice::from_ref(&m), &cfg)
            .unwrap()
            .reconstruction_mse(&m)
            .unwrap();
        cfg.finetune_epochs = 10;
        let end = train_sae(std::slice::from_ref(&m), &cfg)
            .unwrap()
            .reconstruction_mse(&m)
            .unwrap();
        assert!(end <= start, "{start} -> {end}");
    }
}
