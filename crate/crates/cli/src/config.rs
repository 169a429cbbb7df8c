//! Flat run configuration. Every key has a default; a TOML file and then
//! `--set key=value` flags override them.

use std::path::Path;

use kws_core::corpus::{SplitCounts, SyntheticSpec};
use kws_core::dtw::{DtwConfig, ScoreMode};
use kws_core::features::MfccConfig;
use kws_core::rng::derive_seed;
use kws_core::sae::SaeConfig;
use kws_core::spotter::{ClassifierConfig, DistillConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; each stage uses a named substream of it.
    pub seed: u64,
    /// Worker threads for parallel stages, 0 for one per core.
    pub threads: usize,
    /// Active representation: mfcc, sae or imported.
    pub feature: String,

    pub synth_num_keywords: usize,
    pub synth_exemplars_per_keyword: usize,
    pub synth_train: usize,
    pub synth_dev: usize,
    pub synth_test: usize,
    pub synth_utt_min: usize,
    pub synth_utt_max: usize,
    pub synth_kw_min: usize,
    pub synth_kw_max: usize,
    pub synth_occurrence_prob: f64,
    pub synth_warp_min: f64,
    pub synth_warp_max: f64,
    pub synth_noise_sigma: f64,
    pub synth_channel_sigma: f64,
    pub synth_background_rho: f64,
    pub synth_dim: usize,

    pub mfcc_sample_rate: u32,
    pub mfcc_frame_length_ms: f64,
    pub mfcc_frame_shift_ms: f64,
    pub mfcc_num_filters: usize,
    pub mfcc_num_cepstra: usize,
    pub mfcc_low_freq: f64,
    pub mfcc_high_freq: f64,
    pub mfcc_preemphasis: f64,
    pub mfcc_delta_window: usize,
    pub mfcc_mean_normalize: bool,

    pub import_dim: usize,

    pub dtw_mode: String,
    pub dtw_window_skip: usize,
    pub dtw_length_min_factor: f64,
    pub dtw_length_max_factor: f64,
    pub dtw_length_steps: usize,
    /// Sakoe-Chiba radius, 0 for none.
    pub dtw_band: usize,

    pub sae_layer_dims: Vec<usize>,
    pub sae_extract_layer: usize,
    pub sae_noise_sigma: f64,
    pub sae_pretrain_epochs: usize,
    pub sae_finetune_epochs: usize,
    pub sae_learning_rate: f64,
    pub sae_batch_size: usize,
    pub sae_frames: usize,

    pub clf_window_frames: usize,
    pub clf_conv_filters: Vec<usize>,
    pub clf_conv_kernel: usize,
    pub clf_pool_size: usize,
    pub clf_dense_widths: Vec<usize>,
    pub clf_dropout: f64,
    pub clf_negatives_per_positive: f64,
    pub clf_epochs: usize,
    pub clf_batch_size: usize,
    pub clf_learning_rate: f64,
    pub clf_test_stride: usize,

    pub cnn_input_frames: usize,
    pub cnn_conv_filters: Vec<usize>,
    pub cnn_conv_kernel: usize,
    pub cnn_conv_strides: Vec<usize>,
    pub cnn_pool_sizes: Vec<usize>,
    pub cnn_dense_widths: Vec<usize>,
    pub cnn_dropout: f64,
    pub cnn_lr_start: f64,
    pub cnn_lr_end: f64,
    /// Train-time input noise sigma; 0 disables the noise layer.
    pub cnn_gaussian_noise: f64,
    pub cnn_epochs: usize,
    pub cnn_batch_size: usize,

    pub bench_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SyntheticSpec::default();
        let mfcc = MfccConfig::default();
        let dtw = DtwConfig::default();
        let sae = SaeConfig::default();
        let clf = ClassifierConfig::default();
        let cnn = DistillConfig::default();
        Self {
            seed: 7,
            threads: 0,
            feature: "mfcc".into(),
            synth_num_keywords: synth.num_keywords,
            synth_exemplars_per_keyword: synth.exemplars_per_keyword,
            synth_train: synth.num_utterances.train,
            synth_dev: synth.num_utterances.dev,
            synth_test: synth.num_utterances.test,
            synth_utt_min: synth.utterance_length_range.0,
            synth_utt_max: synth.utterance_length_range.1,
            synth_kw_min: synth.keyword_length_range.0,
            synth_kw_max: synth.keyword_length_range.1,
            synth_occurrence_prob: synth.keyword_occurrence_probability,
            synth_warp_min: synth.warp_range.0,
            synth_warp_max: synth.warp_range.1,
            synth_noise_sigma: synth.noise_sigma,
            synth_channel_sigma: synth.channel_offset_sigma,
            synth_background_rho: synth.background_correlation,
            synth_dim: synth.feature_dim,
            mfcc_sample_rate: mfcc.sample_rate,
            mfcc_frame_length_ms: mfcc.frame_length_ms,
            mfcc_frame_shift_ms: mfcc.frame_shift_ms,
            mfcc_num_filters: mfcc.num_mel_filters,
            mfcc_num_cepstra: mfcc.num_cepstra,
            mfcc_low_freq: mfcc.low_freq,
            mfcc_high_freq: mfcc.high_freq,
            mfcc_preemphasis: mfcc.preemphasis,
            mfcc_delta_window: mfcc.delta_window,
            mfcc_mean_normalize: mfcc.mean_normalize,
            import_dim: 39,
            dtw_mode: "ks".into(),
            dtw_window_skip: dtw.window_skip,
            dtw_length_min_factor: dtw.length_factors.0,
            dtw_length_max_factor: dtw.length_factors.1,
            dtw_length_steps: dtw.length_steps,
            dtw_band: 0,
            sae_layer_dims: sae.layer_dims,
            sae_extract_layer: sae.extract_layer,
            sae_noise_sigma: sae.noise_sigma,
            sae_pretrain_epochs: sae.pretrain_epochs,
            sae_finetune_epochs: sae.finetune_epochs,
            sae_learning_rate: sae.learning_rate,
            sae_batch_size: sae.batch_size,
            sae_frames: 20_000,
            clf_window_frames: clf.window_frames,
            clf_conv_filters: clf.conv_filters,
            clf_conv_kernel: clf.conv_kernel,
            clf_pool_size: clf.pool_size,
            clf_dense_widths: clf.dense_widths,
            clf_dropout: clf.dropout,
            clf_negatives_per_positive: clf.negatives_per_positive,
            clf_epochs: clf.epochs,
            clf_batch_size: clf.batch_size,
            clf_learning_rate: clf.learning_rate,
            clf_test_stride: clf.test_stride,
            cnn_input_frames: cnn.input_frames,
            cnn_conv_filters: cnn.conv_filters,
            cnn_conv_kernel: cnn.conv_kernel,
            cnn_conv_strides: cnn.conv_strides,
            cnn_pool_sizes: cnn.pool_sizes,
            cnn_dense_widths: cnn.dense_widths,
            cnn_dropout: cnn.dropout,
            cnn_lr_start: cnn.lr_start,
            cnn_lr_end: cnn.lr_end,
            cnn_gaussian_noise: 0.0,
            cnn_epochs: cnn.epochs,
            cnn_batch_size: cnn.batch_size,
            bench_repeats: 3,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words that are not valid TOML values are taken as strings
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Defaults, overlaid with `file` and then with `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = |e: String| Err(CliError::Config(e));
        if !matches!(self.feature.as_str(), "mfcc" | "sae" | "imported") {
            return c(format!("feature must be mfcc, sae or imported, not {:?}", self.feature));
        }
        if ScoreMode::parse(&self.dtw_mode).is_none() {
            return c(format!("dtw_mode must be ks or qbye, not {:?}", self.dtw_mode));
        }
        self.synth_spec()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.mfcc_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.dtw_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sae_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.classifier_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.distill_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn synth_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_keywords: self.synth_num_keywords,
            exemplars_per_keyword: self.synth_exemplars_per_keyword,
            num_utterances: SplitCounts {
                train: self.synth_train,
                dev: self.synth_dev,
                test: self.synth_test,
            },
            utterance_length_range: (self.synth_utt_min, self.synth_utt_max),
            keyword_length_range: (self.synth_kw_min, self.synth_kw_max),
            keyword_occurrence_probability: self.synth_occurrence_prob,
            warp_range: (self.synth_warp_min, self.synth_warp_max),
            noise_sigma: self.synth_noise_sigma,
            channel_offset_sigma: self.synth_channel_sigma,
            background_correlation: self.synth_background_rho,
            feature_dim: self.synth_dim,
            frame_shift_ms: self.mfcc_frame_shift_ms as f32,
            seed: self.stage_seed("corpus"),
        }
    }

    pub fn mfcc_config(&self) -> MfccConfig {
        MfccConfig {
            sample_rate: self.mfcc_sample_rate,
            frame_length_ms: self.mfcc_frame_length_ms,
            frame_shift_ms: self.mfcc_frame_shift_ms,
            num_mel_filters: self.mfcc_num_filters,
            num_cepstra: self.mfcc_num_cepstra,
            low_freq: self.mfcc_low_freq,
            high_freq: self.mfcc_high_freq,
            preemphasis: self.mfcc_preemphasis,
            delta_window: self.mfcc_delta_window,
            mean_normalize: self.mfcc_mean_normalize,
        }
    }

    pub fn dtw_config(&self) -> DtwConfig {
        DtwConfig {
            window_skip: self.dtw_window_skip,
            length_factors: (self.dtw_length_min_factor, self.dtw_length_max_factor),
            length_steps: self.dtw_length_steps,
            band_width: (self.dtw_band > 0).then_some(self.dtw_band),
        }
    }

    pub fn score_mode(&self) -> ScoreMode {
        ScoreMode::parse(&self.dtw_mode).expect("validated")
    }

    pub fn sae_config(&self) -> SaeConfig {
        SaeConfig {
            layer_dims: self.sae_layer_dims.clone(),
            extract_layer: self.sae_extract_layer,
            noise_sigma: self.sae_noise_sigma,
            pretrain_epochs: self.sae_pretrain_epochs,
            finetune_epochs: self.sae_finetune_epochs,
            learning_rate: self.sae_learning_rate,
            batch_size: self.sae_batch_size,
            seed: self.stage_seed("sae"),
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            window_frames: self.clf_window_frames,
            conv_filters: self.clf_conv_filters.clone(),
            conv_kernel: self.clf_conv_kernel,
            pool_size: self.clf_pool_size,
            dense_widths: self.clf_dense_widths.clone(),
            dropout: self.clf_dropout,
            negatives_per_positive: self.clf_negatives_per_positive,
            epochs: self.clf_epochs,
            batch_size: self.clf_batch_size,
            learning_rate: self.clf_learning_rate,
            test_stride: self.clf_test_stride,
            seed: self.stage_seed("classifier"),
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        DistillConfig {
            input_frames: self.cnn_input_frames,
            conv_filters: self.cnn_conv_filters.clone(),
            conv_kernel: self.cnn_conv_kernel,
            conv_strides: self.cnn_conv_strides.clone(),
            pool_sizes: self.cnn_pool_sizes.clone(),
            dense_widths: self.cnn_dense_widths.clone(),
            dropout: self.cnn_dropout,
            lr_start: self.cnn_lr_start,
            lr_end: self.cnn_lr_end,
            gaussian_noise: (self.cnn_gaussian_noise > 0.0).then_some(self.cnn_gaussian_noise),
            epochs: self.cnn_epochs,
            batch_size: self.cnn_batch_size,
            seed: self.stage_seed("distill"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 3\ndtw_window_skip = 2\n").unwrap();
        let cfg = RunConfig::load(
            Some(&p),
            &[
                "seed=11".into(),
                "feature=sae".into(),
                "cnn_dense_widths=[64, 32]".into(),
            ],
        )
        .unwrap();
        assert_eq!((cfg.seed, cfg.dtw_window_skip, cfg.feature.as_str()), (11, 2, "sae"));
        assert_eq!(cfg.cnn_dense_widths, vec![64, 32]);
    }

    #[test]
    fn unknown_and_invalid_keys_fail() {
        assert!(matches!(
            RunConfig::load(None, &["no_such_key=1".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::load(None, &["feature=bnf".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::load(None, &["dtw_window_skip=0".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::load(None, &["seed".into()]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.sae_config().seed, cfg.distill_config().seed);
        assert_eq!(cfg.distill_config().seed, RunConfig::default().distill_config().seed);
    }

    #[test]
    fn desk_config_matches_library_desk_scale() {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let got = RunConfig::load(Some(&p), &[]).unwrap().distill_config();
        let want = DistillConfig {
            seed: got.seed,
            ..DistillConfig::desk_scale()
        };
        assert_eq!(got, want);
    }
}
