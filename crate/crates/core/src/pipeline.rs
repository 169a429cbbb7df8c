//! The whole experiment in one call: synthetic corpus, features, DTW
//! search, distillation, the classifier baseline and the comparison report.

use std::time::Instant;

use rand::seq::index::sample;

use crate::corpus::{generate_synthetic, Split, SyntheticCorpus, SyntheticSpec};
use crate::dtw::{make_targets, search_corpus, DtwConfig, ScoreMatrix, ScoreMode};
use crate::eval::{pooled_report, EvalReport, SystemScores};
use crate::features::{FeatureArchive, FeatureKind, FeatureMatrix};
use crate::rng::{derive_seed, substream};
use crate::sae::{train_sae, SaeConfig, SaeModel};
use crate::spotter::{
    classify_archive, spot_archive, train_classifier, train_cnn_dtw, ClassifierConfig, CnnDtwModel, DistillConfig,
    LossHistory,
};
use crate::Error;

pub const SYSTEM_DTW_KS: &str = "dtw-ks";
pub const SYSTEM_DTW_QBYE: &str = "dtw-qbye";
pub const SYSTEM_CNN_DTW: &str = "cnn-dtw";
pub const SYSTEM_CNN_DTW_GNL: &str = "cnn-dtw-gnl";
pub const SYSTEM_CLASSIFIER: &str = "cnn-classifier";

/// Which representation the experiment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    Mfcc,
    Sae,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: SyntheticSpec,
    pub feature: FeatureChoice,
    pub sae: SaeConfig,
    /// Train frames sampled for autoencoder training.
    pub sae_frames: usize,
    pub dtw: DtwConfig,
    pub distill: DistillConfig,
    /// Noise sigma of an additional GNL model, if any.
    pub gnl_sigma: Option<f64>,
    pub classifier: ClassifierConfig,
    /// Skip the classifier baseline.
    pub skip_classifier: bool,
    pub also_qbye: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            corpus: SyntheticSpec::default(),
            feature: FeatureChoice::Mfcc,
            sae: SaeConfig::default(),
            sae_frames: 20_000,
            dtw: DtwConfig::default(),
            distill: DistillConfig::default(),
            gnl_sigma: None,
            classifier: ClassifierConfig::default(),
            skip_classifier: false,
            also_qbye: false,
        }
    }
}

impl ExperimentConfig {
    /// Default corpus and classifier with [`DistillConfig::desk_scale`].
    pub fn desk_scale() -> Self {
        Self {
            distill: DistillConfig::desk_scale(),
            ..Self::default()
        }
    }

    /// Copies stage seeds derived from the global seed into each stage.
    pub fn with_stage_seeds(mut self) -> Self {
        self.corpus.seed = derive_seed(self.seed, "corpus");
        self.sae.seed = derive_seed(self.seed, "sae");
        self.classifier.seed = derive_seed(self.seed, "classifier");
        self.distill.seed = derive_seed(self.seed, "distill");
        self
    }
}

/// Features the experiment searches, after the optional SAE transform.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub exemplars: FeatureArchive<f32>,
    pub train: FeatureArchive<f32>,
    pub test: FeatureArchive<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct StageTimes {
    pub features_secs: f64,
    pub dtw_train_secs: f64,
    pub dtw_test_secs: f64,
    pub distill_train_secs: f64,
    pub spot_test_secs: f64,
    pub classifier_train_secs: f64,
    pub classifier_test_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub feature: FeatureKind,
    pub dtw_train: ScoreMatrix,
    pub dtw_test: ScoreMatrix,
    pub cnn_dtw_test: ScoreMatrix,
    pub cnn_dtw_history: LossHistory,
    pub gnl_test: Option<ScoreMatrix>,
    pub classifier_test: Option<ScoreMatrix>,
    pub classifier_history: LossHistory,
    pub qbye_test: Option<ScoreMatrix>,
    pub report: EvalReport,
    pub times: StageTimes,
    pub model: CnnDtwModel<f32>,
}

/// Draws up to `count` frames from the utterances of `archive`.
pub fn sample_frames(archive: &FeatureArchive<f32>, count: usize, seed: u64) -> Result<Vec<FeatureMatrix<f32>>, Error> {
    let rows: Vec<&[f32]> = archive.values().flat_map(FeatureMatrix::rows).collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let mut picked = sample(&mut substream(seed, "sae-frames"), rows.len(), count.min(rows.len())).into_vec();
    picked.sort_unstable();
    let kept: Vec<Vec<f32>> = picked.iter().map(|&i| rows[i].to_vec()).collect();
    let first = archive.values().next().expect("non-empty archive");
    Ok(vec![FeatureMatrix::from_rows(&kept, first.frame_shift_ms, first.kind)?])
}

fn encode_all(model: &SaeModel<f32>, archive: &FeatureArchive<f32>) -> Result<FeatureArchive<f32>, Error> {
    archive
        .iter()
        .map(|(id, m)| Ok((id.clone(), model.encode(m)?)))
        .collect()
}

/// Applies the configured feature transform to the corpus.
pub fn prepare_features(corpus: &SyntheticCorpus, cfg: &ExperimentConfig) -> Result<FeatureSet, Error> {
    let (train, test) = (corpus.split(Split::Train), corpus.split(Split::Test));
    Ok(match cfg.feature {
        FeatureChoice::Mfcc => FeatureSet {
            kind: FeatureKind::Mfcc39,
            exemplars: corpus.exemplars.clone(),
            train: train.clone(),
            test: test.clone(),
        },
        FeatureChoice::Sae => {
            let frames = sample_frames(train, cfg.sae_frames, cfg.sae.seed)?;
            let model = train_sae(&frames, &cfg.sae)?;
            FeatureSet {
                kind: FeatureKind::Sae39,
                exemplars: encode_all(&model, &corpus.exemplars)?,
                train: encode_all(&model, train)?,
                test: encode_all(&model, test)?,
            }
        }
    })
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}

/// Runs every stage and evaluates on the test split.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, Error> {
    let corpus = generate_synthetic(&cfg.corpus)?;
    let (features, features_secs) = timed(|| prepare_features(&corpus, cfg));
    let fs = features?;
    let kw = &corpus.keywords;
    let (dtw_train, dtw_train_secs) = timed(|| search_corpus(kw, &fs.exemplars, &fs.train, &cfg.dtw, ScoreMode::Ks));
    let dtw_train = dtw_train?;
    let (dtw_test, dtw_test_secs) = timed(|| search_corpus(kw, &fs.exemplars, &fs.test, &cfg.dtw, ScoreMode::Ks));
    let dtw_test = dtw_test?;
    let qbye_test = if cfg.also_qbye {
        Some(search_corpus(kw, &fs.exemplars, &fs.test, &cfg.dtw, ScoreMode::Qbye)?)
    } else {
        None
    };

    let targets = make_targets(&dtw_train)?;
    let (trained, distill_train_secs) = timed(|| train_cnn_dtw(&fs.train, &targets, kw.keywords(), &cfg.distill));
    let (model, cnn_dtw_history) = trained?;
    let (cnn_dtw_test, spot_test_secs) = timed(|| spot_archive(&model, &fs.test));
    let cnn_dtw_test = cnn_dtw_test?;

    let gnl_test = match cfg.gnl_sigma {
        Some(sigma) => {
            let mut gcfg = cfg.distill.clone();
            gcfg.gaussian_noise = Some(sigma);
            let (gnl, _) = train_cnn_dtw(&fs.train, &targets, kw.keywords(), &gcfg)?;
            Some(spot_archive(&gnl, &fs.test)?)
        }
        None => None,
    };

    let mut times = StageTimes {
        features_secs,
        dtw_train_secs,
        dtw_test_secs,
        distill_train_secs,
        spot_test_secs,
        ..Default::default()
    };
    let (classifier_test, classifier_history) = if cfg.skip_classifier {
        (None, Vec::new())
    } else {
        let exemplars: Vec<(String, Vec<&FeatureMatrix<f32>>)> = kw
            .keywords()
            .iter()
            .map(|k| {
                (
                    k.clone(),
                    kw.exemplars(k).iter().filter_map(|id| fs.exemplars.get(id)).collect(),
                )
            })
            .collect();
        let (trained, secs) = timed(|| train_classifier(&exemplars, &fs.train, &cfg.classifier));
        times.classifier_train_secs = secs;
        let (clf, history) = trained?;
        let (scores, secs) = timed(|| classify_archive(&clf, &fs.test));
        times.classifier_test_secs = secs;
        (Some(scores?), history)
    };

    let feature = fs.kind.name().to_string();
    let mut systems = vec![SystemScores {
        system: SYSTEM_DTW_KS.into(),
        feature: feature.clone(),
        scores: dtw_test.clone(),
    }];
    if let Some(q) = &qbye_test {
        systems.push(SystemScores {
            system: SYSTEM_DTW_QBYE.into(),
            feature: feature.clone(),
            scores: q.clone(),
        });
    }
    systems.push(SystemScores {
        system: SYSTEM_CNN_DTW.into(),
        feature: feature.clone(),
        scores: cnn_dtw_test.clone(),
    });
    if let Some(g) = &gnl_test {
        systems.push(SystemScores {
            system: SYSTEM_CNN_DTW_GNL.into(),
            feature: feature.clone(),
            scores: g.clone(),
        });
    }
    if let Some(c) = &classifier_test {
        systems.push(SystemScores {
            system: SYSTEM_CLASSIFIER.into(),
            feature,
            scores: c.clone(),
        });
    }
    let report = pooled_report(&systems, &corpus.labels(Split::Test), kw.keywords())?;
    Ok(ExperimentResult {
        feature: fs.kind,
        dtw_train,
        dtw_test,
        cnn_dtw_test,
        cnn_dtw_history,
        gnl_test,
        classifier_test,
        classifier_history,
        qbye_test,
        report,
        times,
        model,
    })
}

/// DTW-KS test scores for each feature choice over the same corpus, in one
/// report with a row group per feature.
pub fn compare_features(cfg: &ExperimentConfig, choices: &[FeatureChoice]) -> Result<EvalReport, Error> {
    let corpus = generate_synthetic(&cfg.corpus)?;
    let kw = &corpus.keywords;
    let mut systems = Vec::new();
    for &feature in choices {
        let fs = prepare_features(&corpus, &ExperimentConfig { feature, ..cfg.clone() })?;
        systems.push(SystemScores {
            system: SYSTEM_DTW_KS.into(),
            feature: fs.kind.name().to_string(),
            scores: search_corpus(kw, &fs.exemplars, &fs.test, &cfg.dtw, ScoreMode::Ks)?,
        });
    }
    Ok(pooled_report(&systems, &corpus.labels(Split::Test), kw.keywords())?)
}

/// Wall-clock comparison of DTW-KS search and CNN-DTW spotting over the
/// same utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub utterances: usize,
    pub dtw_secs: f64,
    pub spot_secs: f64,
}

impl BenchResult {
    pub fn dtw_throughput(&self) -> f64 {
        self.utterances as f64 / self.dtw_secs
    }

    pub fn spot_throughput(&self) -> f64 {
        self.utterances as f64 / self.spot_secs
    }

    pub fn speedup(&self) -> f64 {
        self.spot_throughput() / self.dtw_throughput()
    }

    pub fn to_csv(&self) -> String {
        format!(
            "system,utterances,seconds,utterances_per_second\n{SYSTEM_DTW_KS},{},{:.6},{:.3}\n{SYSTEM_CNN_DTW},{},{:.6},{:.3}\n",
            self.utterances,
            self.dtw_secs,
            self.dtw_throughput(),
            self.utterances,
            self.spot_secs,
            self.spot_throughput()
        )
    }
}

/// Times `repeats` full passes of each system (best pass counts).
pub fn bench(
    keywords: &crate::corpus::KeywordSet,
    exemplars: &FeatureArchive<f32>,
    utterances: &FeatureArchive<f32>,
    dtw: &DtwConfig,
    model: &CnnDtwModel<f32>,
    repeats: usize,
) -> Result<BenchResult, Error> {
    let mut dtw_secs = f64::INFINITY;
    let mut spot_secs = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let (r, s) = timed(|| search_corpus(keywords, exemplars, utterances, dtw, ScoreMode::Ks));
        r?;
        dtw_secs = dtw_secs.min(s);
        let (r, s) = timed(|| spot_archive(model, utterances));
        r?;
        spot_secs = spot_secs.min(s);
    }
    Ok(BenchResult {
        utterances: utterances.len(),
        dtw_secs,
        spot_secs,
    })
}
