//! Feature-space synthetic corpus.
//!
//! Each keyword is a smooth random prototype trajectory. Exemplars are
//! time-warped, noise-perturbed copies of the prototype. Utterances are
//! stationary AR(1) background noise with keyword instances spliced in and a
//! per-utterance additive channel offset, which mimics the recording mismatch
//! between isolated exemplars and broadcast audio.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{CorpusError, GroundTruth, KeywordSet, Manifest, ManifestEntry, Occurrence, Split};
use crate::features::{write_archive, FeatureArchive, FeatureKind, FeatureMatrix};
use crate::rng::{substream, StageRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_keywords: usize,
    pub exemplars_per_keyword: usize,
    pub num_utterances: SplitCounts,
    /// Inclusive utterance length range in frames.
    pub utterance_length_range: (usize, usize),
    /// Inclusive prototype length range in frames.
    pub keyword_length_range: (usize, usize),
    pub keyword_occurrence_probability: f64,
    /// Time-stretch factors applied to every keyword instance.
    pub warp_range: (f64, f64),
    pub noise_sigma: f64,
    /// Std of the per-utterance additive offset (utterances only).
    pub channel_offset_sigma: f64,
    /// AR(1) coefficient of the background noise.
    pub background_correlation: f64,
    pub feature_dim: usize,
    pub frame_shift_ms: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_keywords: 10,
            exemplars_per_keyword: 6,
            num_utterances: SplitCounts {
                train: 300,
                dev: 100,
                test: 100,
            },
            utterance_length_range: (120, 240),
            keyword_length_range: (30, 45),
            keyword_occurrence_probability: 0.1,
            warp_range: (0.85, 1.15),
            noise_sigma: 0.5,
            channel_offset_sigma: 0.3,
            background_correlation: 0.7,
            feature_dim: 39,
            frame_shift_ms: 10.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.to_string()));
        if self.num_keywords == 0 || self.exemplars_per_keyword == 0 {
            return bad("need at least one keyword and one exemplar per keyword");
        }
        if !(0.0..=1.0).contains(&self.keyword_occurrence_probability) {
            return bad("occurrence probability outside [0, 1]");
        }
        let (w0, w1) = self.warp_range;
        if !(0.5 <= w0 && w0 <= w1 && w1 <= 2.0) {
            return bad("warp range must satisfy 0.5 <= min <= max <= 2.0");
        }
        if !(self.noise_sigma >= 0.0 && self.channel_offset_sigma >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(0.0..1.0).contains(&self.background_correlation) {
            return bad("background correlation must lie in [0, 1)");
        }
        let (u0, u1) = self.utterance_length_range;
        let (k0, k1) = self.keyword_length_range;
        if u0 == 0 || u0 > u1 || k0 < 2 || k0 > k1 {
            return bad("length ranges must be non-empty with positive minimum");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        Ok(())
    }
}

/// Everything `generate_synthetic` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub keywords: KeywordSet,
    pub manifest: Manifest,
    pub ground_truth: GroundTruth,
    pub exemplars: FeatureArchive<f32>,
    pub utterances: BTreeMap<Split, FeatureArchive<f32>>,
}

pub const EXEMPLAR_ARCHIVE: &str = "exemplars.qbef";
pub const KEYWORD_FILE: &str = "keywords.tsv";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.tsv";

pub fn split_archive_name(split: Split) -> String {
    format!("{}.qbef", split.name())
}

impl SyntheticCorpus {
    /// Writes keywords.tsv, manifest.tsv, ground_truth.tsv, exemplars.qbef
    /// and one `<split>.qbef` per split into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.keywords.save(dir.join(KEYWORD_FILE))?;
        write_archive(&self.exemplars, dir.join(EXEMPLAR_ARCHIVE))?;
        for (split, archive) in &self.utterances {
            write_archive(archive, dir.join(split_archive_name(*split)))?;
        }
        self.manifest.save(dir.join(MANIFEST_FILE))?;
        self.ground_truth.save(dir.join(GROUND_TRUTH_FILE))?;
        Ok(())
    }

    pub fn split(&self, split: Split) -> &FeatureArchive<f32> {
        &self.utterances[&split]
    }

    /// Keyword labels for every utterance of `split`.
    pub fn labels(&self, split: Split) -> BTreeMap<String, BTreeSet<String>> {
        self.manifest
            .split(split)
            .map(|e| {
                let set = self.ground_truth.keywords_of(&e.id);
                (e.id.clone(), set)
            })
            .collect()
    }
}

type Trajectory = Vec<Vec<f64>>;

fn gaussian(rng: &mut StageRng) -> f64 {
    rng.sample(StandardNormal)
}

fn prototype(rng: &mut StageRng, len: usize, dim: usize) -> Trajectory {
    // anchors every ~6 frames, linearly interpolated
    let anchors = (len / 6).max(2) + 1;
    let points: Vec<Vec<f64>> = (0..anchors)
        .map(|_| (0..dim).map(|_| gaussian(rng)).collect())
        .collect();
    (0..len)
        .map(|t| {
            let pos = t as f64 * (anchors - 1) as f64 / (len - 1) as f64;
            let i = (pos.floor() as usize).min(anchors - 2);
            let frac = pos - i as f64;
            (0..dim)
                .map(|d| points[i][d] * (1.0 - frac) + points[i + 1][d] * frac)
                .collect()
        })
        .collect()
}

/// Linear-interpolation time stretch to `round(len * factor)` frames.
fn warp(traj: &Trajectory, factor: f64) -> Trajectory {
    let len = traj.len();
    let out_len = ((len as f64 * factor).round() as usize).max(2);
    (0..out_len)
        .map(|t| {
            let pos = t as f64 * (len - 1) as f64 / (out_len - 1) as f64;
            let i = (pos.floor() as usize).min(len - 2);
            let frac = pos - i as f64;
            traj[i]
                .iter()
                .zip(&traj[i + 1])
                .map(|(a, b)| a * (1.0 - frac) + b * frac)
                .collect()
        })
        .collect()
}

fn instance(rng: &mut StageRng, proto: &Trajectory, spec: &SyntheticSpec) -> Trajectory {
    let (w0, w1) = spec.warp_range;
    let factor = if w0 == w1 { w0 } else { rng.random_range(w0..=w1) };
    let mut t = warp(proto, factor);
    for frame in &mut t {
        for v in frame.iter_mut() {
            *v += spec.noise_sigma * gaussian(rng);
        }
    }
    t
}

fn to_matrix(t: &Trajectory, spec: &SyntheticSpec) -> FeatureMatrix<f32> {
    let data = t.iter().flatten().map(|&v| v as f32).collect();
    FeatureMatrix::new(
        data,
        t.len(),
        spec.feature_dim,
        spec.frame_shift_ms,
        FeatureKind::Mfcc39,
    )
    .expect("synthetic frames are finite")
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}

/// Generates keywords, exemplars, utterances and their ground truth.
///
/// The result is a pure function of `spec` (including its seed).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = substream(spec.seed, "corpus");
    let dim = spec.feature_dim;
    let kw_w = id_width(spec.num_keywords);
    let ex_w = id_width(spec.exemplars_per_keyword);

    let keyword_ids: Vec<String> = (0..spec.num_keywords).map(|k| format!("kw{k:0kw_w$}")).collect();
    let prototypes: Vec<Trajectory> = keyword_ids
        .iter()
        .map(|_| {
            let len = rng.random_range(spec.keyword_length_range.0..=spec.keyword_length_range.1);
            prototype(&mut rng, len, dim)
        })
        .collect();

    let mut exemplars = FeatureArchive::new();
    let mut exemplar_map = BTreeMap::new();
    for (kw, proto) in keyword_ids.iter().zip(&prototypes) {
        let ids: Vec<String> = (0..spec.exemplars_per_keyword)
            .map(|i| format!("{kw}_ex{i:0ex_w$}"))
            .collect();
        for id in &ids {
            let t = instance(&mut rng, proto, spec);
            exemplars.insert(id.clone(), to_matrix(&t, spec));
        }
        exemplar_map.insert(kw.clone(), ids);
    }
    let keywords = KeywordSet::new(exemplar_map)?;

    let mut entries = Vec::new();
    let mut occurrences = Vec::new();
    let mut utterances = BTreeMap::new();
    let rho = spec.background_correlation;
    let innovation = (1.0 - rho * rho).sqrt();
    for split in Split::ALL {
        let n = spec.num_utterances.get(split);
        let u_w = id_width(n).max(4);
        let mut archive = FeatureArchive::new();
        for u in 0..n {
            let id = format!("{}_{u:0u_w$}", split.name());
            let mut present: Vec<usize> = (0..spec.num_keywords)
                .filter(|_| rng.random_bool(spec.keyword_occurrence_probability))
                .collect();
            present.shuffle(&mut rng);
            let instances: Vec<Trajectory> = present
                .iter()
                .map(|&k| instance(&mut rng, &prototypes[k], spec))
                .collect();
            let target_len = rng.random_range(spec.utterance_length_range.0..=spec.utterance_length_range.1);
            let kw_frames: usize = instances.iter().map(Vec::len).sum();
            let background = target_len.saturating_sub(kw_frames).max(instances.len() + 1);
            // split the background into len(instances)+1 gaps
            let mut cuts: Vec<usize> = (0..instances.len()).map(|_| rng.random_range(0..=background)).collect();
            cuts.sort_unstable();
            let mut gaps = Vec::with_capacity(instances.len() + 1);
            let mut prev = 0;
            for &c in &cuts {
                gaps.push(c - prev);
                prev = c;
            }
            gaps.push(background - prev);

            let offset: Vec<f64> = (0..dim)
                .map(|_| spec.channel_offset_sigma * gaussian(&mut rng))
                .collect();
            let mut state: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let mut frames: Trajectory = Vec::with_capacity(background + kw_frames);
            let mut push_background = |frames: &mut Trajectory, count: usize, rng: &mut StageRng| {
                for _ in 0..count {
                    for s in state.iter_mut() {
                        *s = rho * *s + innovation * gaussian(rng);
                    }
                    frames.push(state.clone());
                }
            };
            for (i, inst) in instances.iter().enumerate() {
                push_background(&mut frames, gaps[i], &mut rng);
                let start = frames.len();
                frames.extend(inst.iter().cloned());
                occurrences.push(Occurrence {
                    utterance: id.clone(),
                    keyword: keyword_ids[present[i]].clone(),
                    start,
                    end: frames.len(),
                });
            }
            push_background(&mut frames, gaps[instances.len()], &mut rng);
            for f in &mut frames {
                for (v, o) in f.iter_mut().zip(&offset) {
                    *v += o;
                }
            }

            let labels: BTreeSet<String> = present.iter().map(|&k| keyword_ids[k].clone()).collect();
            entries.push(ManifestEntry {
                id: id.clone(),
                path: split_archive_name(split),
                split,
                transcript_keywords: if split == Split::Train { None } else { Some(labels) },
            });
            archive.insert(id, to_matrix(&frames, spec));
        }
        utterances.insert(split, archive);
    }

    Ok(SyntheticCorpus {
        keywords,
        manifest: Manifest::new(entries)?,
        ground_truth: GroundTruth { occurrences },
        exemplars,
        utterances,
    })
}
