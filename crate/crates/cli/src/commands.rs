use std::path::Path;

use kws_core::corpus::{generate_synthetic, load_wav, KeywordSet, Manifest, Split};
use kws_core::dtw::{make_targets, search_corpus, targets_to_matrix, Polarity, ScoreMatrix, TargetVector};
use kws_core::eval::{pooled_report, SystemScores};
use kws_core::features::{import_external, mfcc, read_archive, write_archive, FeatureArchive, FeatureKind};
use kws_core::pipeline::{bench, sample_frames};
use kws_core::sae::{train_sae, SaeModel};
use kws_core::spotter::{
    classify_archive, spot_archive, train_classifier, train_cnn_dtw, ClassifierModel, CnnDtwModel, LossHistory,
};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::provenance::write_record;
use crate::{Cli, CliError, Command};

fn expected_kind(cfg: &RunConfig) -> FeatureKind {
    match cfg.feature.as_str() {
        "sae" => FeatureKind::Sae39,
        "imported" => FeatureKind::Imported,
        _ => FeatureKind::Mfcc39,
    }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.display().to_string()))
    }
}

/// Reads an archive and checks it carries the configured feature kind.
fn load_features(path: &Path, cfg: &RunConfig) -> Result<FeatureArchive<f32>, CliError> {
    require(path)?;
    let archive = read_archive::<f32>(path)?;
    let want = expected_kind(cfg);
    if let Some((id, m)) = archive.iter().find(|(_, m)| m.kind != want) {
        return Err(CliError::Config(format!(
            "{}: {id} holds {} features but the run is configured for {}",
            path.display(),
            m.kind,
            want
        )));
    }
    Ok(archive)
}

fn load_keywords(path: &Path) -> Result<KeywordSet, CliError> {
    require(path)?;
    Ok(KeywordSet::load(path)?)
}

fn write_history(out: &Path, history: &LossHistory) -> Result<(), CliError> {
    let mut text = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, kws_core::dtw::format_sig9(*l)));
    }
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".loss.csv");
    std::fs::write(out.with_file_name(name), text)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides)?;
    if let Some(t) = cli.global.threads {
        cfg.threads = t;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::GenSynth { out } => {
            let corpus = generate_synthetic(&cfg.synth_spec())?;
            corpus.write_to(&out)?;
            write_record(&out, "gen-synth", &cfg, &[])?;
        }
        Command::ExtractFeatures { manifest, split, out } => {
            require(&manifest)?;
            let m = Manifest::load(&manifest)?;
            let split = match split {
                Some(s) => Some(Split::parse(&s).ok_or_else(|| CliError::Config(format!("unknown split {s:?}")))?),
                None => None,
            };
            let entries: Vec<_> = m
                .entries
                .iter()
                .filter(|e| split.is_none_or(|s| e.split == s))
                .collect();
            let mcfg = cfg.mfcc_config();
            let archive: FeatureArchive<f32> = entries
                .par_iter()
                .map(|e| -> Result<_, CliError> {
                    let wav = load_wav(m.resolve(&manifest, e))?;
                    Ok((e.id.clone(), mfcc::<f32>(&wav, &mcfg)?))
                })
                .collect::<Result<_, _>>()?;
            write_archive(&archive, &out)?;
            let paths: Vec<_> = entries.iter().map(|e| m.resolve(&manifest, e)).collect();
            let mut inputs: Vec<&Path> = vec![manifest.as_path()];
            inputs.extend(paths.iter().map(|p| p.as_path()));
            write_record(&out, "extract-features", &cfg, &inputs)?;
        }
        Command::TrainSae { features, out } => {
            let mut merged = FeatureArchive::new();
            for (i, p) in features.iter().enumerate() {
                for (id, m) in load_features(p, &cfg)? {
                    merged.insert(format!("{i}:{id}"), m);
                }
            }
            let sae_cfg = cfg.sae_config();
            let frames = sample_frames(&merged, cfg.sae_frames, sae_cfg.seed)?;
            if frames.is_empty() {
                return Err(kws_core::sae::SaeError::EmptyInput.into());
            }
            let model = train_sae(&frames, &sae_cfg)?;
            model.save(&out)?;
            let inputs: Vec<&Path> = features.iter().map(|p| p.as_path()).collect();
            write_record(&out, "train-sae", &cfg, &inputs)?;
        }
        Command::EncodeSae { model, features, out } => {
            require(&model)?;
            require(&features)?;
            let sae = SaeModel::<f32>::load(&model)?;
            let input = read_archive::<f32>(&features)?;
            let encoded: FeatureArchive<f32> = input
                .par_iter()
                .map(|(id, m)| Ok((id.clone(), sae.encode(m)?)))
                .collect::<Result<_, CliError>>()?;
            write_archive(&encoded, &out)?;
            write_record(&out, "encode-sae", &cfg, &[&model, &features])?;
        }
        Command::ImportFeatures { input, out } => {
            require(&input)?;
            let archive = import_external::<f32>(&input, cfg.import_dim)?;
            write_archive(&archive, &out)?;
            write_record(&out, "import-features", &cfg, &[&input])?;
        }
        Command::DtwSearch {
            keywords,
            exemplars,
            utterances,
            out,
        } => {
            let kw = load_keywords(&keywords)?;
            let ex = load_features(&exemplars, &cfg)?;
            let utt = load_features(&utterances, &cfg)?;
            let table = search_corpus(&kw, &ex, &utt, &cfg.dtw_config(), cfg.score_mode())?;
            table.save(&out)?;
            write_record(&out, "dtw-search", &cfg, &[&keywords, &exemplars, &utterances])?;
        }
        Command::MakeTargets { scores, out } => {
            require(&scores)?;
            let table = ScoreMatrix::load(&scores)?;
            let targets = make_targets(&table)?;
            targets_to_matrix(&targets, &table.keyword_ids)?.save(&out)?;
            write_record(&out, "make-targets", &cfg, &[&scores])?;
        }
        Command::TrainClassifier {
            keywords,
            exemplars,
            background,
            out,
        } => {
            let kw = load_keywords(&keywords)?;
            let ex = load_features(&exemplars, &cfg)?;
            let bg = load_features(&background, &cfg)?;
            let per_keyword = kw
                .keywords()
                .iter()
                .map(|k| {
                    let ms = kw
                        .exemplars(k)
                        .iter()
                        .map(|id| {
                            ex.get(id)
                                .ok_or_else(|| CliError::MissingInput(format!("exemplar {id}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok((k.clone(), ms))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let (model, history) = train_classifier(&per_keyword, &bg, &cfg.classifier_config())?;
            std::fs::write(&out, model.to_bytes())?;
            write_history(&out, &history)?;
            write_record(&out, "train-classifier", &cfg, &[&keywords, &exemplars, &background])?;
        }
        Command::TrainCnnDtw { features, targets, out } => {
            let train = load_features(&features, &cfg)?;
            require(&targets)?;
            let table = ScoreMatrix::load(&targets)?;
            if table.polarity != Polarity::HigherIsMatch {
                return Err(CliError::Config(format!(
                    "{} is a cost table, not targets",
                    targets.display()
                )));
            }
            let tv: Vec<TargetVector> = table
                .utterance_ids
                .iter()
                .enumerate()
                .map(|(u, id)| TargetVector {
                    utterance_id: id.clone(),
                    y: table.row(u).to_vec(),
                })
                .collect();
            let (model, history) = train_cnn_dtw(&train, &tv, &table.keyword_ids, &cfg.distill_config())?;
            std::fs::write(&out, model.to_bytes())?;
            write_history(&out, &history)?;
            write_record(&out, "train-cnn-dtw", &cfg, &[&features, &targets])?;
        }
        Command::Spot { model, features, out } => {
            require(&model)?;
            let bytes = std::fs::read(&model)?;
            let utt = load_features(&features, &cfg)?;
            let table = match CnnDtwModel::<f32>::from_bytes(&bytes) {
                Ok(m) => spot_archive(&m, &utt)?,
                Err(_) => classify_archive(&ClassifierModel::<f32>::from_bytes(&bytes)?, &utt)?,
            };
            table.save(&out)?;
            write_record(&out, "spot", &cfg, &[&model, &features])?;
        }
        Command::Evaluate {
            scores,
            manifest,
            feature_name,
            out,
        } => {
            require(&manifest)?;
            let m = Manifest::load(&manifest)?;
            let truth = m
                .entries
                .iter()
                .filter_map(|e| e.transcript_keywords.clone().map(|k| (e.id.clone(), k)))
                .collect();
            let mut systems = Vec::new();
            let mut paths = Vec::new();
            for s in &scores {
                let (name, path) = s
                    .split_once('=')
                    .ok_or_else(|| CliError::Config(format!("--scores {s:?} is not SYSTEM=PATH")))?;
                let path = Path::new(path).to_path_buf();
                require(&path)?;
                systems.push(SystemScores {
                    system: name.to_string(),
                    feature: feature_name.clone(),
                    scores: ScoreMatrix::load(&path)?,
                });
                paths.push(path);
            }
            let keywords = systems[0].scores.keyword_ids.clone();
            let report = pooled_report(&systems, &truth, &keywords)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("report.csv"), report.to_csv())?;
            report.write_roc_files(&out.join("roc"))?;
            let mut inputs: Vec<&Path> = vec![manifest.as_path()];
            inputs.extend(paths.iter().map(|p| p.as_path()));
            write_record(&out, "evaluate", &cfg, &inputs)?;
        }
        Command::Bench {
            keywords,
            exemplars,
            utterances,
            model,
            out,
        } => {
            let kw = load_keywords(&keywords)?;
            let ex = load_features(&exemplars, &cfg)?;
            let utt = load_features(&utterances, &cfg)?;
            require(&model)?;
            let cnn = CnnDtwModel::<f32>::from_bytes(&std::fs::read(&model)?)?;
            let result = bench(&kw, &ex, &utt, &cfg.dtw_config(), &cnn, cfg.bench_repeats)?;
            std::fs::write(&out, result.to_csv())?;
            println!(
                "dtw-search {:.2} utt/s, spot {:.2} utt/s, speedup {:.1}x",
                result.dtw_throughput(),
                result.spot_throughput(),
                result.speedup()
            );
            write_record(&out, "bench", &cfg, &[&keywords, &exemplars, &utterances, &model])?;
        }
    }
    Ok(())
}
