mod common;

use std::collections::BTreeMap;

use common::*;
use kws_core::corpus::KeywordSet;
use kws_core::dtw::{dtw_align, keyword_score_ks, keyword_score_qbye, search_corpus, sweep_min, DtwConfig, ScoreMode};
use kws_core::features::FeatureArchive;
use proptest::prelude::*;
use rand::Rng;

fn cfg(skip: usize, lo: f64, hi: f64, steps: usize) -> DtwConfig {
    DtwConfig {
        window_skip: skip,
        length_factors: (lo, hi),
        length_steps: steps,
        band_width: None,
    }
}

#[test]
fn random_5x3_vs_8x3_matches_path_enumeration() {
    let mut r = rng(11);
    for _ in 0..20 {
        let k = random_matrix(&mut r, 5, 3);
        let s = random_matrix(&mut r, 8, 3);
        let got = dtw_align(&k, &s).unwrap();
        assert!((got - dtw_oracle(&k, &s)).abs() < 1e-9);
    }
}

#[test]
fn keyword_10x4_in_40x4_matches_all_31_offsets() {
    let mut r = rng(12);
    let k = random_matrix(&mut r, 10, 4);
    let u = random_matrix(&mut r, 40, 4);
    let c = cfg(1, 1.0, 1.0, 1);
    assert_eq!(sweep_windows(10, 40, &c).len(), 31);
    let hit = sweep_min(&k, &u, &c).unwrap();
    let brute = (0..31)
        .map(|o| dtw_align(&k, &u.slice_frames(o, o + 10)).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(hit.cost, brute);
}

#[test]
fn three_exemplar_ks_is_the_explicit_minimum() {
    let mut r = rng(13);
    let c = DtwConfig::default();
    let ex: Vec<_> = (0..3).map(|_| random_matrix(&mut r, 6, 4)).collect();
    let u = random_matrix(&mut r, 30, 4);
    let refs: Vec<_> = ex.iter().collect();
    let each: Vec<f64> = ex.iter().map(|e| sweep_min(e, &u, &c).unwrap().cost).collect();
    assert_eq!(
        keyword_score_ks(&refs, &u, &c).unwrap(),
        each.iter().copied().fold(f64::INFINITY, f64::min)
    );
    let mean = keyword_score_qbye(&refs, &u, &c).unwrap();
    assert!((mean - each.iter().sum::<f64>() / 3.0).abs() < 1e-15);
}

fn small_corpus(seed: u64) -> (KeywordSet, FeatureArchive<f64>, FeatureArchive<f64>) {
    let mut r = rng(seed);
    let mut ex = FeatureArchive::new();
    let mut sets = BTreeMap::new();
    for kw in ["alpha", "bravo", "charlie"] {
        let ids: Vec<String> = (0..2).map(|i| format!("{kw}-{i}")).collect();
        for id in &ids {
            let frames = r.random_range(4..9);
            ex.insert(id.clone(), random_matrix(&mut r, frames, 3));
        }
        sets.insert(kw.to_string(), ids);
    }
    let utt = (0..9)
        .map(|i| {
            let frames = r.random_range(5..30);
            (format!("utt{i:02}"), random_matrix(&mut r, frames, 3))
        })
        .collect();
    (KeywordSet::new(sets).unwrap(), ex, utt)
}

#[test]
fn search_is_independent_of_worker_count() {
    let (kw, ex, utt) = small_corpus(14);
    let c = DtwConfig::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| search_corpus(&kw, &ex, &utt, &c, ScoreMode::Ks).unwrap())
    };
    let one = run(1);
    assert_eq!(one.to_tsv(), run(3).to_tsv());
    assert_eq!(one.to_tsv(), run(8).to_tsv());
}

#[test]
fn renaming_utterances_permutes_rows() {
    let (kw, ex, utt) = small_corpus(15);
    let c = DtwConfig::default();
    let base = search_corpus(&kw, &ex, &utt, &c, ScoreMode::Ks).unwrap();
    // reversing the ids reverses the archive order
    let n = utt.len();
    let renamed: FeatureArchive<f64> = utt
        .iter()
        .enumerate()
        .map(|(i, (_, m))| (format!("r{:02}", n - 1 - i), m.clone()))
        .collect();
    let perm = search_corpus(&kw, &ex, &renamed, &c, ScoreMode::Ks).unwrap();
    for u in 0..n {
        assert_eq!(base.row(u), perm.row(n - 1 - u));
    }
}

#[test]
fn skip_one_never_loses_to_skip_three_on_any_cell() {
    let (kw, ex, utt) = small_corpus(16);
    let fine = search_corpus(&kw, &ex, &utt, &cfg(1, 0.8, 1.2, 3), ScoreMode::Ks).unwrap();
    let coarse = search_corpus(&kw, &ex, &utt, &cfg(3, 0.8, 1.2, 3), ScoreMode::Ks).unwrap();
    for (f, c) in fine.values().iter().zip(coarse.values()) {
        assert!(f <= c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn align_matches_enumeration(seed in any::<u64>(), n in 1usize..7, m in 1usize..8, d in 1usize..5) {
        let mut r = rng(seed);
        let k = random_matrix(&mut r, n, d);
        let s = random_matrix(&mut r, m, d);
        let got = dtw_align(&k, &s).unwrap();
        let brute = dtw_oracle(&k, &s);
        prop_assert!((got - brute).abs() < 1e-9);
        prop_assert!((dtw_oracle_by_length(&k, &s) - brute).abs() < 1e-9);
        prop_assert!((0.0..=2.0).contains(&got));
    }

    #[test]
    fn align_is_symmetric_and_zero_on_itself(seed in any::<u64>(), n in 1usize..15, m in 1usize..15, d in 1usize..6) {
        let mut r = rng(seed);
        let k = random_matrix(&mut r, n, d);
        let s = random_matrix(&mut r, m, d);
        prop_assert!((dtw_align(&k, &s).unwrap() - dtw_align(&s, &k).unwrap()).abs() < 1e-12);
        prop_assert_eq!(dtw_align(&k, &k).unwrap(), 0.0);
    }

    #[test]
    fn sweep_equals_explicit_window_minimum(
        seed in any::<u64>(),
        n in 2usize..10,
        m in 1usize..40,
        skip in 1usize..5,
        lo in 0.5f64..1.0,
        hi in 1.0f64..1.6,
        steps in 1usize..5,
    ) {
        let mut r = rng(seed);
        let k = random_matrix(&mut r, n, 3);
        let u = random_matrix(&mut r, m, 3);
        let c = cfg(skip, lo, hi, steps);
        let hit = sweep_min(&k, &u, &c).unwrap();
        prop_assert_eq!(hit.cost, sweep_oracle(&k, &u, &c, |a, b| dtw_align(a, b).unwrap()));
        prop_assert!(sweep_windows(n, m, &c).contains(&(hit.offset, hit.length)));
    }

    #[test]
    fn finer_search_never_costs_more(seed in any::<u64>(), n in 2usize..10, m in 10usize..40, skip in 2usize..6) {
        let mut r = rng(seed);
        let k = random_matrix(&mut r, n, 3);
        let u = random_matrix(&mut r, m, 3);
        let coarse = sweep_min(&k, &u, &cfg(skip, 1.0, 1.0, 1)).unwrap().cost;
        // offsets that are multiples of `skip` are a subset of every offset
        prop_assert!(sweep_min(&k, &u, &cfg(1, 1.0, 1.0, 1)).unwrap().cost <= coarse);
        // adding lengths around 1.0 keeps the old one in the grid
        prop_assert!(sweep_min(&k, &u, &cfg(skip, 0.5, 1.5, 3)).unwrap().cost <= coarse);
    }

    #[test]
    fn ks_never_exceeds_qbye(seed in any::<u64>(), count in 1usize..5) {
        let mut r = rng(seed);
        let ex: Vec<_> = (0..count).map(|_| random_matrix(&mut r, 5, 3)).collect();
        let refs: Vec<_> = ex.iter().collect();
        let u = random_matrix(&mut r, 25, 3);
        let c = DtwConfig::default();
        prop_assert!(keyword_score_ks(&refs, &u, &c).unwrap() <= keyword_score_qbye(&refs, &u, &c).unwrap() + 1e-15);
    }
}
