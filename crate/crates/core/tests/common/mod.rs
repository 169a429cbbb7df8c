//! Reference implementations used as oracles by the integration tests.
//! Everything here is written straight from the definitions and shares no
//! code with the library beyond its public data types.
#![allow(dead_code)]

use kws_core::dtw::DtwConfig;
use kws_core::features::{FeatureKind, FeatureMatrix};
use kws_core::nn::{LayerSpec, Mode, Network, Tensor};
use kws_core::rng::{substream, StageRng};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, frames: usize, dim: usize) -> FeatureMatrix<f64> {
    let data = (0..frames * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureMatrix::new(data, frames, dim, 10.0, FeatureKind::Mfcc39).unwrap()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Enumerates every monotone path from `(0,0)` to `(n-1,m-1)` with steps
/// (1,0), (0,1), (1,1). Returns the cheapest total divided by its node count,
/// preferring fewer nodes among totals within `1e-12`.
pub fn dtw_oracle(k: &FeatureMatrix<f64>, s: &FeatureMatrix<f64>) -> f64 {
    let (n, m) = (k.num_frames(), s.num_frames());
    let mut best = (f64::INFINITY, usize::MAX);
    let mut stack = vec![(0usize, 0usize, cosine(k.row(0), s.row(0)), 1usize)];
    while let Some((i, j, total, nodes)) = stack.pop() {
        if i == n - 1 && j == m - 1 {
            if total < best.0 - 1e-12 || ((total - best.0).abs() <= 1e-12 && nodes < best.1) {
                best = (total, nodes);
            }
            continue;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let (a, b) = (i + di, j + dj);
            if a < n && b < m {
                stack.push((a, b, total + cosine(k.row(a), s.row(b)), nodes + 1));
            }
        }
    }
    best.0 / best.1 as f64
}

/// Same quantity as [`dtw_oracle`] without enumerating paths: for every cell
/// and every node count `l`, the cheapest total over all paths of exactly
/// `l` nodes. Every monotone path has one node count, so minimizing over the
/// final cell's table covers all of them.
pub fn dtw_oracle_by_length(k: &FeatureMatrix<f64>, s: &FeatureMatrix<f64>) -> f64 {
    let (n, m) = (k.num_frames(), s.num_frames());
    let max_nodes = n + m - 1;
    let inf = f64::INFINITY;
    let idx = |i: usize, j: usize, l: usize| (i * m + j) * (max_nodes + 1) + l;
    let mut best = vec![inf; n * m * (max_nodes + 1)];
    best[idx(0, 0, 1)] = cosine(k.row(0), s.row(0));
    for i in 0..n {
        for j in 0..m {
            if i == 0 && j == 0 {
                continue;
            }
            let c = cosine(k.row(i), s.row(j));
            for l in 2..=max_nodes {
                let mut v = inf;
                if i > 0 {
                    v = v.min(best[idx(i - 1, j, l - 1)]);
                }
                if j > 0 {
                    v = v.min(best[idx(i, j - 1, l - 1)]);
                }
                if i > 0 && j > 0 {
                    v = v.min(best[idx(i - 1, j - 1, l - 1)]);
                }
                best[idx(i, j, l)] = v + c;
            }
        }
    }
    let mut pick = (inf, usize::MAX);
    for l in 1..=max_nodes {
        let t = best[idx(n - 1, m - 1, l)];
        if t < pick.0 - 1e-12 {
            pick = (t, l);
        }
    }
    pick.0 / pick.1 as f64
}

/// Every candidate window of the sweep, listed explicitly:
/// `(offset, length)` pairs for lengths `round(f * T_k)` at offsets
/// `0, skip, 2 skip, ...` that fit, plus the whole utterance when some
/// length does not fit.
pub fn sweep_windows(keyword_frames: usize, utterance_frames: usize, cfg: &DtwConfig) -> Vec<(usize, usize)> {
    let (lo, hi) = cfg.length_factors;
    let factors: Vec<f64> = if cfg.length_steps == 1 || lo == hi {
        vec![if lo == hi { lo } else { 1.0 }]
    } else {
        (0..cfg.length_steps)
            .map(|i| lo + (hi - lo) * i as f64 / (cfg.length_steps - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    for f in factors {
        let w = ((f * keyword_frames as f64).round() as usize).max(1);
        if w >= utterance_frames {
            out.push((0, utterance_frames));
            continue;
        }
        let mut o = 0;
        while o + w <= utterance_frames {
            out.push((o, w));
            o += cfg.window_skip;
        }
    }
    out
}

/// Minimum of `align` over the explicit window list.
pub fn sweep_oracle(
    k: &FeatureMatrix<f64>,
    u: &FeatureMatrix<f64>,
    cfg: &DtwConfig,
    align: impl Fn(&FeatureMatrix<f64>, &FeatureMatrix<f64>) -> f64,
) -> f64 {
    sweep_windows(k.num_frames(), u.num_frames(), cfg)
        .into_iter()
        .map(|(o, w)| align(k, &u.slice_frames(o, o + w)))
        .fold(f64::INFINITY, f64::min)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            wins += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

/// Equal error rate of the randomized detector that accepts scores above a
/// threshold and scores equal to it with probability `lambda`. Scans every
/// distinct score with `lambda` on a grid of `steps + 1` points and returns
/// the mean of the two error rates at the most balanced point.
pub fn eer_grid(scores: &[f64], labels: &[bool], steps: usize) -> f64 {
    let np = labels.iter().filter(|&&l| l).count() as f64;
    let nn = labels.len() as f64 - np;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let mut best = (f64::INFINITY, 0.5);
    for &t in &thresholds {
        for step in 0..=steps {
            let lambda = step as f64 / steps as f64;
            let (mut tp, mut fp) = (0.0, 0.0);
            for (&s, &l) in scores.iter().zip(labels) {
                let accept = if s > t {
                    1.0
                } else if s == t {
                    lambda
                } else {
                    0.0
                };
                if l {
                    tp += accept;
                } else {
                    fp += accept;
                }
            }
            let fpr = fp / nn;
            let fnr = 1.0 - tp / np;
            let gap = (fpr - fnr).abs();
            if gap < best.0 {
                best = (gap, (fpr + fnr) / 2.0);
            }
        }
    }
    best.1
}

/// Random scores and labels with at least one of each class. With
/// `levels > 0` the scores are drawn from that many distinct values, which
/// produces heavy ties.
pub fn random_detection(rng: &mut impl Rng, n: usize, levels: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let scores = (0..n)
            .map(|i| {
                let shift = if labels[i] { 0.3 } else { 0.0 };
                if levels > 0 {
                    (rng.random_range(0..levels) as f64 / levels as f64 + shift).min(1.0)
                } else {
                    rng.random_range(0.0..1.0) + shift
                }
            })
            .collect();
        return (scores, labels);
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Outcome of one finite-difference comparison.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel: f64,
}

impl GradReport {
    pub fn merge(&mut self, o: GradReport) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.max_rel = self.max_rel.max(o.max_rel);
    }
}

fn forward_rng(seed: u64) -> StageRng {
    substream(seed, "gradcheck-forward")
}

/// Loss value and its gradient with respect to the network output.
pub type LossFn = dyn Fn(&[f64]) -> (f64, Vec<f64>);

/// Central differences of `loss(net(x))` against the analytic parameter and
/// input gradients. Every forward uses the same rng stream, so dropout masks
/// and noise are identical across evaluations. Perturbations that change the
/// ReLU/max-pool regime are skipped. At most `per_tensor` entries of each
/// parameter tensor (and of the input) are sampled.
pub fn check_network(
    net: &mut Network<f64>,
    x: &Tensor<f64>,
    loss: &LossFn,
    seed: u64,
    per_tensor: usize,
) -> GradReport {
    let mut pick = rng(seed ^ 0x5eed);
    let (out, cache) = net.forward(x, Mode::Train, &mut forward_rng(seed)).unwrap();
    let base_sig = cache.regime_signature();
    let (_, dl) = loss(out.data());
    let (grads, input_grad) = net.backward(&cache, &dl).unwrap();
    let eval = |net: &Network<f64>, x: &Tensor<f64>| -> (f64, u64) {
        let (out, cache) = net.forward(x, Mode::Train, &mut forward_rng(seed)).unwrap();
        (loss(out.data()).0, cache.regime_signature())
    };
    let mut report = GradReport::default();
    let record = |analytic: f64, plus: (f64, u64), minus: (f64, u64), report: &mut GradReport| {
        if plus.1 != base_sig || minus.1 != base_sig {
            report.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * FD_STEP);
        report.checked += 1;
        report.max_rel = report.max_rel.max(rel_error(analytic, numeric));
    };
    let tensors = grads.tensors.len();
    for t in 0..tensors {
        let len = grads.tensors[t].len();
        let idx: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| pick.random_range(0..len)).collect()
        };
        for i in idx {
            let orig = net.params()[t][i];
            net.params_mut()[t][i] = orig + FD_STEP;
            let plus = eval(net, x);
            net.params_mut()[t][i] = orig - FD_STEP;
            let minus = eval(net, x);
            net.params_mut()[t][i] = orig;
            record(grads.tensors[t][i], plus, minus, &mut report);
        }
    }
    let len = x.len();
    let idx: Vec<usize> = if len <= per_tensor {
        (0..len).collect()
    } else {
        (0..per_tensor).map(|_| pick.random_range(0..len)).collect()
    };
    for i in idx {
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= FD_STEP;
        record(input_grad[i], eval(net, &xp), eval(net, &xm), &mut report);
    }
    report
}

/// Fixed random linear read-out, so every output contributes to the loss.
pub fn linear_loss(weights: Vec<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |out: &[f64]| (out.iter().zip(&weights).map(|(o, w)| o * w).sum(), weights.clone())
}

pub fn random_tensor(rng: &mut impl Rng, frames: usize, channels: usize) -> Tensor<f64> {
    Tensor::matrix(
        frames,
        channels,
        (0..frames * channels).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Textbook MFCC pipeline in plain f64 loops with a naive DFT: preemphasis,
/// Hamming window, zero-padded power spectrum, triangular mel filters,
/// floored natural log, orthonormal DCT-II, then regression deltas with
/// edge replication. Rows are `[c, delta c, delta-delta c]`.
pub fn reference_mfcc(samples: &[f64], rate: f64, cfg: &kws_core::features::MfccConfig) -> Vec<Vec<f64>> {
    use std::f64::consts::PI;
    let len = (rate * cfg.frame_length_ms / 1000.0).round() as usize;
    let shift = (rate * cfg.frame_shift_ms / 1000.0).round() as usize;
    let mut n_fft = 1;
    while n_fft < len {
        n_fft *= 2;
    }
    let bins = n_fft / 2 + 1;
    let mut y = vec![0.0; samples.len()];
    for i in 0..samples.len() {
        y[i] = if i == 0 {
            samples[0]
        } else {
            samples[i] - cfg.preemphasis * samples[i - 1]
        };
    }
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let nf = cfg.num_mel_filters;
    let (mlo, mhi) = (mel(cfg.low_freq), mel(cfg.high_freq));
    let edge: Vec<f64> = (0..nf + 2)
        .map(|i| hz(mlo + (mhi - mlo) * i as f64 / (nf + 1) as f64))
        .collect();
    let frames = if samples.len() < len {
        0
    } else {
        1 + (samples.len() - len) / shift
    };
    let mut ceps = Vec::new();
    for f in 0..frames {
        let frame: Vec<f64> = (0..len)
            .map(|n| y[f * shift + n] * (0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()))
            .collect();
        let power: Vec<f64> = (0..bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re * re + im * im
            })
            .collect();
        let logmel: Vec<f64> = (0..nf)
            .map(|j| {
                let mut e = 0.0;
                for (k, &p) in power.iter().enumerate() {
                    let freq = k as f64 * rate / n_fft as f64;
                    let w = if freq <= edge[j] || freq >= edge[j + 2] {
                        0.0
                    } else if freq <= edge[j + 1] {
                        (freq - edge[j]) / (edge[j + 1] - edge[j])
                    } else {
                        (edge[j + 2] - freq) / (edge[j + 2] - edge[j + 1])
                    };
                    e += w * p;
                }
                e.max(1e-10).ln()
            })
            .collect();
        let c: Vec<f64> = (0..cfg.num_cepstra)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / nf as f64).sqrt()
                } else {
                    (2.0 / nf as f64).sqrt()
                };
                scale
                    * (0..nf)
                        .map(|n| logmel[n] * (PI * k as f64 * (n as f64 + 0.5) / nf as f64).cos())
                        .sum::<f64>()
            })
            .collect();
        ceps.push(c);
    }
    let delta = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let t_max = m.len() as isize - 1;
        let win = cfg.delta_window as isize;
        let denom: f64 = 2.0 * (1..=win).map(|n| (n * n) as f64).sum::<f64>();
        (0..m.len() as isize)
            .map(|t| {
                (0..m[0].len())
                    .map(|d| {
                        (1..=win)
                            .map(|n| n as f64 * (m[(t + n).min(t_max) as usize][d] - m[(t - n).max(0) as usize][d]))
                            .sum::<f64>()
                            / denom
                    })
                    .collect()
            })
            .collect()
    };
    let d1 = delta(&ceps);
    let d2 = delta(&d1);
    (0..frames)
        .map(|t| [ceps[t].clone(), d1[t].clone(), d2[t].clone()].concat())
        .collect()
}

/// Small nonzero biases, so ReLU and pooling see varied inputs.
pub fn jitter_biases(net: &mut Network<f64>, rng: &mut impl Rng) {
    let specs = net.specs();
    let mut t = 0;
    let mut params = net.params_mut();
    for s in &specs {
        if matches!(s, LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. }) {
            params[t + 1].iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            t += 2;
        }
    }
}

fn single_kinds() -> Vec<(&'static str, (usize, usize), Vec<LayerSpec>)> {
    use LayerSpec::*;
    vec![
        (
            "conv1d k3 s1",
            (9, 4),
            vec![Conv1d {
                filters: 5,
                kernel: 3,
                stride: 1,
            }],
        ),
        (
            "conv1d k4 s2",
            (11, 3),
            vec![Conv1d {
                filters: 4,
                kernel: 4,
                stride: 2,
            }],
        ),
        (
            "conv1d k1 s3",
            (10, 2),
            vec![Conv1d {
                filters: 3,
                kernel: 1,
                stride: 3,
            }],
        ),
        ("maxpool", (12, 3), vec![MaxPool { size: 3 }]),
        ("maxpool ragged", (11, 2), vec![MaxPool { size: 2 }]),
        ("flatten", (4, 3), vec![Flatten]),
        ("dense", (1, 7), vec![Dense { units: 5 }]),
        ("flatten+dense", (3, 4), vec![Flatten, Dense { units: 6 }]),
        ("relu", (6, 4), vec![Relu]),
        ("sigmoid", (6, 4), vec![Sigmoid]),
        ("tanh", (6, 4), vec![Tanh]),
        ("dropout", (6, 4), vec![Dropout { rate: 0.4 }]),
        ("gaussian_noise", (6, 4), vec![GaussianNoise { sigma: 0.3 }]),
    ]
}

/// Finite-difference check of every layer kind on its own and of both
/// spotter architectures with their training losses, for each seed.
pub fn gradient_suite(seeds: &[u64]) -> Vec<(String, GradReport)> {
    use kws_core::nn::{softmax_cross_entropy, summed_cross_entropy, summed_cross_entropy_grad};
    use kws_core::spotter::{classifier_specs, distill_specs, ClassifierConfig, DistillConfig};
    let mut out: Vec<(String, GradReport)> = Vec::new();
    let mut add = |name: &str, r: GradReport| match out.iter_mut().find(|(n, _)| n == name) {
        Some((_, acc)) => acc.merge(r),
        None => out.push((name.to_string(), r)),
    };
    for &seed in seeds {
        let mut r = rng(seed);
        for (name, shape, specs) in single_kinds() {
            let mut net = Network::<f64>::new(shape, &specs, &mut substream(seed, name)).unwrap();
            jitter_biases(&mut net, &mut r);
            let x = random_tensor(&mut r, shape.0, shape.1);
            let (f, c) = net.output_shape();
            let w: Vec<f64> = (0..f * c).map(|_| r.random_range(-1.0..1.0)).collect();
            add(name, check_network(&mut net, &x, &linear_loss(w), seed, 64));
        }

        let ccfg = ClassifierConfig {
            window_frames: 12,
            conv_filters: vec![4, 6],
            conv_kernel: 5,
            pool_size: 2,
            dense_widths: vec![8, 6, 5],
            dropout: 0.5,
            ..ClassifierConfig::default()
        };
        let mut net =
            Network::<f64>::new((12, 5), &classifier_specs(&ccfg, 3), &mut substream(seed, "classifier")).unwrap();
        jitter_biases(&mut net, &mut r);
        let x = random_tensor(&mut r, 12, 5);
        let class = r.random_range(0..4);
        let loss = move |o: &[f64]| softmax_cross_entropy(o, class).unwrap();
        add("classifier architecture", check_network(&mut net, &x, &loss, seed, 12));

        let dcfg = DistillConfig {
            input_frames: 24,
            conv_filters: vec![80; 10],
            conv_strides: vec![2, 1, 1, 1, 1, 1, 1, 1, 1, 1],
            pool_sizes: vec![1, 2, 1, 2, 1, 1, 1, 1, 1, 1],
            dense_widths: vec![8, 8],
            dropout: 0.5,
            gaussian_noise: Some(0.1),
            ..DistillConfig::default()
        };
        let mut net = Network::<f64>::new(
            (24, 5),
            &distill_specs(&dcfg, 3).unwrap(),
            &mut substream(seed, "distill"),
        )
        .unwrap();
        jitter_biases(&mut net, &mut r);
        let x = random_tensor(&mut r, 24, 5);
        let target: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
        let loss = move |o: &[f64]| {
            (
                summed_cross_entropy(o, &target).unwrap(),
                summed_cross_entropy_grad(o, &target).unwrap(),
            )
        };
        add("cnn-dtw architecture", check_network(&mut net, &x, &loss, seed, 6));
    }
    out
}
