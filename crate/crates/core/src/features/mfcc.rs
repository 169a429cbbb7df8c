use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{compute_deltas, FeatureError, FeatureKind, FeatureMatrix};
use crate::corpus::Waveform;
use crate::scalar::Real;

/// Floor applied to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub num_mel_filters: usize,
    pub num_cepstra: usize,
    pub low_freq: f64,
    pub high_freq: f64,
    pub preemphasis: f64,
    pub delta_window: usize,
    /// Per-utterance cepstral mean subtraction on the static coefficients.
    pub mean_normalize: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            num_mel_filters: 26,
            num_cepstra: 13,
            low_freq: 20.0,
            high_freq: 7800.0,
            preemphasis: 0.97,
            delta_window: 2,
            mean_normalize: false,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if !(0.0 < self.low_freq && self.low_freq < self.high_freq) || self.high_freq > self.sample_rate as f64 / 2.0 {
            return bad("need 0 < low_freq < high_freq <= sample_rate/2");
        }
        if self.num_cepstra == 0 || self.num_cepstra > self.num_mel_filters {
            return bad("need 1 <= num_cepstra <= num_mel_filters");
        }
        if !(self.frame_shift_ms > 0.0 && self.frame_shift_ms <= self.frame_length_ms) {
            return bad("need 0 < frame_shift <= frame_length");
        }
        if self.delta_window == 0 {
            return bad("delta_window must be at least 1");
        }
        if self.frame_length_samples() < 2 {
            return bad("frame shorter than two samples");
        }
        Ok(())
    }

    pub fn frame_length_samples(&self) -> usize {
        (self.sample_rate as f64 * self.frame_length_ms / 1000.0).round() as usize
    }

    pub fn frame_shift_samples(&self) -> usize {
        ((self.sample_rate as f64 * self.frame_shift_ms / 1000.0).round() as usize).max(1)
    }

    pub fn fft_size(&self) -> usize {
        self.frame_length_samples().next_power_of_two()
    }

    /// Number of frames produced for a signal of `samples` samples.
    pub fn num_frames(&self, samples: usize) -> usize {
        let len = self.frame_length_samples();
        if samples < len {
            0
        } else {
            1 + (samples - len) / self.frame_shift_samples()
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filter weights, `num_filters x (fft_size/2 + 1)`.
fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let n_fft = cfg.fft_size();
    let bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.low_freq), hz_to_mel(cfg.high_freq));
    let m = cfg.num_mel_filters;
    let edges: Vec<f64> = (0..m + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (m + 1) as f64))
        .collect();
    (0..m)
        .map(|j| {
            let (left, center, right) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * cfg.sample_rate as f64 / n_fft as f64;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `num_cepstra x num_filters`.
fn dct_basis(num_cepstra: usize, num_filters: usize) -> Vec<Vec<f64>> {
    let m = num_filters as f64;
    (0..num_cepstra)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            (0..num_filters)
                .map(|n| scale * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / m).cos())
                .collect()
        })
        .collect()
}

/// Floored log mel energies, one row of `num_mel_filters` per frame.
pub fn log_mel_energies<T: Real>(w: &Waveform, cfg: &MfccConfig) -> Result<Vec<Vec<T>>, FeatureError> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(FeatureError::RateMismatch {
            waveform: w.sample_rate,
            config: cfg.sample_rate,
        });
    }
    let len = cfg.frame_length_samples();
    let shift = cfg.frame_shift_samples();
    let frames = cfg.num_frames(w.samples.len());
    if frames == 0 {
        return Err(FeatureError::TooShort {
            samples: w.samples.len(),
            needed: len,
        });
    }
    let n_fft = cfg.fft_size();
    let alpha = T::lit(cfg.preemphasis);
    let x: Vec<T> = w.samples.iter().map(|&s| T::lit(s as f64)).collect();
    let emphasized: Vec<T> = (0..x.len())
        .map(|i| if i == 0 { x[0] } else { x[i] - alpha * x[i - 1] })
        .collect();
    let window: Vec<T> = (0..len)
        .map(|n| T::lit(0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()))
        .collect();
    let bank: Vec<Vec<T>> = mel_filterbank(cfg)
        .into_iter()
        .map(|row| row.into_iter().map(T::lit).collect())
        .collect();
    let floor = T::lit(LOG_FLOOR);

    let fft = FftPlanner::<T>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
    let mut power = vec![T::zero(); n_fft / 2 + 1];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let seg = &emphasized[f * shift..f * shift + len];
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < len {
                Complex::new(seg[i] * window[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        out.push(
            bank.iter()
                .map(|filt| {
                    let e: T = filt.iter().zip(&power).map(|(&wgt, &p)| wgt * p).sum();
                    e.max(floor).ln()
                })
                .collect(),
        );
    }
    Ok(out)
}

/// 39-dimensional MFCCs: cepstra (c0 included), deltas and delta-deltas.
///
/// Pipeline: preemphasis, Hamming window, power spectrum, mel filterbank,
/// floored log, orthonormal DCT-II, delta stacking.
pub fn mfcc<T: Real>(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix<T>, FeatureError> {
    let logmel = log_mel_energies::<T>(w, cfg)?;
    let basis: Vec<Vec<T>> = dct_basis(cfg.num_cepstra, cfg.num_mel_filters)
        .into_iter()
        .map(|row| row.into_iter().map(T::lit).collect())
        .collect();
    let frames = logmel.len();
    let nc = cfg.num_cepstra;
    let mut ceps: Vec<T> = Vec::with_capacity(frames * nc);
    for row in &logmel {
        ceps.extend(basis.iter().map(|b| crate::scalar::dot(b, row)));
    }
    if cfg.mean_normalize {
        let n = T::lit(frames as f64);
        for k in 0..nc {
            let mean = (0..frames).map(|t| ceps[t * nc + k]).sum::<T>() / n;
            for t in 0..frames {
                ceps[t * nc + k] -= mean;
            }
        }
    }
    let d1 = compute_deltas(&ceps, frames, nc, cfg.delta_window);
    let d2 = compute_deltas(&d1, frames, nc, cfg.delta_window);
    let mut data = Vec::with_capacity(frames * nc * 3);
    for t in 0..frames {
        data.extend_from_slice(&ceps[t * nc..(t + 1) * nc]);
        data.extend_from_slice(&d1[t * nc..(t + 1) * nc]);
        data.extend_from_slice(&d2[t * nc..(t + 1) * nc]);
    }
    FeatureMatrix::new(data, frames, nc * 3, cfg.frame_shift_ms as f32, FeatureKind::Mfcc39)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f32>) -> Waveform {
        Waveform {
            samples,
            sample_rate: 16_000,
        }
    }

    #[test]
    fn zero_signal_hits_floor() {
        let cfg = MfccConfig::default();
        let w = wave(vec![0.0; 16_000]);
        let logmel = log_mel_energies::<f64>(&w, &cfg).unwrap();
        assert_eq!(logmel.len(), 98);
        assert!(logmel.iter().flatten().all(|&v| v == LOG_FLOOR.ln()));
        let m = mfcc::<f64>(&w, &cfg).unwrap();
        assert_eq!(m.dim(), 39);
        for row in m.rows() {
            assert!(row[13..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_short_and_mismatched_input() {
        let cfg = MfccConfig::default();
        assert!(matches!(
            mfcc::<f32>(&wave(vec![0.1; 399]), &cfg),
            Err(FeatureError::TooShort { .. })
        ));
        let w = Waveform {
            samples: vec![0.1; 800],
            sample_rate: 8000,
        };
        assert!(matches!(mfcc::<f32>(&w, &cfg), Err(FeatureError::RateMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let base = MfccConfig::default();
        assert!(MfccConfig {
            high_freq: 9000.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(MfccConfig {
            num_cepstra: 30,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(MfccConfig {
            frame_shift_ms: 30.0,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn filterbank_rows_are_triangles() {
        let cfg = MfccConfig::default();
        let bank = mel_filterbank(&cfg);
        assert_eq!(bank.len(), 26);
        for row in &bank {
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(row.iter().any(|&w| w > 0.0));
        }
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let b = dct_basis(26, 26);
        for i in 0..26 {
            for j in 0..26 {
                let d: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
    }
}
