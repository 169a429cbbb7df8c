use rand::Rng;
use rand_distr::StandardNormal;

use super::{Mode, NnError};
use crate::rng::StageRng;
use crate::scalar::{axpy, dot, Real};

/// Architecture description of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Convolution over time with "same" zero padding; input channels are
    /// the feature dimensions.
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    /// Non-overlapping max pooling over time; trailing frames that do not
    /// fill a pool are dropped.
    MaxPool {
        size: usize,
    },
    /// Fully connected layer on a `1 x n` input.
    Dense {
        units: usize,
    },
    Relu,
    Sigmoid,
    Tanh,
    /// Inverted dropout, active in train mode only.
    Dropout {
        rate: f64,
    },
    /// Additive Gaussian noise, active in train mode only.
    GaussianNoise {
        sigma: f64,
    },
    Flatten,
}

impl LayerSpec {
    pub fn code(&self) -> u8 {
        match self {
            LayerSpec::Conv1d { .. } => 0,
            LayerSpec::MaxPool { .. } => 1,
            LayerSpec::Dense { .. } => 2,
            LayerSpec::Relu => 3,
            LayerSpec::Sigmoid => 4,
            LayerSpec::Tanh => 5,
            LayerSpec::Dropout { .. } => 6,
            LayerSpec::GaussianNoise { .. } => 7,
            LayerSpec::Flatten => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::GaussianNoise { .. } => "gaussian_noise",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output shape for an input of `(frames, channels)`.
    pub fn output_shape(&self, (frames, channels): (usize, usize)) -> Result<(usize, usize), NnError> {
        let bad = |m: String| Err(NnError::InvalidLayer(m));
        match *self {
            LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
            } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad("conv1d parameters must be positive".into());
                }
                Ok(((frames - 1) / stride + 1, filters))
            }
            LayerSpec::MaxPool { size } => {
                if size == 0 || size > frames {
                    return bad(format!("pool size {size} for {frames} frames"));
                }
                Ok((frames / size, channels))
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return bad("dense units must be positive".into());
                }
                if frames != 1 {
                    return bad(format!("dense layer needs a flat input, got {frames} frames"));
                }
                Ok((1, units))
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => bad(format!("dropout rate {rate}")),
            LayerSpec::GaussianNoise { sigma } if sigma.is_nan() || sigma < 0.0 => bad(format!("noise sigma {sigma}")),
            LayerSpec::Flatten => Ok((1, frames * channels)),
            _ => Ok((frames, channels)),
        }
    }

    /// `(weight count, bias count)`.
    pub fn param_counts(&self, (_, channels): (usize, usize)) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1d { filters, kernel, .. } => (kernel * channels * filters, filters),
            LayerSpec::Dense { units } => (channels * units, units),
            _ => (0, 0),
        }
    }

    /// Glorot fan-in/fan-out.
    pub(crate) fn fans(&self, (_, channels): (usize, usize)) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1d { filters, kernel, .. } => (kernel * channels, kernel * filters),
            LayerSpec::Dense { units } => (channels, units),
            _ => (0, 0),
        }
    }
}

/// What a layer keeps from its forward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    Input(Vec<T>),
    Output(Vec<T>),
    Argmax(Vec<usize>),
    Mask(Vec<T>),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer<T> {
    pub spec: LayerSpec,
    pub in_shape: (usize, usize),
    pub out_shape: (usize, usize),
    /// Conv: `[kernel][in_channels][filters]`; dense: `[inputs][units]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn forward(&self, x: Vec<T>, mode: Mode, rng: &mut StageRng) -> (Vec<T>, LayerCache<T>) {
        let (frames, channels) = self.in_shape;
        let (out_frames, out_channels) = self.out_shape;
        match self.spec {
            LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
            } => {
                let pad = (kernel - 1) / 2;
                let mut out = Vec::with_capacity(out_frames * filters);
                for t in 0..out_frames {
                    out.extend_from_slice(&self.bias);
                    let orow = &mut out[t * filters..(t + 1) * filters];
                    for k in 0..kernel {
                        let Some(src) = (t * stride + k).checked_sub(pad).filter(|&s| s < frames) else {
                            continue;
                        };
                        let xrow = &x[src * channels..(src + 1) * channels];
                        let wk = &self.weight[k * channels * filters..(k + 1) * channels * filters];
                        for (c, &xv) in xrow.iter().enumerate() {
                            if xv != T::zero() {
                                axpy(xv, &wk[c * filters..(c + 1) * filters], orow);
                            }
                        }
                    }
                }
                (out, LayerCache::Input(x))
            }
            LayerSpec::Dense { units } => {
                let mut out = self.bias.clone();
                for (i, &xv) in x.iter().enumerate() {
                    if xv != T::zero() {
                        axpy(xv, &self.weight[i * units..(i + 1) * units], &mut out);
                    }
                }
                (out, LayerCache::Input(x))
            }
            LayerSpec::MaxPool { size } => {
                let mut out = Vec::with_capacity(out_frames * channels);
                let mut arg = Vec::with_capacity(out_frames * channels);
                for t in 0..out_frames {
                    for c in 0..channels {
                        let mut best = t * size;
                        for s in t * size + 1..(t + 1) * size {
                            if x[s * channels + c] > x[best * channels + c] {
                                best = s;
                            }
                        }
                        out.push(x[best * channels + c]);
                        arg.push(best * channels + c);
                    }
                }
                (out, LayerCache::Argmax(arg))
            }
            LayerSpec::Relu => {
                let out: Vec<T> = x.into_iter().map(|v| v.max(T::zero())).collect();
                (out.clone(), LayerCache::Output(out))
            }
            LayerSpec::Sigmoid => {
                let out: Vec<T> = x.into_iter().map(|v| T::one() / (T::one() + (-v).exp())).collect();
                (out.clone(), LayerCache::Output(out))
            }
            LayerSpec::Tanh => {
                let out: Vec<T> = x.into_iter().map(T::tanh).collect();
                (out.clone(), LayerCache::Output(out))
            }
            LayerSpec::Dropout { rate } => {
                if mode == Mode::Infer || rate == 0.0 {
                    return (x, LayerCache::None);
                }
                let keep = T::lit(1.0 / (1.0 - rate));
                let mask: Vec<T> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                    .collect();
                let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                (out, LayerCache::Mask(mask))
            }
            LayerSpec::GaussianNoise { sigma } => {
                if mode == Mode::Infer || sigma == 0.0 {
                    return (x, LayerCache::None);
                }
                let s = T::lit(sigma);
                let out = x
                    .into_iter()
                    .map(|v| v + s * T::lit(rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                (out, LayerCache::None)
            }
            LayerSpec::Flatten => {
                debug_assert_eq!(x.len(), out_channels);
                (x, LayerCache::None)
            }
        }
    }

    /// Accumulates parameter gradients into `gw`/`gb` and returns the input
    /// gradient (empty when `want_input_grad` is false).
    pub fn backward(
        &self,
        cache: &LayerCache<T>,
        g: Vec<T>,
        gw: &mut [T],
        gb: &mut [T],
        want_input_grad: bool,
    ) -> Vec<T> {
        let (frames, channels) = self.in_shape;
        let (out_frames, _) = self.out_shape;
        match (&self.spec, cache) {
            (
                &LayerSpec::Conv1d {
                    filters,
                    kernel,
                    stride,
                },
                LayerCache::Input(x),
            ) => {
                let pad = (kernel - 1) / 2;
                let mut dx = if want_input_grad {
                    vec![T::zero(); frames * channels]
                } else {
                    Vec::new()
                };
                for t in 0..out_frames {
                    let grow = &g[t * filters..(t + 1) * filters];
                    for (b, &gv) in gb.iter_mut().zip(grow) {
                        *b += gv;
                    }
                    for k in 0..kernel {
                        let Some(src) = (t * stride + k).checked_sub(pad).filter(|&s| s < frames) else {
                            continue;
                        };
                        let xrow = &x[src * channels..(src + 1) * channels];
                        let base = k * channels * filters;
                        for (c, &xv) in xrow.iter().enumerate() {
                            let off = base + c * filters;
                            if xv != T::zero() {
                                axpy(xv, grow, &mut gw[off..off + filters]);
                            }
                            if want_input_grad {
                                dx[src * channels + c] += dot(&self.weight[off..off + filters], grow);
                            }
                        }
                    }
                }
                dx
            }
            (&LayerSpec::Dense { units }, LayerCache::Input(x)) => {
                for (b, &gv) in gb.iter_mut().zip(&g) {
                    *b += gv;
                }
                let mut dx = if want_input_grad {
                    vec![T::zero(); x.len()]
                } else {
                    Vec::new()
                };
                for (i, &xv) in x.iter().enumerate() {
                    let row = i * units..(i + 1) * units;
                    if xv != T::zero() {
                        axpy(xv, &g, &mut gw[row.clone()]);
                    }
                    if want_input_grad {
                        dx[i] = dot(&self.weight[row], &g);
                    }
                }
                dx
            }
            (LayerSpec::MaxPool { .. }, LayerCache::Argmax(arg)) => {
                let mut dx = vec![T::zero(); frames * channels];
                for (&a, &gv) in arg.iter().zip(&g) {
                    dx[a] += gv;
                }
                dx
            }
            (LayerSpec::Relu, LayerCache::Output(y)) => g
                .into_iter()
                .zip(y)
                .map(|(gv, &yv)| if yv > T::zero() { gv } else { T::zero() })
                .collect(),
            (LayerSpec::Sigmoid, LayerCache::Output(y)) => g
                .into_iter()
                .zip(y)
                .map(|(gv, &yv)| gv * yv * (T::one() - yv))
                .collect(),
            (LayerSpec::Tanh, LayerCache::Output(y)) => g
                .into_iter()
                .zip(y)
                .map(|(gv, &yv)| gv * (T::one() - yv * yv))
                .collect(),
            (LayerSpec::Dropout { .. }, LayerCache::Mask(mask)) => {
                g.into_iter().zip(mask).map(|(gv, &m)| gv * m).collect()
            }
            (LayerSpec::Dropout { .. } | LayerSpec::GaussianNoise { .. } | LayerSpec::Flatten, LayerCache::None) => g,
            (spec, _) => unreachable!("cache does not match layer {}", spec.name()),
        }
    }
}
