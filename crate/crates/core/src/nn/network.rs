use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::layer::{Layer, LayerCache};
use super::{LayerSpec, Mode, NnError, Tensor};
use crate::rng::StageRng;
use crate::scalar::Real;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// A sequential stack of layers operating on `frames x channels` examples.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input_shape: (usize, usize),
    pub(crate) layers: Vec<Layer<T>>,
    generation: u64,
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

/// Activations kept for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    generation: u64,
}

impl<T: Real> ForwardCache<T> {
    /// Fingerprint of the piecewise-linear regime (ReLU on/off pattern and
    /// pooling winners). Two forwards with equal signatures lie on the same
    /// smooth piece.
    pub fn regime_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for c in &self.layers {
            match c {
                LayerCache::Argmax(a) => a.iter().for_each(|&i| mix(i as u64)),
                LayerCache::Output(y) => y.iter().for_each(|&v| mix((v > T::zero()) as u64)),
                _ => {}
            }
        }
        h
    }
}

/// Per-layer parameter gradients, aligned with [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        self.tensors.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|&v| v == T::zero())
    }

    pub fn max_abs(&self) -> T {
        self.tensors.iter().flatten().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

impl<T: Real> Network<T> {
    /// Builds the stack and initializes weights uniformly in
    /// `+-sqrt(6 / (fan_in + fan_out))` with zero biases.
    pub fn new(input_shape: (usize, usize), specs: &[LayerSpec], rng: &mut StageRng) -> Result<Self, NnError> {
        if input_shape.0 == 0 || input_shape.1 == 0 {
            return Err(NnError::InvalidLayer("empty input shape".into()));
        }
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let out = spec.output_shape(shape)?;
            let (nw, nb) = spec.param_counts(shape);
            let (fan_in, fan_out) = spec.fans(shape);
            let weight = if nw > 0 {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..nw).map(|_| T::lit(rng.random_range(-limit..limit))).collect()
            } else {
                Vec::new()
            };
            layers.push(Layer {
                spec: spec.clone(),
                in_shape: shape,
                out_shape: out,
                weight,
                bias: vec![T::zero(); nb],
            });
            shape = out;
        }
        Ok(Self {
            input_shape,
            layers,
            generation: fresh_generation(),
        })
    }

    pub(crate) fn from_parts(input_shape: (usize, usize), layers: Vec<Layer<T>>) -> Self {
        Self {
            input_shape,
            layers,
            generation: fresh_generation(),
        }
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.layers.last().map_or(self.input_shape, |l| l.out_shape)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in a fixed order: weight then bias of each
    /// parameterized layer.
    pub fn params(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .filter(|l| !l.weight.is_empty())
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.generation = fresh_generation();
        self.layers
            .iter_mut()
            .filter(|l| !l.weight.is_empty())
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            tensors: self.params().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn forward(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut StageRng,
    ) -> Result<(Tensor<T>, ForwardCache<T>), NnError> {
        if input.shape2() != self.input_shape || input.dims().len() != 2 {
            return Err(NnError::ShapeMismatch(format!(
                "input {:?}, network expects {:?}",
                input.dims(),
                self.input_shape
            )));
        }
        let mut x = input.data().to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(x, mode, rng);
            caches.push(c);
            x = y;
        }
        let (f, c) = self.output_shape();
        Ok((
            Tensor::matrix(f, c, x)?,
            ForwardCache {
                layers: caches,
                generation: self.generation,
            },
        ))
    }

    /// Forward pass in inference mode.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut rng = crate::rng::substream(0, "infer");
        Ok(self.forward(input, Mode::Infer, &mut rng)?.0)
    }

    /// Inference through the first `n` layers only; returns the flat
    /// activations of layer `n`.
    pub fn predict_prefix(&self, input: &Tensor<T>, n: usize) -> Result<Vec<T>, NnError> {
        if input.shape2() != self.input_shape || input.dims().len() != 2 {
            return Err(NnError::ShapeMismatch(format!(
                "input {:?}, network expects {:?}",
                input.dims(),
                self.input_shape
            )));
        }
        let mut rng = crate::rng::substream(0, "infer");
        let mut x = input.data().to_vec();
        for layer in self.layers.iter().take(n) {
            x = layer.forward(x, Mode::Infer, &mut rng).0;
        }
        Ok(x)
    }

    /// Backpropagates `loss_grad` (gradient w.r.t. the network output),
    /// adding parameter gradients into `grads`. Returns the input gradient.
    pub fn backward_into(
        &self,
        cache: &ForwardCache<T>,
        loss_grad: &[T],
        grads: &mut Gradients<T>,
        want_input_grad: bool,
    ) -> Result<Vec<T>, NnError> {
        if cache.generation != self.generation || cache.layers.len() != self.layers.len() {
            return Err(NnError::StaleCache);
        }
        let (f, c) = self.output_shape();
        if loss_grad.len() != f * c {
            return Err(NnError::ShapeMismatch(format!(
                "loss gradient has {} values, output has {}",
                loss_grad.len(),
                f * c
            )));
        }
        // map layer index -> gradient slot
        let mut slots = Vec::with_capacity(self.layers.len());
        let mut next = 0;
        for l in &self.layers {
            if l.weight.is_empty() {
                slots.push(None);
            } else {
                slots.push(Some(next));
                next += 2;
            }
        }
        let first_param = slots.iter().position(Option::is_some).unwrap_or(self.layers.len());
        let mut g = loss_grad.to_vec();
        let mut empty_w: [T; 0] = [];
        let mut empty_b: [T; 0] = [];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need_dx = want_input_grad || i > first_param;
            g = match slots[i] {
                Some(s) => {
                    let (w, b) = grads.tensors.split_at_mut(s + 1);
                    layer.backward(&cache.layers[i], g, &mut w[s], &mut b[0], need_dx)
                }
                None if need_dx => layer.backward(&cache.layers[i], g, &mut empty_w, &mut empty_b, true),
                None => return Ok(Vec::new()),
            };
            if !need_dx {
                return Ok(Vec::new());
            }
        }
        Ok(g)
    }

    /// Fresh gradients for a single example.
    pub fn backward(&self, cache: &ForwardCache<T>, loss_grad: &[T]) -> Result<(Gradients<T>, Vec<T>), NnError> {
        let mut grads = self.zero_gradients();
        let dx = self.backward_into(cache, loss_grad, &mut grads, true)?;
        Ok((grads, dx))
    }
}
