use std::collections::BTreeMap;

use super::layer::Layer;
use super::{LayerSpec, Network, NnError};
use crate::codec::{put_f64, put_str, put_u32, put_u64, put_u8, put_values, Reader};
use crate::scalar::Real;

pub const NETWORK_MAGIC: &[u8; 6] = b"CNN1\0\0";

/// Everything stored next to the weights.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// SHA-256 of the training configuration.
    pub config_digest: [u8; 32],
    /// Keyword ids in output order.
    pub labels: Vec<String>,
    pub extra: BTreeMap<String, String>,
}

fn put_spec(out: &mut Vec<u8>, spec: &LayerSpec) {
    put_u8(out, spec.code());
    match *spec {
        LayerSpec::Conv1d {
            filters,
            kernel,
            stride,
        } => {
            put_u32(out, filters as u32);
            put_u32(out, kernel as u32);
            put_u32(out, stride as u32);
        }
        LayerSpec::MaxPool { size } => put_u32(out, size as u32),
        LayerSpec::Dense { units } => put_u32(out, units as u32),
        LayerSpec::Dropout { rate } => put_f64(out, rate),
        LayerSpec::GaussianNoise { sigma } => put_f64(out, sigma),
        LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Tanh | LayerSpec::Flatten => {}
    }
}

fn read_spec(r: &mut Reader) -> Result<LayerSpec, String> {
    Ok(match r.u8()? {
        0 => LayerSpec::Conv1d {
            filters: r.u32()? as usize,
            kernel: r.u32()? as usize,
            stride: r.u32()? as usize,
        },
        1 => LayerSpec::MaxPool {
            size: r.u32()? as usize,
        },
        2 => LayerSpec::Dense {
            units: r.u32()? as usize,
        },
        3 => LayerSpec::Relu,
        4 => LayerSpec::Sigmoid,
        5 => LayerSpec::Tanh,
        6 => LayerSpec::Dropout { rate: r.f64()? },
        7 => LayerSpec::GaussianNoise { sigma: r.f64()? },
        8 => LayerSpec::Flatten,
        c => return Err(format!("unknown layer code {c}")),
    })
}

/// Serializes a network with its metadata.
pub fn encode_network<T: Real>(net: &Network<T>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(NETWORK_MAGIC);
    put_u8(&mut out, T::WIDTH);
    put_u64(&mut out, meta.seed);
    out.extend_from_slice(&meta.config_digest);
    put_u32(&mut out, meta.labels.len() as u32);
    for l in &meta.labels {
        put_str(&mut out, l);
    }
    put_u32(&mut out, meta.extra.len() as u32);
    for (k, v) in &meta.extra {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    let (frames, channels) = net.input_shape();
    put_u32(&mut out, frames as u32);
    put_u32(&mut out, channels as u32);
    put_u32(&mut out, net.layers.len() as u32);
    for layer in &net.layers {
        put_spec(&mut out, &layer.spec);
        put_values(&mut out, &layer.weight);
        put_values(&mut out, &layer.bias);
    }
    out
}

/// Inverse of [`encode_network`]. Parameters stored at a different width are
/// converted to `T`.
pub fn decode_network<T: Real>(bytes: &[u8]) -> Result<(Network<T>, CheckpointMeta), NnError> {
    if bytes.len() < NETWORK_MAGIC.len() || &bytes[..NETWORK_MAGIC.len()] != NETWORK_MAGIC {
        return Err(NnError::BadMagic);
    }
    decode_body(&bytes[NETWORK_MAGIC.len()..]).map_err(NnError::Malformed)
}

fn decode_body<T: Real>(bytes: &[u8]) -> Result<(Network<T>, CheckpointMeta), String> {
    let mut r = Reader::new(bytes);
    let width = r.u8()?;
    let seed = r.u64()?;
    let config_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let labels = (0..r.u32()?).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
    let mut extra = BTreeMap::new();
    for _ in 0..r.u32()? {
        let k = r.str()?;
        extra.insert(k, r.str()?);
    }
    let input_shape = (r.u32()? as usize, r.u32()? as usize);
    let mut shape = input_shape;
    let mut layers = Vec::new();
    for _ in 0..r.u32()? {
        let spec = read_spec(&mut r)?;
        let out_shape = spec.output_shape(shape).map_err(|e| e.to_string())?;
        let weight = r.values::<T>(width)?;
        let bias = r.values::<T>(width)?;
        if (weight.len(), bias.len()) != spec.param_counts(shape) {
            return Err(format!("{} layer has wrong parameter count", spec.name()));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        layers.push(Layer {
            spec,
            in_shape: shape,
            out_shape,
            weight,
            bias,
        });
        shape = out_shape;
    }
    r.finish()?;
    let meta = CheckpointMeta {
        seed,
        config_digest,
        labels,
        extra,
    };
    Ok((Network::from_parts(input_shape, layers), meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn sample() -> Network<f32> {
        Network::new(
            (12, 3),
            &[
                LayerSpec::GaussianNoise { sigma: 0.1 },
                LayerSpec::Conv1d {
                    filters: 4,
                    kernel: 3,
                    stride: 2,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Tanh,
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: 2 },
                LayerSpec::Sigmoid,
            ],
            &mut substream(1, "ckpt"),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = sample();
        let mut meta = CheckpointMeta {
            seed: 42,
            labels: vec!["a".into(), "b".into()],
            ..Default::default()
        };
        meta.config_digest[3] = 9;
        meta.extra.insert("padding".into(), "zero".into());
        let bytes = encode_network(&net, &meta);
        let (back, meta2) = decode_network::<f32>(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(meta2, meta);
        assert_eq!(encode_network(&back, &meta2), bytes);
    }

    #[test]
    fn widening_preserves_values() {
        let net = sample();
        let bytes = encode_network(&net, &CheckpointMeta::default());
        let (wide, _) = decode_network::<f64>(&bytes).unwrap();
        for (a, b) in net.params().iter().zip(wide.params()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f64, *y);
            }
        }
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode_network(&sample(), &CheckpointMeta::default());
        assert!(matches!(decode_network::<f32>(b"nope"), Err(NnError::BadMagic)));
        assert!(matches!(
            decode_network::<f32>(&bytes[..bytes.len() - 1]),
            Err(NnError::Malformed(_))
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_network::<f32>(&longer), Err(NnError::Malformed(_))));
    }
}
