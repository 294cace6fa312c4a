//! Network parameter files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "UTHP" | version u32 | height u32 | width u32 | channels u32 | bit_width u32
//! layer_count u32 | layer_count × (kind u8, a u32, b u32, c u32)
//! layer_count × (weight_len u64, weight_len × f64, bias_len u64, bias_len × f64)
//! ```
//!
//! Layer kinds: 0 convolution (out_channels, kernel, stride), 1 max pool
//! (window), 2 fully connected (out_dim), 3 relu.

use std::fs;
use std::path::Path;

use uth_core::network::LayerParams;
use uth_core::{Dims, LayerSpec, NetworkParams};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UTHP";
pub const VERSION: u32 = 1;

pub fn encode_params(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.param_count() * 8);
    let dims = params.input_dims();
    out.extend_from_slice(MAGIC);
    for v in [VERSION, dims.height as u32, dims.width as u32, dims.channels as u32, params.bit_width() as u32] {
        out.extend(v.to_le_bytes());
    }
    out.extend((params.layers().len() as u32).to_le_bytes());
    for layer in params.layers() {
        let (kind, a, b, c) = match *layer {
            LayerSpec::Convolution { out_channels, kernel, stride } => (0u8, out_channels, kernel, stride),
            LayerSpec::MaxPool { window } => (1, window, 0, 0),
            LayerSpec::FullyConnected { out_dim } => (2, out_dim, 0, 0),
            LayerSpec::Relu => (3, 0, 0, 0),
        };
        out.push(kind);
        for v in [a, b, c] {
            out.extend((v as u32).to_le_bytes());
        }
    }
    for p in params.layer_params() {
        for block in [&p.weights, &p.bias] {
            out.extend((block.len() as u64).to_le_bytes());
            for v in block.iter() {
                out.extend(v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("params file truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_block(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        let raw = self.take(len.checked_mul(8).ok_or_else(|| Error::format("block length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<NetworkParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("not a parameter file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported params version {version}, expected {VERSION}")));
    }
    let dims = Dims::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let bit_width = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers > 4096 {
        return Err(Error::format(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let kind = r.u8()?;
        let (a, b, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        layers.push(match kind {
            0 => LayerSpec::Convolution { out_channels: a, kernel: b, stride: c },
            1 => LayerSpec::MaxPool { window: a },
            2 => LayerSpec::FullyConnected { out_dim: a },
            3 => LayerSpec::Relu,
            k => return Err(Error::format(format!("layer {i}: unknown kind {k}"))),
        });
    }
    let mut params = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let weights = r.f64_block()?;
        let bias = r.f64_block()?;
        params.push(LayerParams { weights, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!("{} trailing bytes after parameters", bytes.len() - r.pos)));
    }
    let net = NetworkParams::from_parts(layers, dims, params).map_err(|e| Error::format(e.to_string()))?;
    if net.bit_width() != bit_width {
        return Err(Error::Consistency(format!("header says {bit_width} bits, layers produce {}", net.bit_width())));
    }
    Ok(net)
}

pub fn save_params(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetworkParams> {
    decode_params(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uth_core::network::{build_network, default_layers};

    fn net() -> NetworkParams {
        build_network(&default_layers(32), Dims::MNIST, 4).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let n = net();
        let back = decode_params(&encode_params(&n)).unwrap();
        assert_eq!(back, n);
        let bits = |p: &NetworkParams| -> Vec<u64> {
            p.layer_params().iter().flat_map(|l| l.weights.iter().chain(&l.bias)).map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&back), bits(&n));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = encode_params(&net());
        bytes[4] = 2;
        assert!(matches!(decode_params(&bytes), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn truncation_is_rejected_at_every_cut() {
        let bytes = encode_params(&net());
        for cut in [0, 3, 10, 30, 80, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_params(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_params(&long).is_err());
    }
}
