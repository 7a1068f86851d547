//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "MFDN"                      magic, 4 bytes
//! u32                         version (1)
//! u32 + bytes                 config text (UTF-8, `config::RunConfig::to_text`)
//! per layer:
//!   f64 × N                   amplitude, row-major
//!   f64 × N                   phase, row-major
//! per layer, if bias enabled:
//!   f64, f64                  bias re, im
//! f64 × F                     channel weights
//! u32                         CRC-32 of every preceding byte
//! ```
//!
//! The network shape is recovered from the embedded config, so the payload
//! length is known before any float is read.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::config::RunConfig;
use crate::layers::ModulationParams;
use crate::network::MfdNet;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFDN";
pub const VERSION: u32 = 1;

/// Serializes `net` with the run config that produced it. The config's
/// network section must describe `net`.
pub fn encode(config: &RunConfig, net: &MfdNet) -> Result<Vec<u8>> {
    if config.net_config()? != *net.config() {
        return Err(Error::InvalidArgument(
            "run config does not describe this network".into(),
        ));
    }
    let text = config.to_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    for layer in net.layers() {
        layer.amplitude.iter().copied().for_each(&mut put);
        layer.phase.iter().copied().for_each(&mut put);
    }
    for layer in net.layers() {
        if let Some(b) = layer.bias {
            put(b.re);
            put(b.im);
        }
    }
    net.channel_weights().iter().copied().for_each(&mut put);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Error::Length {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<(RunConfig, MfdNet)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    if bytes.len() < 16 {
        return Err(Error::Length {
            expected: 16,
            found: bytes.len(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader {
        bytes: body,
        pos: 4,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let text_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(text_len)?)
        .map_err(|_| Error::Format("config text is not UTF-8".into()))?;
    let config = RunConfig::from_text(text)?;
    let net_config = config.net_config()?;

    let n = net_config.geometry.len();
    let layers = net_config.num_layers;
    let f = net_config.num_channels();
    let bias = if net_config.bias_enabled {
        2 * layers
    } else {
        0
    };
    let expected = r.pos + 8 * (2 * n * layers + bias + f);
    if expected != body.len() {
        return Err(Error::Length {
            expected: expected + 4,
            found: bytes.len(),
        });
    }
    let grids = (0..layers)
        .map(|_| Ok((r.f64s(n)?, r.f64s(n)?)))
        .collect::<Result<Vec<_>>>()?;
    let biases = if net_config.bias_enabled {
        (0..layers)
            .map(|_| {
                let v = r.f64s(2)?;
                Ok(Some(Complex64::new(v[0], v[1])))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![None; layers]
    };
    let weights = r.f64s(f)?;
    let params = grids
        .into_iter()
        .zip(biases)
        .map(|((amplitude, phase), bias)| {
            ModulationParams::from_parts(
                net_config.geometry,
                amplitude,
                phase,
                bias,
                net_config.amplitude_trainable,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let net = MfdNet::from_parts(net_config, params, weights)?;
    Ok((config, net))
}

pub fn save(path: impl AsRef<Path>, config: &RunConfig, net: &MfdNet) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(config, net)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(RunConfig, MfdNet)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
