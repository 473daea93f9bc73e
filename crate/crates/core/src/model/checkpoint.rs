//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "FCNETCKP"
//! version      u32
//! config       8 x u64   d_s d_a d_h d_q layers n m ffn_mult
//! checksum     u64       FNV-1a of every preceding byte
//! tensors      u32       count
//! per tensor:  u32 name length, UTF-8 name, u64 element count, f64 values
//! ```
//!
//! Values are always stored as `f64` regardless of the in-memory scalar.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Fcnet, FcnetConfig, FcnetParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FCNETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 8 * 8;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn config_fields(cfg: &FcnetConfig) -> [usize; 8] {
    [cfg.d_s, cfg.d_a, cfg.d_h, cfg.d_q, cfg.layers, cfg.n, cfg.m, cfg.ffn_mult]
}

pub fn encode<S: Scalar>(model: &Fcnet<S>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 + model.num_params() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in config_fields(&model.config) {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    let tensors = model.params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, data) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Truncated(format!("{what} at byte {}", self.pos))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<Fcnet<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Parse("not an fcnet checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut f = [0usize; 8];
    for v in f.iter_mut() {
        *v = usize::try_from(r.u64("config")?).map_err(|_| Error::Parse("config field overflows".into()))?;
    }
    let sum = r.u64("header checksum")?;
    if sum != fnv1a(&bytes[..HEADER_LEN]) {
        return Err(Error::Parse("header checksum mismatch".into()));
    }
    let config = FcnetConfig {
        d_s: f[0],
        d_a: f[1],
        d_h: f[2],
        d_q: f[3],
        layers: f[4],
        n: f[5],
        m: f[6],
        ffn_mult: f[7],
    };
    config.validate().map_err(|e| Error::Parse(format!("stored config invalid: {e}")))?;

    let mut params = FcnetParams::<S>::zeros(&config);
    let names: Vec<(String, usize)> = params.tensors().into_iter().map(|(n, t)| (n, t.len())).collect();
    let count = r.u32("tensor count")? as usize;
    if count != names.len() {
        return Err(Error::Parse(format!("expected {} tensors, found {count}", names.len())));
    }
    for ((want_name, want_len), dst) in names.iter().zip(params.tensors_mut()) {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Parse("tensor name is not UTF-8".into()))?;
        if name != want_name {
            return Err(Error::Parse(format!("expected tensor {want_name}, found {name}")));
        }
        let len = r.u64("tensor length")? as usize;
        if len != *want_len {
            return Err(Error::Parse(format!("tensor {name} has {len} values, expected {want_len}")));
        }
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Parse("tensor too large".into()))?, name)?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
            *d = S::of(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Fcnet::from_parts(config, params)
}

pub fn save_checkpoint<S: Scalar>(model: &Fcnet<S>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

/// Reads a whole checkpoint; nothing is returned unless every byte parses.
pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<Fcnet<S>> {
    decode(&fs::read(path)?)
}
