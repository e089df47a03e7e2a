//! Checkpoint files.
//!
//! Layout (little-endian): `b"SBCK"`, `u32` version, `u32` spec length and
//! the spec as TOML, `u32` tensor count, then per tensor a `u32` name length,
//! the name, a `u32` rank, the dims as `u32`, and the values as `f32`. A
//! trailing `u64` FNV-1a hash covers every preceding byte.

use std::fs;
use std::path::Path;

use crate::dsp::cache::write_atomic;
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::subband::ModelSpec;

pub const MAGIC: &[u8; 4] = b"SBCK";
pub const VERSION: u32 = 1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn tensor_dims(params: &Params) -> Vec<Vec<usize>> {
    let mut dims = Vec::new();
    for c in &params.convs {
        dims.push(c.weights.shape().dims().to_vec());
        dims.push(vec![c.bias.len()]);
    }
    for d in &params.denses {
        dims.push(vec![d.out_features, d.in_features]);
        dims.push(vec![d.bias.len()]);
    }
    dims
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(params: &Params, spec: &ModelSpec) -> Result<Vec<u8>> {
    params.check(spec.graph())?;
    let toml = spec.to_toml()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, toml.len());
    out.extend_from_slice(toml.as_bytes());
    let names = Params::<f32>::slice_names(spec.graph());
    let slices = params.slices();
    put_u32(&mut out, slices.len());
    for ((name, dims), data) in names.iter().zip(tensor_dims(params)).zip(slices) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, dims.len());
        dims.iter().for_each(|&d| put_u32(&mut out, d));
        data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelSpec, Params)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let spec = ModelSpec::from_toml(r.str()?)?;
    let mut params = Params::zeros(spec.graph())?;
    let names = Params::<f32>::slice_names(spec.graph());
    let dims = tensor_dims(&params);
    let count = r.u32()?;
    if count != names.len() {
        return Err(Error::Format(format!("checkpoint holds {count} tensors, spec needs {}", names.len())));
    }
    for ((name, want), slot) in names.iter().zip(&dims).zip(params.slices_mut()) {
        let got_name = r.str()?;
        if got_name != name {
            return Err(Error::Format(format!("expected tensor {name}, found {got_name}")));
        }
        let rank = r.u32()?;
        let got: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_>>()?;
        if &got != want {
            return Err(Error::Format(format!("tensor {name} has dims {got:?}, spec needs {want:?}")));
        }
        let raw = r.take(slot.len() * 4)?;
        for (v, c) in slot.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    Ok((spec, params))
}

pub fn save_checkpoint(params: &Params, spec: &ModelSpec, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params, spec)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, Params)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes)
}

/// Loads parameters only if the stored spec equals `expected`.
pub fn load_checkpoint_into(path: &Path, expected: &ModelSpec) -> Result<Params> {
    let (spec, params) = load_checkpoint(path)?;
    if &spec != expected {
        return Err(Error::SpecMismatch(format!(
            "checkpoint is {} K={} ({}), expected {} K={} ({})",
            spec.arch, spec.k, spec.concat, expected.arch, expected.k, expected.concat
        )));
    }
    Ok(params)
}
