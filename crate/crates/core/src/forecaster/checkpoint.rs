//! Model checkpoints.
//!
//! ```text
//! magic "NCK1"
//! u32 header length, header bytes (model spec as key = value text)
//! u32 parameter count
//! per parameter: u32 name length, name, u32 rank, rank × u32 dims, values as f32
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::KeyValues;

use super::model::Forecaster;
use super::spec::ForecasterSpec;

pub const MAGIC: &[u8; 4] = b"NCK1";

pub fn encode(model: &Forecaster<f32>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let header = model.spec().to_kv().to_text();
    put_u32(&mut out, header.len());
    out.extend_from_slice(header.as_bytes());
    let params = model.params().params();
    put_u32(&mut out, params.len());
    for p in params {
        put_u32(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.shape.len());
        for &d in &p.shape {
            put_u32(&mut out, d);
        }
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(field, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Forecaster<f32>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format("magic", "expected NCK1"));
    }
    let hlen = c.u32("header")?;
    let header = std::str::from_utf8(c.take(hlen, "header")?)
        .map_err(|e| Error::format("header", e.to_string()))?;
    let spec = ForecasterSpec::from_kv(&KeyValues::parse(header)?)?;
    let mut model = Forecaster::<f32>::build(&spec, 0)?;
    let count = c.u32("parameter count")?;
    if count != model.params().len() {
        return Err(Error::format(
            "parameter count",
            format!("{count} blobs, architecture has {}", model.params().len()),
        ));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let nlen = c.u32("parameter name")?;
        let name = std::str::from_utf8(c.take(nlen, "parameter name")?)
            .map_err(|e| Error::format("parameter name", e.to_string()))?;
        let id = model
            .params()
            .id(name)
            .ok_or_else(|| Error::format("parameter name", format!("unknown parameter {name:?}")))?;
        if std::mem::replace(&mut seen[id.0], true) {
            return Err(Error::format("parameter name", format!("duplicate parameter {name:?}")));
        }
        let rank = c.u32("parameter shape")?;
        let shape = (0..rank).map(|_| c.u32("parameter shape")).collect::<Result<Vec<_>>>()?;
        let expected = &model.params().params()[id.0].shape;
        if &shape != expected {
            return Err(Error::format(
                "parameter shape",
                format!("{name}: file has {shape:?}, architecture has {expected:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        let raw = c.take(4 * n, "parameter values")?;
        for (dst, chunk) in model.params_mut().value_mut(id).iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::format("parameter values", format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &Forecaster<f32>) -> Result<()> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Forecaster<f32>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GateType;

    fn model() -> Forecaster<f32> {
        let spec = ForecasterSpec::shallow(2, 8, 8, 2, 3)
            .with_channels(vec![3, 4, 5])
            .with_gate(GateType::Residual);
        Forecaster::build(&spec, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode(&m);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.spec(), m.spec());
        assert_eq!(back.params().flat_values(), m.params().flat_values());
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode(&model());
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { field: "magic", .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
