//! `GSQ1` binary sequence format.
//!
//! Layout: magic `GSQ1`, five little-endian `u32` (T, H, W, C, step minutes),
//! then T·H·W·C little-endian `f32` in T, H, W, C order. Variable names are
//! not stored; readers get `ch0..chN` unless told otherwise.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{default_variable_names, Dims, GridSequence};

pub const MAGIC: &[u8; 4] = b"GSQ1";
const HEADER_LEN: usize = 4 + 5 * 4;
/// Upper bound on element count accepted from a header (4 GiB of payload).
const MAX_ELEMENTS: u64 = 1 << 30;

pub fn encode(s: &GridSequence) -> Vec<u8> {
    let d = s.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * d.len());
    out.extend_from_slice(MAGIC);
    for v in [d.t, d.h, d.w, d.c] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&s.step_minutes().to_le_bytes());
    for v in s.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<GridSequence> {
    if bytes.len() < 4 {
        return Err(Error::format("magic", "file shorter than magic"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(
            "magic",
            format!("expected GSQ1, found {:?}", String::from_utf8_lossy(&bytes[..4])),
        ));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("header", "truncated header"));
    }
    let word = |i: usize| {
        let o = 4 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap())
    };
    let names = ["T", "H", "W", "C"];
    let dims_raw = [word(0), word(1), word(2), word(3)];
    let step = word(4);
    for (name, v) in names.iter().zip(dims_raw) {
        if v == 0 {
            return Err(Error::format("dims", format!("{name} must be positive")));
        }
    }
    if step == 0 {
        return Err(Error::format("step_minutes", "must be positive"));
    }
    let total = dims_raw
        .iter()
        .try_fold(1u64, |acc, &v| acc.checked_mul(v as u64))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| Error::format("dims", format!("dimension product overflows: {dims_raw:?}")))?;
    let total = total as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < 4 * total {
        return Err(Error::format(
            "payload",
            format!(
                "truncated: expected {total} floats, found {} bytes ({} floats)",
                payload.len(),
                payload.len() / 4
            ),
        ));
    }
    if payload.len() > 4 * total {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes", payload.len() - 4 * total),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let dims = Dims::new(
        dims_raw[0] as usize,
        dims_raw[1] as usize,
        dims_raw[2] as usize,
        dims_raw[3] as usize,
    );
    GridSequence::new(dims, data, default_variable_names(dims.c), step)
        .map_err(|e| Error::format("payload", e.to_string()))
}

pub fn write_gridseq(path: impl AsRef<Path>, s: &GridSequence) -> Result<()> {
    fs::write(path, encode(s))?;
    Ok(())
}

pub fn read_gridseq(path: impl AsRef<Path>) -> Result<GridSequence> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(t: u32, h: u32, w: u32, c: u32) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        for v in [t, h, w, c, 15] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn round_trip_is_exact() {
        let dims = Dims::new(2, 3, 4, 2);
        let data: Vec<f32> = (0..dims.len()).map(|i| (i as f32 * 0.37).fract()).collect();
        let s = GridSequence::new(dims, data, default_variable_names(2), 10).unwrap();
        let back = decode(&encode(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode(&back), encode(&s));
    }

    #[test]
    fn bad_magic() {
        let mut b = header(1, 1, 1, 1);
        b[..4].copy_from_slice(b"XXXX");
        b.extend_from_slice(&0.5f32.to_le_bytes());
        match decode(&b) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "magic"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_expected_count() {
        // 2*3*3*1 = 18 floats expected
        let mut b = header(2, 3, 3, 1);
        for _ in 0..17 {
            b.extend_from_slice(&0.25f32.to_le_bytes());
        }
        match decode(&b) {
            Err(Error::Format { field, msg }) => {
                assert_eq!(field, "payload");
                assert!(msg.contains("18"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overflowing_dims() {
        let b = header(u32::MAX, u32::MAX, u32::MAX, u32::MAX);
        match decode(&b) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "dims"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_and_short_header() {
        let mut b = header(1, 1, 1, 1);
        b.extend_from_slice(&[0; 8]);
        assert!(decode(&b).is_err());
        assert!(decode(b"GSQ1\x01").is_err());
        assert!(decode(b"GS").is_err());
    }

    #[test]
    fn out_of_range_payload_is_format_error() {
        let mut b = header(1, 1, 1, 1);
        b.extend_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(decode(&b), Err(Error::Format { .. })));
    }
}
