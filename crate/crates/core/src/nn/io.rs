//! Binary container for parameter vectors: the magic `PVEC`, a little-endian
//! `u32` header length, the architecture as JSON, a `u64` value count, then
//! the values as little-endian `f64`.

use std::io::{Read, Write};

use super::{ArchSpec, ParamVector};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PVEC";

pub fn write_param_vector(p: &ParamVector, mut out: impl Write) -> Result<()> {
    let header = serde_json::to_vec(p.arch())?;
    let mut buf = Vec::with_capacity(16 + header.len() + 8 * p.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(p.len() as u64).to_le_bytes());
    for v in p.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| Error::io("<param vector>", e))
}

pub fn read_param_vector(mut input: impl Read) -> Result<ParamVector> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("<param vector>", e))?;
    let bad = |m: &str| Error::precondition(format!("param vector: {m}"));
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| bad("truncated"));
    if take(0, 4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u32::from_le_bytes(take(4, 4)?.try_into().expect("4 bytes")) as usize;
    let arch: ArchSpec = serde_json::from_slice(take(8, hlen)?)?;
    let at = 8 + hlen;
    let count = u64::from_le_bytes(take(at, 8)?.try_into().expect("8 bytes")) as usize;
    let body = take(at + 8, count.checked_mul(8).ok_or_else(|| bad("length overflow"))?)?;
    if bytes.len() != at + 8 + 8 * count {
        return Err(bad("trailing bytes"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ParamVector::new(values, arch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let arch = ArchSpec::classifier(&[2, 1]).unwrap();
        let p = ParamVector::new(vec![0.5, -1.0, 2.0], arch).unwrap();
        let mut buf = Vec::new();
        write_param_vector(&p, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PVEC");
        assert_eq!(&buf[buf.len() - 8..], &2.0f64.to_le_bytes());
        assert_eq!(read_param_vector(&buf[..]).unwrap(), p);
        assert!(read_param_vector(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_param_vector(&extra[..]).is_err());
    }
}
