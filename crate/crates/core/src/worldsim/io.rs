use std::fs;
use std::path::Path;

use super::{Clip, LabelSet};
use crate::binio::Cursor;
use crate::error::{Error, Result};

pub const CLIP_MAGIC: &[u8; 4] = b"IAJV";
pub const CLIP_VERSION: u32 = 1;

/// Serializes a clip and its labels (little-endian, see [`read_clip`]).
pub fn encode_clip(clip: &Clip, labels: &LabelSet) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(labels)?;
    let mut out = Vec::with_capacity(4 + 4 + 16 + 4 * clip.data.len() + 4 + json.len());
    out.extend_from_slice(CLIP_MAGIC);
    out.extend_from_slice(&CLIP_VERSION.to_le_bytes());
    for d in clip.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &clip.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn write_clip(clip: &Clip, labels: &LabelSet, path: &Path) -> Result<()> {
    fs::write(path, encode_clip(clip, labels)?)?;
    Ok(())
}

/// Parses the clip format:
/// `"IAJV"`, version `u32`, dims `u32×4` (T,C,H,W), `f32` payload,
/// labels length `u32`, labels JSON.
pub fn decode_clip(buf: &[u8]) -> Result<(Clip, LabelSet)> {
    let mut cur = Cursor::new(buf);
    cur.header(CLIP_MAGIC, CLIP_VERSION)?;
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        *d = cur.u32("dims")? as usize;
    }
    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let bytes = count.and_then(|c| c.checked_mul(4));
    let Some(bytes) = bytes else {
        return Err(Error::format(8, format!("dims {dims:?} overflow")));
    };
    let payload = cur.take(bytes, "payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let label_len = cur.u32("labels length")? as usize;
    let at = cur.pos;
    let json = cur.take(label_len, "labels")?;
    let labels: LabelSet =
        serde_json::from_slice(json).map_err(|e| Error::format(at as u64, format!("labels: {e}")))?;
    cur.finish()?;
    let clip = Clip::new(dims[0], dims[1], dims[2], dims[3], data)?;
    Ok((clip, labels))
}

pub fn read_clip(path: &Path) -> Result<(Clip, LabelSet)> {
    decode_clip(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenfab::TokenGridSpec;
    use crate::worldsim::{make_labels, render, simulate, WorldConfig};

    fn sample() -> (Clip, LabelSet) {
        let cfg = WorldConfig::default();
        let trace = simulate(&cfg, 11).unwrap();
        (render(&trace, &cfg), make_labels(&trace, &cfg, &TokenGridSpec::default()))
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (clip, labels) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.iajv");
        write_clip(&clip, &labels, &path).unwrap();
        let (c2, l2) = read_clip(&path).unwrap();
        assert_eq!(c2.dims(), clip.dims());
        assert!(c2.data.iter().zip(&clip.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(l2, labels);
    }

    #[test]
    fn payload_size() {
        let (clip, labels) = sample();
        let buf = encode_clip(&clip, &labels).unwrap();
        let json = serde_json::to_vec(&labels).unwrap().len();
        assert_eq!(buf.len() - 24 - 4 - json, 1_769_472);
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let (clip, labels) = sample();
        let mut buf = encode_clip(&clip, &labels).unwrap();
        let good = buf.clone();
        buf[1] = b'X';
        assert!(matches!(decode_clip(&buf), Err(Error::Format { offset: 0, .. })));
        let cut = &good[..1000];
        assert!(matches!(decode_clip(cut), Err(Error::Format { offset: 24, .. })));
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(matches!(decode_clip(&v2), Err(Error::Format { offset: 4, .. })));
    }
}
