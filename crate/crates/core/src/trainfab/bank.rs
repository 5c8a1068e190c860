use std::fs;
use std::path::Path;

use crate::binio::{put_u32, Cursor};
use crate::error::{Error, Result};

pub const BANK_MAGIC: &[u8; 4] = b"IAJF";
pub const BANK_VERSION: u32 = 1;

/// Frozen per-clip token features `[n, slices, cells, dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank {
    pub ids: Vec<u32>,
    /// `[slices, cells, dim]`.
    pub dims: [usize; 3],
    pub values: Vec<f32>,
    /// Identifies the backbone and normalization that produced the features.
    pub digest: String,
}

impl FeatureBank {
    pub fn new(ids: Vec<u32>, dims: [usize; 3], values: Vec<f32>, digest: String) -> Result<Self> {
        let per = dims.iter().product::<usize>();
        if per == 0 || values.len() != ids.len() * per {
            return Err(Error::dim("FeatureBank", &[&[ids.len()], &dims, &[values.len()]]));
        }
        Ok(FeatureBank { ids, dims, values, digest })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn slab_len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Features of the `i`-th clip in bank order.
    pub fn slab(&self, i: usize) -> &[f32] {
        let n = self.slab_len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Bank restricted to `positions`, in that order.
    pub fn select(&self, positions: &[usize]) -> FeatureBank {
        let mut values = Vec::with_capacity(positions.len() * self.slab_len());
        for &p in positions {
            values.extend_from_slice(self.slab(p));
        }
        FeatureBank {
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
            dims: self.dims,
            values,
            digest: self.digest.clone(),
        }
    }
}

/// `"IAJF"`, version, `n`, dims `u32×3`, digest length + UTF-8, id count +
/// ids, then the `f32` payload. All little-endian.
pub fn encode_featurebank(bank: &FeatureBank) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64 + bank.digest.len() + 4 * bank.ids.len() + 4 * bank.values.len());
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&BANK_VERSION.to_le_bytes());
    put_u32(&mut out, bank.len())?;
    for &d in &bank.dims {
        put_u32(&mut out, d)?;
    }
    put_u32(&mut out, bank.digest.len())?;
    out.extend_from_slice(bank.digest.as_bytes());
    put_u32(&mut out, bank.ids.len())?;
    for id in &bank.ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for v in &bank.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_featurebank(buf: &[u8]) -> Result<FeatureBank> {
    let mut cur = Cursor::new(buf);
    cur.header(BANK_MAGIC, BANK_VERSION)?;
    let n = cur.u32("clip count")? as usize;
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = cur.u32("dims")? as usize;
    }
    let at = cur.pos;
    let len = cur.u32("digest length")? as usize;
    let digest = std::str::from_utf8(cur.take(len, "digest")?)
        .map_err(|_| Error::format(at as u64, "digest is not UTF-8"))?
        .to_string();
    let at = cur.pos;
    let count = cur.u32("id count")? as usize;
    if count != n {
        return Err(Error::format(at as u64, format!("id table has {count} entries for {n} clips")));
    }
    let ids = cur
        .take(4 * n, "id table")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let at = cur.pos;
    let total = dims
        .iter()
        .try_fold(n, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format(at as u64, "payload size overflows"))?;
    let values = cur.floats(total, 4, "payload")?.into_iter().map(|v| v as f32).collect();
    cur.finish()?;
    FeatureBank::new(ids, dims, values, digest).map_err(|e| Error::format(at as u64, e.to_string()))
}

pub fn write_featurebank(path: &Path, bank: &FeatureBank) -> Result<()> {
    fs::write(path, encode_featurebank(bank)?)?;
    Ok(())
}

pub fn read_featurebank(path: &Path) -> Result<FeatureBank> {
    decode_featurebank(&fs::read(path)?)
}
