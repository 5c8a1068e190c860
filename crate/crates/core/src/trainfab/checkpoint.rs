use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Checkpoint;
use crate::binio::{put_u32, Cursor};
use crate::error::{Error, Result};
use crate::gradfab::{AdamWConfig, DiffArray, OptState, ParamSet, Scalar};
use crate::jepacore::{JepaModel, ModelConfig};

pub const CKPT_MAGIC: &[u8; 4] = b"IAJC";
pub const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct RngState {
    stage_seed: u64,
    stage_step: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    stage: String,
    global_step: u64,
    rng: RngState,
    config_digest: String,
    norm_digest: String,
    /// Payload element type, `"f32"` or `"f64"`.
    dtype: String,
    model: ModelConfig,
    /// Parameter groups updated by the optimizer; ξ is not among them.
    optimized: Vec<String>,
    optim_phi: AdamWConfig,
    optim_theta: AdamWConfig,
    opt_t_phi: Vec<u64>,
    opt_t_theta: Vec<u64>,
}

fn width(dtype: &str) -> Result<usize> {
    match dtype {
        "f32" => Ok(4),
        "f64" => Ok(8),
        other => Err(Error::Contract(format!("unknown payload dtype {other:?}"))),
    }
}

fn put_values<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        if T::DTYPE == "f32" {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
}

fn put_entry<T: Scalar>(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[T]) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    put_values(out, values);
    Ok(())
}

fn first_config<T: Scalar>(states: &[OptState<T>]) -> AdamWConfig {
    states.first().map(|s| s.config).unwrap_or_default()
}

/// Serializes a checkpoint; payload values use the model's own precision.
pub fn encode_checkpoint<T: Scalar>(ck: &Checkpoint<T>) -> Result<Vec<u8>> {
    let m = &ck.model;
    let meta = Meta {
        stage: ck.stage.clone(),
        global_step: ck.global_step,
        rng: RngState {
            stage_seed: ck.stage_seed,
            stage_step: ck.stage_step,
        },
        config_digest: ck.config_digest.clone(),
        norm_digest: ck.norm_digest.clone(),
        dtype: T::DTYPE.into(),
        model: m.config.clone(),
        optimized: vec!["phi".into(), "theta".into()],
        optim_phi: first_config(&ck.opt_phi),
        optim_theta: first_config(&ck.opt_theta),
        opt_t_phi: ck.opt_phi.iter().map(|s| s.t).collect(),
        opt_t_theta: ck.opt_theta.iter().map(|s| s.t).collect(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    put_u32(&mut out, json.len())?;
    out.extend_from_slice(&json);
    for (group, set) in [("phi", &m.phi), ("xi", &m.xi), ("theta", &m.theta)] {
        for (name, a) in set.iter() {
            put_entry(&mut out, &format!("{group}/{name}"), a.shape(), a.data())?;
        }
    }
    for (group, set, states) in [("phi", &m.phi, &ck.opt_phi), ("theta", &m.theta, &ck.opt_theta)] {
        if states.len() != set.len() {
            return Err(Error::Contract(format!("{group}: optimizer state count differs from parameters")));
        }
        for ((name, a), st) in set.iter().zip(states) {
            put_entry(&mut out, &format!("adam_m.{group}/{name}"), a.shape(), &st.m)?;
            put_entry(&mut out, &format!("adam_v.{group}/{name}"), a.shape(), &st.v)?;
        }
    }
    Ok(out)
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn read_entry(cur: &mut Cursor<'_>, w: usize) -> Result<Entry> {
    let at = cur.pos;
    let len = cur.u32("name length")? as usize;
    let name = std::str::from_utf8(cur.take(len, "name")?)
        .map_err(|_| Error::format(at as u64, "name is not UTF-8"))?
        .to_string();
    let ndim = cur.u32("ndim")? as usize;
    if ndim > 8 {
        return Err(Error::format(at as u64, format!("{name}: implausible rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(cur.u32("dims")? as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format(at as u64, format!("{name}: shape overflows")))?;
    let values = cur.floats(count, w, &name)?;
    Ok(Entry { name, shape, values })
}

fn take_group<T: Scalar>(entries: &mut std::vec::IntoIter<Entry>, prefix: &str, count: usize) -> Result<ParamSet<T>> {
    let mut set = ParamSet::new();
    for _ in 0..count {
        let e = entries
            .next()
            .ok_or_else(|| Error::Contract(format!("checkpoint lacks {prefix} entries")))?;
        let name = e
            .name
            .strip_prefix(prefix)
            .ok_or_else(|| Error::Contract(format!("expected a {prefix} entry, found {}", e.name)))?;
        set.push(name, DiffArray::from_f64(&e.shape, &e.values)?);
    }
    Ok(set)
}

/// Parses a checkpoint completely before building any state, so a damaged
/// file never yields a partial model.
pub fn decode_checkpoint<T: Scalar>(buf: &[u8]) -> Result<Checkpoint<T>> {
    let mut cur = Cursor::new(buf);
    cur.header(CKPT_MAGIC, CKPT_VERSION)?;
    let len = cur.u32("metadata length")? as usize;
    let at = cur.pos;
    let meta: Meta =
        serde_json::from_slice(cur.take(len, "metadata")?).map_err(|e| Error::format(at as u64, format!("metadata: {e}")))?;
    let w = width(&meta.dtype).map_err(|e| Error::format(at as u64, e.to_string()))?;
    let mut entries = Vec::new();
    while cur.pos < buf.len() {
        entries.push(read_entry(&mut cur, w)?);
    }
    cur.finish()?;

    // parameter counts follow from the layout a fresh model of this config has
    let shape_model = JepaModel::<T>::init(&meta.model, 0)?;
    let (n_phi, n_theta) = (shape_model.phi.len(), shape_model.theta.len());
    if entries.len() != 2 * n_phi + n_theta + 2 * (n_phi + n_theta) {
        return Err(Error::Contract(format!("checkpoint holds {} tables for this model config", entries.len())));
    }
    let mut it = entries.into_iter();
    let phi = take_group::<T>(&mut it, "phi/", n_phi)?;
    let xi = take_group::<T>(&mut it, "xi/", n_phi)?;
    let theta = take_group::<T>(&mut it, "theta/", n_theta)?;
    let mut opt = |group: &str, set: &ParamSet<T>, cfg: AdamWConfig, ts: &[u64]| -> Result<Vec<OptState<T>>> {
        if ts.len() != set.len() {
            return Err(Error::Contract(format!("{group}: optimizer step counts do not match")));
        }
        let mut out = Vec::with_capacity(set.len());
        for (i, (name, a)) in set.iter().enumerate() {
            let ms = take_group::<T>(&mut it, &format!("adam_m.{group}/"), 1)?;
            let vs = take_group::<T>(&mut it, &format!("adam_v.{group}/"), 1)?;
            if ms.names()[0] != name || vs.names()[0] != name || ms.arrays()[0].shape() != a.shape() {
                return Err(Error::Contract(format!("{group}: optimizer table for {name} out of place")));
            }
            out.push(OptState {
                m: ms.arrays()[0].data().to_vec(),
                v: vs.arrays()[0].data().to_vec(),
                t: ts[i],
                config: cfg,
            });
        }
        Ok(out)
    };
    let opt_phi = opt("phi", &phi, meta.optim_phi, &meta.opt_t_phi)?;
    let opt_theta = opt("theta", &theta, meta.optim_theta, &meta.opt_t_theta)?;
    let model = JepaModel::from_params(&meta.model, phi, xi, theta)?;
    Ok(Checkpoint {
        model,
        opt_phi,
        opt_theta,
        stage: meta.stage,
        stage_step: meta.rng.stage_step,
        global_step: meta.global_step,
        stage_seed: meta.rng.stage_seed,
        config_digest: meta.config_digest,
        norm_digest: meta.norm_digest,
    })
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ck: &Checkpoint<T>) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    decode_checkpoint(&fs::read(path)?)
}
