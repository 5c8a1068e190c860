use rand::Rng;

use crate::error::{Error, Result};
use crate::gradfab::{Bound, DiffArray, ParamId, ParamSet, Scalar, Tape, Var};
use crate::tokenfab::INIT_STD;

/// Parameter handles of one pre-norm transformer block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockParams {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    /// `[D, 3D]`, columns ordered q | k | v.
    pub qkv_w: ParamId,
    pub qkv_b: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

const BLOCK_FIELDS: [&str; 12] = [
    "ln1_g", "ln1_b", "qkv_w", "qkv_b", "proj_w", "proj_b", "ln2_g", "ln2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b",
];

pub(crate) fn push_norm<T: Scalar>(set: &mut ParamSet<T>, prefix: &str, dim: usize) -> (ParamId, ParamId) {
    let g = set.push(format!("{prefix}_g"), DiffArray::full(&[dim], T::one()));
    let b = set.push(format!("{prefix}_b"), DiffArray::zeros(&[dim]));
    (g, b)
}

pub(crate) fn push_linear<T: Scalar, R: Rng + ?Sized>(
    set: &mut ParamSet<T>,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> (ParamId, ParamId) {
    let w = set.push(format!("{prefix}_w"), DiffArray::randn(&[fan_in, fan_out], INIT_STD, rng));
    let b = set.push(format!("{prefix}_b"), DiffArray::zeros(&[fan_out]));
    (w, b)
}

pub(crate) fn find<T: Scalar>(set: &ParamSet<T>, name: &str) -> Result<ParamId> {
    set.id(name)
        .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
}

impl BlockParams {
    pub fn init<T: Scalar, R: Rng + ?Sized>(
        set: &mut ParamSet<T>,
        prefix: &str,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let (ln1_g, ln1_b) = push_norm(set, &format!("{prefix}.ln1"), dim);
        let (qkv_w, qkv_b) = push_linear(set, &format!("{prefix}.qkv"), dim, 3 * dim, rng);
        let (proj_w, proj_b) = push_linear(set, &format!("{prefix}.proj"), dim, dim, rng);
        let (ln2_g, ln2_b) = push_norm(set, &format!("{prefix}.ln2"), dim);
        let (fc1_w, fc1_b) = push_linear(set, &format!("{prefix}.fc1"), dim, hidden, rng);
        let (fc2_w, fc2_b) = push_linear(set, &format!("{prefix}.fc2"), hidden, dim, rng);
        BlockParams {
            ln1_g,
            ln1_b,
            qkv_w,
            qkv_b,
            proj_w,
            proj_b,
            ln2_g,
            ln2_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        }
    }

    pub fn lookup<T: Scalar>(set: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let mut ids = [ParamId(0); 12];
        for (id, f) in ids.iter_mut().zip(BLOCK_FIELDS) {
            *id = find(set, &format!("{prefix}.{f}"))?;
        }
        let [ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b] = ids;
        Ok(BlockParams {
            ln1_g,
            ln1_b,
            qkv_w,
            qkv_b,
            proj_w,
            proj_b,
            ln2_g,
            ln2_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        })
    }
}

/// Multi-head self-attention over the rows of `x [n, D]`.
pub fn attention<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BlockParams, b: &Bound, heads: usize) -> Result<Var> {
    let dim = tape.shape(x)[1];
    if heads == 0 || dim % heads != 0 {
        return Err(Error::dim("attention", &[&[dim], &[heads]]));
    }
    let dh = dim / heads;
    let qkv = tape.matmul(x, b[p.qkv_w])?;
    let qkv = tape.add(qkv, b[p.qkv_b])?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let q = tape.slice_lastdim(qkv, h * dh, dh)?;
        let k = tape.slice_lastdim(qkv, dim + h * dh, dh)?;
        let v = tape.slice_lastdim(qkv, 2 * dim + h * dh, dh)?;
        let scores = tape.matmul_t(q, k, false, true)?;
        let scores = tape.scale(scores, scale)?;
        let attn = tape.softmax_lastdim(scores)?;
        outs.push(tape.matmul(attn, v)?);
    }
    let cat = if heads == 1 { outs[0] } else { tape.concat_lastdim(&outs)? };
    let out = tape.matmul(cat, b[p.proj_w])?;
    tape.add(out, b[p.proj_b])
}

/// `x + attn(ln1(x))`, then `+ fc2(gelu(fc1(ln2(·))))`.
pub fn block_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BlockParams, b: &Bound, heads: usize) -> Result<Var> {
    let h = tape.layer_norm(x, b[p.ln1_g], b[p.ln1_b])?;
    let a = attention(tape, h, p, b, heads)?;
    let x = tape.add(x, a)?;
    let h = tape.layer_norm(x, b[p.ln2_g], b[p.ln2_b])?;
    let h = tape.matmul(h, b[p.fc1_w])?;
    let h = tape.add(h, b[p.fc1_b])?;
    let h = tape.gelu(h)?;
    let h = tape.matmul(h, b[p.fc2_w])?;
    let h = tape.add(h, b[p.fc2_b])?;
    tape.add(x, h)
}
