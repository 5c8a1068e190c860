//! Differentiable dense arrays, the reverse-mode tape, AdamW, and gradient
//! checking.

mod array;
mod check;
mod optim;
mod params;
mod tape;

pub use array::{DiffArray, Scalar};
#[allow(unused_imports)]
pub(crate) use array::{gemm, MatRef};
pub use check::finite_diff_check;
pub use optim::{adamw_step, AdamWConfig, OptState};
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Gradients, Primitive, PrimitiveKind, Tape, Var, LAYER_NORM_EPS, PROB_CLAMP};

use crate::error::{Error, Result};

/// Tape handles of one GRU cell's gate parameters.
///
/// Input weights are stored `[in, H]` and recurrent weights `[H, H]`, so a
/// row-vector input `x` contributes `x·W`.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

/// One GRU step on row-batched inputs `x [B,in]`, `h [B,H]`.
///
/// `z = σ(xW_z + hU_z + b_z)`, `r = σ(xW_r + hU_r + b_r)`,
/// `h̃ = tanh(xW_h + (r⊙h)U_h + b_h)`, result `(1−z)⊙h + z⊙h̃`.
pub fn gru_cell<T: Scalar>(tape: &mut Tape<T>, x: Var, h: Var, p: &GruVars) -> Result<Var> {
    let (sx, sh) = (tape.shape(x).to_vec(), tape.shape(h).to_vec());
    let su = tape.shape(p.u_z).to_vec();
    let sw = tape.shape(p.w_z).to_vec();
    if sx.len() != 2 || sh.len() != 2 || sx[0] != sh[0] || su != [sh[1], sh[1]] || sw != [sx[1], sh[1]] {
        return Err(Error::dim("gru_cell", &[&sx, &sh, &sw, &su]));
    }
    let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
        let a = tape.matmul(x, w)?;
        let c = tape.matmul(hin, u)?;
        let s = tape.add(a, c)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, p.w_z, p.u_z, p.b_z, h)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = gate(tape, p.w_r, p.u_r, p.b_r, h)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h)?;
    let cand_pre = gate(tape, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = tape.tanh(cand_pre)?;
    let delta = tape.sub(cand, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}

#[cfg(test)]
mod tests;
