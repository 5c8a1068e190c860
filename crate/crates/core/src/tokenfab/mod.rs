//! Clip normalization, tubelet partition and token embedding.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gradfab::{DiffArray, ParamId, ParamSet, Scalar, Tape, Var, Bound};
use crate::worldsim::Clip;

/// Init std for embeddings and linear weights; biases start at zero.
pub const INIT_STD: f64 = 0.02;

/// Geometry of the tubelet grid.
///
/// Token `idx = t'·(rows·cols) + row·cols + col`. Inside a token, values are
/// flattened in `(frame, channel, row, col)` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGridSpec {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub tubelet: usize,
    pub patch: usize,
}

impl Default for TokenGridSpec {
    fn default() -> Self {
        TokenGridSpec {
            frames: 16,
            channels: 3,
            height: 96,
            width: 96,
            tubelet: 2,
            patch: 16,
        }
    }
}

impl TokenGridSpec {
    pub fn slices(&self) -> usize {
        self.frames / self.tubelet
    }

    pub fn rows(&self) -> usize {
        self.height / self.patch
    }

    pub fn cols(&self) -> usize {
        self.width / self.patch
    }

    /// Spatial cells per temporal slice.
    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn n_tokens(&self) -> usize {
        self.slices() * self.cells()
    }

    /// Values per token.
    pub fn token_dim(&self) -> usize {
        self.tubelet * self.channels * self.patch * self.patch
    }

    /// Pixel sites (frame, y, x) per token.
    pub fn token_pixels(&self) -> usize {
        self.tubelet * self.patch * self.patch
    }

    pub fn index(&self, slice: usize, row: usize, col: usize) -> usize {
        slice * self.cells() + row * self.cols() + col
    }

    /// Inverse of [`index`](Self::index): `(slice, row, col)`.
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let cell = idx % self.cells();
        (idx / self.cells(), cell / self.cols(), cell % self.cols())
    }

    /// Token containing pixel `(frame, y, x)`.
    pub fn token_of(&self, frame: usize, y: usize, x: usize) -> usize {
        self.index(frame / self.tubelet, y / self.patch, x / self.patch)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tubelet > 0
            && self.patch > 0
            && self.frames % self.tubelet == 0
            && self.height % self.patch == 0
            && self.width % self.patch == 0
            && self.frames > 0
            && self.channels > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("grid {self:?} does not tile the clip")))
        }
    }

    fn check_clip(&self, clip: &Clip, op: &'static str) -> Result<()> {
        let want = [self.frames, self.channels, self.height, self.width];
        if clip.dims() != want {
            return Err(Error::dim(op, &[&clip.dims(), &want]));
        }
        Ok(())
    }
}

/// Per-channel normalization constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for NormConstants {
    fn default() -> Self {
        NormConstants {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl NormConstants {
    pub fn identity() -> Self {
        NormConstants {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().all(|&s| s > 0.0 && s.is_finite()) && self.mean.iter().all(|m| m.is_finite()) {
            Ok(())
        } else {
            Err(Error::Contract(format!("normalization std must be positive: {:?}", self.std)))
        }
    }

    /// Hex SHA-256 of the six constants (little-endian f64).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.mean.iter().chain(&self.std) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// `x' = (x − μ_c)/σ_c` per channel.
pub fn normalize_clip(clip: &Clip, constants: &NormConstants) -> Result<Clip> {
    constants.validate()?;
    if clip.channels != 3 {
        return Err(Error::dim("normalize_clip", &[&clip.dims()]));
    }
    let plane = clip.height * clip.width;
    // pixel data is 32-bit, so the constants are applied at that precision
    let mean = constants.mean.map(|m| m as f32);
    let std = constants.std.map(|s| s as f32);
    let mut out = clip.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        let c = (i / plane) % 3;
        *v = (*v - mean[c]) / std[c];
    }
    Ok(out)
}

/// Splits a clip into `[n_tokens, token_dim]` row-major token values.
pub fn tubelet_partition<T: Scalar>(clip: &Clip, grid: &TokenGridSpec) -> Result<Vec<T>> {
    grid.validate()?;
    grid.check_clip(clip, "tubelet_partition")?;
    let (p, tu, ch) = (grid.patch, grid.tubelet, grid.channels);
    let mut out = Vec::with_capacity(grid.n_tokens() * grid.token_dim());
    for idx in 0..grid.n_tokens() {
        let (s, row, col) = grid.coords(idx);
        for df in 0..tu {
            let f = s * tu + df;
            for c in 0..ch {
                for dy in 0..p {
                    let base = clip.index(f, c, row * p + dy, col * p);
                    out.extend(clip.data[base..base + p].iter().map(|&v| T::of(v as f64)));
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`tubelet_partition`].
pub fn assemble_tokens<T: Scalar>(tokens: &[T], grid: &TokenGridSpec) -> Result<Clip> {
    grid.validate()?;
    if tokens.len() != grid.n_tokens() * grid.token_dim() {
        return Err(Error::dim("assemble_tokens", &[&[tokens.len()], &[grid.n_tokens(), grid.token_dim()]]));
    }
    let (p, tu, ch) = (grid.patch, grid.tubelet, grid.channels);
    let mut clip = Clip::zeros(grid.frames, ch, grid.height, grid.width);
    let mut it = tokens.iter();
    for idx in 0..grid.n_tokens() {
        let (s, row, col) = grid.coords(idx);
        for df in 0..tu {
            for c in 0..ch {
                for dy in 0..p {
                    for dx in 0..p {
                        let v = it.next().expect("length checked").as_f64() as f32;
                        clip.set(s * tu + df, c, row * p + dy, col * p + dx, v);
                    }
                }
            }
        }
    }
    Ok(clip)
}

/// Handles of the patch projection and positional table inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedParams {
    /// `[token_dim, D]`
    pub w: ParamId,
    /// `[D]`
    pub b: ParamId,
    /// `[n_tokens, D]`
    pub pos: ParamId,
}

impl EmbedParams {
    pub fn init<T: Scalar, R: Rng + ?Sized>(
        set: &mut ParamSet<T>,
        prefix: &str,
        grid: &TokenGridSpec,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = set.push(format!("{prefix}.patch_w"), DiffArray::randn(&[grid.token_dim(), dim], INIT_STD, rng));
        let b = set.push(format!("{prefix}.patch_b"), DiffArray::zeros(&[dim]));
        let pos = set.push(format!("{prefix}.pos"), DiffArray::randn(&[grid.n_tokens(), dim], INIT_STD, rng));
        EmbedParams { w, b, pos }
    }

    /// Re-derives the handles from parameter names.
    pub fn lookup<T: Scalar>(set: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let find = |n: &str| {
            set.id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Contract(format!("missing parameter {prefix}.{n}")))
        };
        Ok(EmbedParams {
            w: find("patch_w")?,
            b: find("patch_b")?,
            pos: find("pos")?,
        })
    }
}

/// `e = token·W_e + b + P[idx]` for the tokens listed in `idx`.
///
/// `tokens` holds the selected rows `[idx.len(), token_dim]` in the same order
/// as `idx`.
pub fn embed_tokens<T: Scalar>(
    tape: &mut Tape<T>,
    tokens: Var,
    idx: &[usize],
    params: &EmbedParams,
    bound: &Bound,
) -> Result<Var> {
    let rows = tape.shape(tokens).first().copied().unwrap_or(0);
    if rows != idx.len() {
        return Err(Error::dim("embed_tokens", &[tape.shape(tokens), &[idx.len()]]));
    }
    let proj = tape.matmul(tokens, bound[params.w])?;
    let proj = tape.add(proj, bound[params.b])?;
    let pos = tape.gather_rows(bound[params.pos], idx)?;
    tape.add(proj, pos)
}

/// Gathers the token rows `idx` from a full `[n_tokens, token_dim]` buffer.
pub fn select_tokens<T: Scalar>(all: &[T], token_dim: usize, idx: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * token_dim);
    for &i in idx {
        out.extend_from_slice(&all[i * token_dim..(i + 1) * token_dim]);
    }
    out
}

#[cfg(test)]
mod tests;
