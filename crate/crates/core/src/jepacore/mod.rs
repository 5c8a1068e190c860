//! Context encoder φ, EMA target encoder ξ, predictor θ and the latent loss.

mod blocks;

pub use blocks::{attention, block_forward, BlockParams};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradfab::{Bound, DiffArray, Gradients, ParamId, ParamSet, Scalar, Tape, Var, LAYER_NORM_EPS};
use crate::maskfab::MaskSpec;
use crate::tokenfab::{embed_tokens, select_tokens, EmbedParams, TokenGridSpec, INIT_STD};
use blocks::{find, push_linear, push_norm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dim: usize,
    pub encoder_depth: usize,
    pub predictor_depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub ema_momentum: f64,
    /// Layer-normalize each target row before the loss.
    pub normalize_targets: bool,
    pub grid: TokenGridSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 192,
            encoder_depth: 6,
            predictor_depth: 3,
            heads: 6,
            mlp_ratio: 4,
            ema_momentum: 0.996,
            normalize_targets: false,
            grid: TokenGridSpec::default(),
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used for the directional experiments.
    pub fn tiny() -> Self {
        ModelConfig {
            dim: 64,
            encoder_depth: 2,
            predictor_depth: 1,
            heads: 2,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Contract(format!("width {} not divisible into {} heads", self.dim, self.heads)));
        }
        if self.encoder_depth == 0 || self.mlp_ratio == 0 {
            return Err(Error::Contract("encoder depth and mlp ratio must be positive".into()));
        }
        if !(self.ema_momentum > 0.0 && self.ema_momentum <= 1.0) {
            return Err(Error::Contract(format!("EMA momentum {} outside (0,1]", self.ema_momentum)));
        }
        Ok(())
    }
}

/// Handles into an encoder parameter set (shared by φ and ξ).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderLayout {
    pub embed: EmbedParams,
    pub blocks: Vec<BlockParams>,
    pub norm_g: ParamId,
    pub norm_b: ParamId,
}

/// Handles into the predictor parameter set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictorLayout {
    pub mask_token: ParamId,
    pub blocks: Vec<BlockParams>,
    pub norm_g: ParamId,
    pub norm_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// The three parameter sets and their layouts.
#[derive(Clone, Debug)]
pub struct JepaModel<T: Scalar> {
    pub config: ModelConfig,
    pub phi: ParamSet<T>,
    pub xi: ParamSet<T>,
    pub theta: ParamSet<T>,
    pub enc: EncoderLayout,
    pub pred: PredictorLayout,
}

impl<T: Scalar> JepaModel<T> {
    /// Fresh model; ξ starts as an exact copy of φ.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, hidden) = (config.dim, config.dim * config.mlp_ratio);
        let mut phi = ParamSet::new();
        let embed = EmbedParams::init(&mut phi, "embed", &config.grid, d, &mut rng);
        let blocks = (0..config.encoder_depth)
            .map(|i| BlockParams::init(&mut phi, &format!("block{i}"), d, hidden, &mut rng))
            .collect();
        let (norm_g, norm_b) = push_norm(&mut phi, "norm", d);
        let enc = EncoderLayout {
            embed,
            blocks,
            norm_g,
            norm_b,
        };
        let mut theta = ParamSet::new();
        let mask_token = theta.push("mask_token", DiffArray::randn(&[d], INIT_STD, &mut rng));
        let blocks = (0..config.predictor_depth)
            .map(|i| BlockParams::init(&mut theta, &format!("block{i}"), d, hidden, &mut rng))
            .collect();
        let (pn_g, pn_b) = push_norm(&mut theta, "norm", d);
        let (out_w, out_b) = push_linear(&mut theta, "out", d, d, &mut rng);
        let pred = PredictorLayout {
            mask_token,
            blocks,
            norm_g: pn_g,
            norm_b: pn_b,
            out_w,
            out_b,
        };
        Ok(JepaModel {
            config: config.clone(),
            xi: phi.clone(),
            phi,
            theta,
            enc,
            pred,
        })
    }

    /// Rebuilds a model around existing parameter sets, resolving handles by name.
    pub fn from_params(config: &ModelConfig, phi: ParamSet<T>, xi: ParamSet<T>, theta: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        if !phi.same_layout(&xi) {
            return Err(Error::Contract("target encoder layout differs from context encoder".into()));
        }
        let enc = EncoderLayout {
            embed: EmbedParams::lookup(&phi, "embed")?,
            blocks: (0..config.encoder_depth)
                .map(|i| BlockParams::lookup(&phi, &format!("block{i}")))
                .collect::<Result<_>>()?,
            norm_g: find(&phi, "norm_g")?,
            norm_b: find(&phi, "norm_b")?,
        };
        let pred = PredictorLayout {
            mask_token: find(&theta, "mask_token")?,
            blocks: (0..config.predictor_depth)
                .map(|i| BlockParams::lookup(&theta, &format!("block{i}")))
                .collect::<Result<_>>()?,
            norm_g: find(&theta, "norm_g")?,
            norm_b: find(&theta, "norm_b")?,
            out_w: find(&theta, "out_w")?,
            out_b: find(&theta, "out_b")?,
        };
        let model = JepaModel {
            config: config.clone(),
            phi,
            xi,
            theta,
            enc,
            pred,
        };
        let want = JepaModel::<T>::init(config, 0)?;
        if !model.phi.same_layout(&want.phi) || !model.theta.same_layout(&want.theta) {
            return Err(Error::Contract("parameter shapes do not match the model config".into()));
        }
        Ok(model)
    }

    pub fn cast<U: Scalar>(&self) -> JepaModel<U> {
        JepaModel {
            config: self.config.clone(),
            phi: self.phi.cast(),
            xi: self.xi.cast(),
            theta: self.theta.cast(),
            enc: self.enc.clone(),
            pred: self.pred.clone(),
        }
    }

    /// Digest of the frozen backbone (φ and ξ).
    pub fn backbone_digest(&self) -> String {
        format!("{}:{}", self.phi.digest(), self.xi.digest())
    }
}

fn grid_check(grid: &TokenGridSpec, tokens: &[impl Sized]) -> Result<()> {
    if tokens.len() != grid.n_tokens() * grid.token_dim() {
        return Err(Error::dim("encoder input", &[&[tokens.len()], &[grid.n_tokens(), grid.token_dim()]]));
    }
    Ok(())
}

/// Encodes the listed tokens with an encoder bound on `tape`.
///
/// `tokens` holds all normalized token values `[n_tokens, token_dim]`; only the
/// rows in `idx` enter the network, so attention never sees the others.
pub fn encode_tokens<T: Scalar>(
    tape: &mut Tape<T>,
    config: &ModelConfig,
    layout: &EncoderLayout,
    bound: &Bound,
    tokens: &[T],
    idx: &[usize],
) -> Result<Var> {
    grid_check(&config.grid, tokens)?;
    if idx.is_empty() {
        return Err(Error::Contract("encoder needs at least one visible token".into()));
    }
    let td = config.grid.token_dim();
    let x = tape.constant(&[idx.len(), td], select_tokens(tokens, td, idx))?;
    let mut h = embed_tokens(tape, x, idx, &layout.embed, bound)?;
    for b in &layout.blocks {
        h = block_forward(tape, h, b, bound, config.heads)?;
    }
    tape.layer_norm(h, bound[layout.norm_g], bound[layout.norm_b])
}

/// Context embeddings `[|visible|, D]` of the unmasked tokens.
pub fn encode_context<T: Scalar>(
    tape: &mut Tape<T>,
    model: &JepaModel<T>,
    phi: &Bound,
    tokens: &[T],
    mask: &MaskSpec,
) -> Result<Var> {
    encode_tokens(tape, &model.config, &model.enc, phi, tokens, &mask.visible)
}

/// Full-sequence encoding with `params` on a private tape; nothing is recorded.
pub fn encode_full<T: Scalar>(config: &ModelConfig, layout: &EncoderLayout, params: &ParamSet<T>, tokens: &[T]) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let idx: Vec<usize> = (0..config.grid.n_tokens()).collect();
    let out = encode_tokens(&mut tape, config, layout, &bound, tokens, &idx)?;
    Ok(tape.value(out).to_vec())
}

/// Target embeddings `[n_tokens, D]` from ξ, detached from every tape.
pub fn encode_target<T: Scalar>(model: &JepaModel<T>, tokens: &[T]) -> Result<Vec<T>> {
    let mut out = encode_full(&model.config, &model.enc, &model.xi, tokens)?;
    if model.config.normalize_targets {
        normalize_rows(&mut out, model.config.dim);
    }
    Ok(out)
}

fn normalize_rows<T: Scalar>(data: &mut [T], dim: usize) {
    let eps = T::of(LAYER_NORM_EPS);
    let n = T::of(dim as f64);
    for row in data.chunks_mut(dim) {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
}

/// Predictor pass over `[ctx rows; m_tok + P[masked]]`, returning the masked
/// rows in the order of `masked`.
///
/// `phi` supplies the positional table; `visible` must list the positions of
/// the `ctx` rows.
pub fn predict_rows<T: Scalar>(
    tape: &mut Tape<T>,
    model: &JepaModel<T>,
    phi: &Bound,
    theta: &Bound,
    ctx: Var,
    visible: &[usize],
    masked: &[usize],
) -> Result<Var> {
    let shape = tape.shape(ctx).to_vec();
    if shape.len() != 2 || shape[0] != visible.len() || shape[1] != model.config.dim {
        return Err(Error::dim("predict", &[&shape, &[visible.len(), model.config.dim]]));
    }
    if masked.is_empty() {
        return Err(Error::Contract("predictor needs at least one masked position".into()));
    }
    let p = &model.pred;
    let pos = tape.gather_rows(phi[model.enc.embed.pos], masked)?;
    let queries = tape.add(pos, theta[p.mask_token])?;
    let mut h = tape.concat_rows(&[ctx, queries])?;
    for b in &p.blocks {
        h = block_forward(tape, h, b, theta, model.config.heads)?;
    }
    let h = tape.layer_norm(h, theta[p.norm_g], theta[p.norm_b])?;
    let h = tape.slice_rows(h, visible.len(), masked.len())?;
    let h = tape.matmul(h, theta[p.out_w])?;
    tape.add(h, theta[p.out_b])
}

/// Predictions `[|masked|, D]` in ascending token order.
pub fn predict<T: Scalar>(
    tape: &mut Tape<T>,
    model: &JepaModel<T>,
    phi: &Bound,
    theta: &Bound,
    ctx: Var,
    mask: &MaskSpec,
) -> Result<Var> {
    let n = model.config.grid.n_tokens();
    let mut seen = vec![false; n];
    for &i in mask.visible.iter().chain(&mask.masked) {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Contract(format!("token {i} repeated or out of range in mask partition")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Contract("mask does not cover every token".into()));
    }
    predict_rows(tape, model, phi, theta, ctx, &mask.visible, &mask.masked)
}

/// `(1/|mask|)·Σ ‖pred_i − target_i‖²` with `target` the full `[N, D]` table.
pub fn jepa_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: Var, masked: &[usize]) -> Result<Var> {
    tape.mse_masked(pred, target, masked)
}

/// `ξ ← m·ξ + (1−m)·φ` for every parameter.
pub fn ema_update<T: Scalar>(xi: &mut ParamSet<T>, phi: &ParamSet<T>, momentum: f64) -> Result<()> {
    if !xi.same_layout(phi) {
        return Err(Error::Contract("EMA between differently shaped parameter sets".into()));
    }
    let m = T::of(momentum);
    let one_m = T::of(1.0 - momentum);
    for (x, p) in xi.arrays_mut().iter_mut().zip(phi.arrays()) {
        for (a, &b) in x.data_mut().iter_mut().zip(p.data()) {
            *a = m * *a + one_m * b;
        }
    }
    Ok(())
}

/// Loss of one clip and the gradients of φ and θ.
pub struct ClipGrad<T: Scalar> {
    pub loss: f64,
    pub grads: Gradients<T>,
    pub phi: Bound,
    pub theta: Bound,
}

/// Forward and backward pass of the latent loss for one clip under `mask`.
pub fn clip_loss_grad<T: Scalar>(model: &JepaModel<T>, tokens: &[T], mask: &MaskSpec) -> Result<ClipGrad<T>> {
    let target = encode_target(model, tokens)?;
    let mut tape = Tape::new();
    let phi = model.phi.bind(&mut tape, true);
    let theta = model.theta.bind(&mut tape, true);
    let ctx = encode_context(&mut tape, model, &phi, tokens, mask)?;
    let pred = predict(&mut tape, model, &phi, &theta, ctx, mask)?;
    let tv = tape.constant(&[model.config.grid.n_tokens(), model.config.dim], target)?;
    let loss = jepa_loss(&mut tape, pred, tv, &mask.masked)?;
    let value = tape.scalar_value(loss).as_f64();
    let grads = tape.backward(loss)?;
    Ok(ClipGrad {
        loss: value,
        grads,
        phi,
        theta,
    })
}
