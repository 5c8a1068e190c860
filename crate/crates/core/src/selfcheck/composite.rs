use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradfab::{finite_diff_check, ParamSet, Tape};
use crate::jepacore::{clip_loss_grad, JepaModel, ModelConfig};
use crate::maskfab::{MaskSpec, MaskStrategy};
use crate::probefab::{batch_loss, QAItem, Reasoner, ReasonerConfig, Task};
use crate::tokenfab::TokenGridSpec;

/// 12-token grid: 2 slices of 2×3 cells, 24 values per token.
pub fn toy_grid() -> TokenGridSpec {
    TokenGridSpec {
        frames: 4,
        channels: 3,
        height: 4,
        width: 6,
        tubelet: 2,
        patch: 2,
    }
}

/// `D = 8`, two encoder blocks, one predictor block, two heads.
pub fn toy_model_config() -> ModelConfig {
    ModelConfig {
        dim: 8,
        encoder_depth: 2,
        predictor_depth: 1,
        heads: 2,
        grid: toy_grid(),
        ..ModelConfig::default()
    }
}

pub(crate) fn flatten(sets: &[&ParamSet<f64>]) -> Vec<f64> {
    sets.iter()
        .flat_map(|s| s.arrays().iter().flat_map(|a| a.data().iter().copied()))
        .collect()
}

pub(crate) fn unflatten(set: &mut ParamSet<f64>, flat: &[f64]) -> usize {
    let mut off = 0;
    for a in set.arrays_mut() {
        let n = a.len();
        a.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    off
}

pub(crate) fn jitter(set: &mut ParamSet<f64>, rng: &mut ChaCha8Rng, amp: f64) {
    for a in set.arrays_mut() {
        a.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-amp..amp));
    }
}

/// Worst finite-difference relative error of the latent loss with respect to
/// φ and θ over `cases` random toy models, masks and clips.
///
/// Each case perturbs `coords` randomly chosen coordinates (all when `None`).
pub fn jepa_gradient_error(cases: usize, seed: u64, step: f64, coords: Option<usize>) -> Result<f64> {
    let cfg = toy_model_config();
    let grid = cfg.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let mut model = JepaModel::<f64>::init(&cfg, rng.gen())?;
        jitter(&mut model.phi, &mut rng, 0.5);
        jitter(&mut model.theta, &mut rng, 0.5);
        model.xi = model.phi.clone();
        jitter(&mut model.xi, &mut rng, 0.1);
        let n = grid.n_tokens();
        let k = rng.gen_range(1..n);
        let masked = index::sample(&mut rng, n, k).into_vec();
        let mask = MaskSpec::from_masked(MaskStrategy::Patch, 0, k as f64 / n as f64, n, masked);
        let tokens: Vec<f64> = (0..n * grid.token_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base = flatten(&[&model.phi, &model.theta]);
        let chosen: Option<Vec<usize>> =
            coords.map(|c| index::sample(&mut rng, base.len(), c.min(base.len())).into_vec());
        let mut scratch = model.clone();
        let err = finite_diff_check(
            |p| {
                let used = unflatten(&mut scratch.phi, p);
                unflatten(&mut scratch.theta, &p[used..]);
                let out = clip_loss_grad(&scratch, &tokens, &mask)?;
                let mut g = Vec::with_capacity(p.len());
                for (set, bound) in [(&scratch.phi, &out.phi), (&scratch.theta, &out.theta)] {
                    for (i, a) in set.arrays().iter().enumerate() {
                        match out.grads.get_ref(bound.vars()[i]) {
                            Some(v) => g.extend_from_slice(v),
                            None => g.extend(std::iter::repeat(0.0).take(a.len())),
                        }
                    }
                }
                Ok((out.loss, g))
            },
            &base,
            step,
            chosen.as_deref(),
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Worst finite-difference relative error of the reasoner's summed CE + BCE
/// loss over a mixed batch of descriptive and choice questions.
pub fn reasoner_gradient_error(cases: usize, seed: u64, step: f64, coords: Option<usize>) -> Result<f64> {
    let cfg = ReasonerConfig {
        vocab_size: 12,
        word_dim: 3,
        hidden: 4,
        feature_dim: 3,
        slices: 4,
        kernel: 3,
        conv_channels: 3,
        scene_dim: 5,
        n_answers: 4,
        dropout: 0.3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut model = Reasoner::<f64>::init(&cfg, &mut rng)?;
        jitter(&mut model.params, &mut rng, 0.3);
        let seq = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1..12)).collect() };
        let items: Vec<QAItem> = (0..4)
            .map(|i| {
                let causal = i % 2 == 1;
                QAItem {
                    clip_id: i,
                    task: if causal { Task::Counterfactual } else { Task::Descriptive },
                    question: seq(&mut rng),
                    choices: if causal { (0..4).map(|_| seq(&mut rng)).collect() } else { vec![] },
                    labels: if causal { (0..4).map(|_| rng.gen()).collect() } else { vec![] },
                    answer: (!causal).then(|| rng.gen_range(0..4)),
                }
            })
            .collect();
        let refs: Vec<&QAItem> = items.iter().collect();
        let scenes: Vec<Vec<f64>> = (0..4).map(|_| (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let scene_refs: Vec<&[f64]> = scenes.iter().map(Vec::as_slice).collect();
        let base = flatten(&[&model.params]);
        let chosen: Option<Vec<usize>> =
            coords.map(|c| index::sample(&mut rng, base.len(), c.min(base.len())).into_vec());
        // a fixed dropout seed keeps the loss a deterministic function of the weights
        let drop = seed.wrapping_add(case as u64);
        let mut scratch = model.clone();
        let err = finite_diff_check(
            |p| {
                unflatten(&mut scratch.params, p);
                let mut tape = Tape::new();
                let bound = scratch.params.bind(&mut tape, true);
                let fwd = scratch.forward(&mut tape, &bound, &refs, &scene_refs, Some(drop))?;
                let loss = batch_loss(&mut tape, &fwd, &refs)?;
                let value = tape.scalar_value(loss);
                let grads = tape.backward(loss)?;
                let mut g = Vec::with_capacity(p.len());
                for (a, &v) in scratch.params.arrays().iter().zip(bound.vars()) {
                    match grads.get_ref(v) {
                        Some(x) => g.extend_from_slice(x),
                        None => g.extend(std::iter::repeat(0.0).take(a.len())),
                    }
                }
                Ok((value, g))
            },
            &base,
            step,
            chosen.as_deref(),
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}
