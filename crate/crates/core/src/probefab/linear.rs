use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_disjoint, clip_mean, split_clips, ProbeConfig, ProbeMetrics, Standardizer};
use crate::error::{Error, Result};
use crate::gradfab::{adamw_step, DiffArray, OptState, Tape};
use crate::trainfab::FeatureBank;

/// Linear classifier over z-scored clip-mean features. Two classes use a
/// single sigmoid logit; more use a softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub classes: usize,
    /// `[dim, outputs]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub standardizer: Standardizer,
}

impl LinearProbe {
    fn outputs(classes: usize) -> usize {
        if classes == 2 {
            1
        } else {
            classes
        }
    }

    pub fn predict(&self, raw: &[f64]) -> usize {
        let x = self.standardizer.apply(raw);
        let k = Self::outputs(self.classes);
        let logits: Vec<f64> = (0..k)
            .map(|j| self.b[j] + x.iter().enumerate().map(|(i, v)| v * self.w[i * k + j]).sum::<f64>())
            .collect();
        if k == 1 {
            (logits[0] > 0.0) as usize
        } else {
            (0..k).fold(0, |b, j| if logits[j] > logits[b] { j } else { b })
        }
    }
}

/// Trains on the seeded 80/20 clip split of `bank`; `targets[i]` labels bank
/// position `i`.
pub fn train_linear(bank: &FeatureBank, targets: &[usize], classes: usize, config: &ProbeConfig) -> Result<(LinearProbe, ProbeMetrics)> {
    if targets.len() != bank.len() || classes < 2 || targets.iter().any(|&t| t >= classes) {
        return Err(Error::Contract("linear probe targets do not match the bank".into()));
    }
    let (train_ids, test_ids) = split_clips(&bank.ids, config.train_fraction, config.seed)?;
    check_disjoint(&train_ids, &test_ids)?;
    let pos_of = |id: &u32| bank.position(*id).expect("split ids come from the bank");
    let train: Vec<usize> = train_ids.iter().map(pos_of).collect();
    let test: Vec<usize> = test_ids.iter().map(pos_of).collect();
    let dim = bank.dims[2];
    let means: Vec<Vec<f64>> = (0..bank.len()).map(|p| clip_mean(bank, p)).collect();
    let z = Standardizer::fit(train.iter().map(|&p| means[p].as_slice()), dim);
    let xs: Vec<Vec<f64>> = means.iter().map(|m| z.apply(m)).collect();

    let k = LinearProbe::outputs(classes);
    let mut w = DiffArray::<f64>::zeros(&[dim, k]);
    let mut b = DiffArray::<f64>::zeros(&[k]);
    let mut sw = OptState::for_param(&w, config.optim());
    let mut sb = OptState::for_param(&b, config.optim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = train.clone();
    let mut last = f64::NAN;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0);
        for chunk in order.chunks(config.batch.max(1)) {
            let mut tape = Tape::new();
            let x = tape.constant(&[chunk.len(), dim], chunk.iter().flat_map(|&p| xs[p].iter().copied()).collect())?;
            let wv = tape.variable(&[dim, k], w.data().to_vec())?;
            let bv = tape.variable(&[k], b.data().to_vec())?;
            let l = tape.matmul(x, wv)?;
            let l = tape.add(l, bv)?;
            let loss = if k == 1 {
                let p = tape.sigmoid(l)?;
                let t: Vec<f64> = chunk.iter().map(|&p| targets[p] as f64).collect();
                tape.binary_cross_entropy(p, &t)?
            } else {
                let t: Vec<usize> = chunk.iter().map(|&p| targets[p]).collect();
                tape.cross_entropy(l, &t)?
            };
            total += tape.scalar_value(loss);
            batches += 1;
            let g = tape.backward(loss)?;
            let gw = g.get(wv, dim * k).expect("weight gradient");
            let gb = g.get(bv, k).expect("bias gradient");
            adamw_step(w.data_mut(), &gw, &mut sw)?;
            adamw_step(b.data_mut(), &gb, &mut sb)?;
        }
        last = total / batches as f64;
    }
    let probe = LinearProbe {
        classes,
        w: w.data().to_vec(),
        b: b.data().to_vec(),
        standardizer: z,
    };
    let hits = test.iter().filter(|&&p| probe.predict(&means[p]) == targets[p]).count();
    let mut counts = vec![0usize; classes];
    for &p in &test {
        counts[targets[p]] += 1;
    }
    let metrics = ProbeMetrics {
        train_clips: train.len(),
        test_clips: test.len(),
        accuracy: hits as f64 / test.len() as f64,
        chance: *counts.iter().max().unwrap_or(&0) as f64 / test.len() as f64,
        final_train_loss: last,
        bank_digest: bank.digest.clone(),
        ..ProbeMetrics::default()
    };
    Ok((probe, metrics))
}
