use serde::{Deserialize, Serialize};

use super::array::{DiffArray, Scalar};
use crate::error::{Error, Result};

/// AdamW hyperparameters. Defaults follow the pre-training setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1.5e-4,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter AdamW moments.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub config: AdamWConfig,
}

impl<T: Scalar> OptState<T> {
    pub fn new(len: usize, config: AdamWConfig) -> Self {
        OptState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            config,
        }
    }

    pub fn for_param(param: &DiffArray<T>, config: AdamWConfig) -> Self {
        Self::new(param.len(), config)
    }
}

/// One decoupled-weight-decay Adam step.
///
/// A non-finite gradient rejects the step and leaves `param` and `state`
/// untouched.
pub fn adamw_step<T: Scalar>(param: &mut [T], grad: &[T], state: &mut OptState<T>) -> Result<()> {
    if param.len() != grad.len() || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::dim(
            "adamw_step",
            &[&[param.len()], &[grad.len()], &[state.m.len()], &[state.v.len()]],
        ));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adamw_step gradient".into()));
    }
    let c = state.config;
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let bc1 = T::one() - T::of(c.beta1.powi(t));
    let bc2 = T::one() - T::of(c.beta2.powi(t));
    let (lr, wd, eps) = (T::of(c.lr), T::of(c.weight_decay), T::of(c.eps));
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        param[i] -= lr * (mhat / (vhat.sqrt() + eps) + wd * param[i]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_applies_only_decay() {
        let mut p = vec![1.0f64];
        let mut st = OptState::new(1, AdamWConfig::default());
        adamw_step(&mut p, &[0.0], &mut st).unwrap();
        assert!((p[0] - 0.9999925).abs() < 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = vec![0.5f64];
        let mut st = OptState::new(1, cfg);
        adamw_step(&mut p, &[2.0], &mut st).unwrap();
        // m̂ = 2, v̂ = 4, Δ = -lr·2/(2+1e-8)
        let expect = 0.5 - 1.5e-4 * 2.0 / (2.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
        assert!((p[0] - (0.5 - 1.5e-4)).abs() < 1e-11);
    }

    fn scalar_reference(mut p: f64, g: f64, steps: u32, c: AdamWConfig) -> f64 {
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=steps {
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t as i32));
            let vh = v / (1.0 - c.beta2.powi(t as i32));
            p -= c.lr * (mh / (vh.sqrt() + c.eps) + c.weight_decay * p);
        }
        p
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let cfg = AdamWConfig::default();
        let mut p = vec![0.3f64, -1.2];
        let g = [0.7, -0.05];
        let mut st = OptState::new(2, cfg);
        adamw_step(&mut p, &g, &mut st).unwrap();
        adamw_step(&mut p, &g, &mut st).unwrap();
        assert!((p[0] - scalar_reference(0.3, 0.7, 2, cfg)).abs() < 1e-12);
        assert!((p[1] - scalar_reference(-1.2, -0.05, 2, cfg)).abs() < 1e-12);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        let mut p = vec![1.0f64, 2.0];
        let mut st = OptState::new(2, AdamWConfig::default());
        assert!(matches!(adamw_step(&mut p, &[f64::NAN, 0.0], &mut st), Err(Error::NonFinite(_))));
        assert_eq!(st.t, 0);
        assert_eq!(p, vec![1.0, 2.0]);
        assert!(matches!(adamw_step(&mut p, &[0.0], &mut st), Err(Error::Dimension { .. })));
    }
}
