use sha2::{Digest, Sha256};

use super::array::{DiffArray, Scalar};
use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered, named collection of parameter arrays.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    params: Vec<DiffArray<T>>,
}

/// Tape handles for every parameter of one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, array: DiffArray<T>) -> ParamId {
        self.names.push(name.into());
        self.params.push(array);
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &DiffArray<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DiffArray<T> {
        &mut self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DiffArray<T>)> {
        self.names.iter().map(String::as_str).zip(self.params.iter())
    }

    pub fn arrays(&self) -> &[DiffArray<T>] {
        &self.params
    }

    pub fn arrays_mut(&mut self) -> &mut [DiffArray<T>] {
        &mut self.params
    }

    /// Places every parameter on the tape; `trainable` controls whether they
    /// are differentiable leaves or constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        Bound(
            self.params
                .iter()
                .map(|p| {
                    let data = p.data().to_vec();
                    if trainable {
                        tape.variable(p.shape(), data).expect("param shape invariant")
                    } else {
                        tape.constant(p.shape(), data).expect("param shape invariant")
                    }
                })
                .collect(),
        )
    }

    /// Adds the gradients of bound leaves into each parameter's grad slot,
    /// scaled by `scale`.
    pub fn accumulate(&mut self, grads: &Gradients<T>, bound: &Bound, scale: T) -> Result<()> {
        if bound.0.len() != self.params.len() {
            return Err(Error::Contract("binding does not match parameter set".into()));
        }
        for (p, &v) in self.params.iter_mut().zip(&bound.0) {
            if let Some(g) = grads.get_ref(v) {
                let scaled: Vec<T> = g.iter().map(|&x| x * scale).collect();
                p.accumulate_grad(&scaled)?;
            } else if p.grad().is_none() {
                p.set_requires_grad(true);
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            if p.grad().is_none() {
                p.set_requires_grad(true);
            }
            p.zero_grad();
        }
    }

    /// Gradient slot of a parameter, or zeros when none was accumulated.
    pub fn grad_or_zero(&self, id: ParamId) -> Vec<T> {
        let p = &self.params[id.0];
        p.grad()
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![T::zero(); p.len()])
    }

    /// `true` when both sets have identical names and shapes.
    pub fn same_layout(&self, other: &ParamSet<T>) -> bool {
        self.names == other.names
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// SHA-256 over names, shapes and the little-endian bytes of every value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in self.iter() {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            for &d in p.shape() {
                h.update((d as u32).to_le_bytes());
            }
            for v in p.data() {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }
}
