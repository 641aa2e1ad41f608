use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Matrix, SeededRng};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Matrix<S>,
    pub grad: Matrix<S>,
}

/// Owns every trainable tensor of a model, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<S> {
    params: Vec<Parameter<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<S>) -> ParamId {
        let (r, c) = value.shape();
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
        });
        ParamId(self.params.len() - 1)
    }

    /// Registers a `rows × cols` tensor drawn uniformly from `[-scale, scale]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut SeededRng,
    ) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| S::lit(rng.uniform(-scale, scale)))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data).unwrap())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<S> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<S> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix<S> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<S>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<S>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill_zero();
        }
    }

    /// Adds the gradients produced by one backward pass.
    pub fn accumulate(&mut self, grads: &Gradients<S>) {
        for (p, g) in self.params.iter_mut().zip(&grads.per_param) {
            if let Some(g) = g {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn grad_norm(&self) -> S {
        self.params
            .iter()
            .map(|p| p.grad.norm_sq())
            .sum::<S>()
            .sqrt()
    }

    /// Clips the global gradient norm to `clip_norm`, applies
    /// `value ← value − lr·grad`, then zeroes all gradients.
    pub fn sgd_step(&mut self, lr: S, clip_norm: S) -> Result<()> {
        if let Some(p) = self.params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NumericFault(format!(
                "non-finite gradient in parameter {}",
                p.name
            )));
        }
        let norm = self.grad_norm();
        let factor = if norm > clip_norm {
            clip_norm / norm
        } else {
            S::one()
        };
        for p in &mut self.params {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data_mut()) {
                *g *= factor;
                *v -= lr * *g;
            }
        }
        self.zero_grads();
        Ok(())
    }
}

/// Per-parameter gradients from one backward pass; `None` for parameters the
/// computation never touched.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    pub(crate) per_param: Vec<Option<Matrix<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            per_param: vec![None; n],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix<S>> {
        self.per_param[id.0].as_ref()
    }

    pub fn slot(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Matrix<S> {
        self.per_param[id.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
    }

    pub fn merge(&mut self, other: &Gradients<S>) {
        for (a, b) in self.per_param.iter_mut().zip(&other.per_param) {
            if let Some(b) = b {
                match a {
                    Some(a) => a.add_assign(b),
                    None => *a = Some(b.clone()),
                }
            }
        }
    }
}
