use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::graph::Gradients;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Identity of a [`Parameter`] inside a graph. Fresh for every parameter,
/// including clones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        ParamId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug)]
pub struct Parameter {
    id: ParamId,
    name: String,
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
}

impl Clone for Parameter {
    fn clone(&self) -> Self {
        Self {
            id: ParamId::fresh(),
            name: self.name.clone(),
            shape: self.shape.clone(),
            value: self.value.clone(),
            grad: self.grad.clone(),
        }
    }
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "parameter shape/value mismatch");
        Self {
            id: ParamId::fresh(),
            name: name.into(),
            shape: shape.to_vec(),
            grad: vec![0.0; value.len()],
            value,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::filled(name, shape, 0.0)
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: f64) -> Self {
        Self::new(name, shape, vec![v; shape.iter().product()])
    }

    /// Uniform in `±sqrt(1 / fan_in)`.
    pub fn uniform<R: Rng>(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = (1.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        Self::new(name, shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut [f64] {
        &mut self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Adds this parameter's entry from `grads`, if any.
    pub fn accumulate(&mut self, grads: &Gradients) {
        if let Some(g) = grads.param(self.id) {
            self.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&Parameter));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter));

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn accumulate(&mut self, grads: &Gradients) {
        self.visit_mut(&mut |p| p.accumulate(grads));
    }
}

impl Module for Parameter {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(self)
    }
}

impl<M: Module> Module for Vec<M> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.iter().for_each(|m| m.visit(f))
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.iter_mut().for_each(|m| m.visit_mut(f))
    }
}

impl<M: Module> Module for Option<M> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        if let Some(m) = self {
            m.visit(f)
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        if let Some(m) = self {
            m.visit_mut(f)
        }
    }
}
