use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};

use super::Tensor;

/// A learnable tensor and its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Param::new(name, Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn accumulate(&mut self, grad: &[f64]) {
        debug_assert_eq!(grad.len(), self.grad.len());
        for (g, d) in self.grad.data_mut().iter_mut().zip(grad) {
            *g += d;
        }
    }
}

/// `p ← p − lr·g` for every parameter, then zero the gradients.
///
/// Nothing is updated if any gradient is non-finite.
pub fn sgd_step<'a>(params: impl IntoIterator<Item = &'a mut Param>, lr: f64) -> Result<()> {
    let mut params: Vec<&mut Param> = params.into_iter().collect();
    if let Some(bad) = params.iter().find(|p| p.grad.data().iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFiniteGradient(bad.name.clone()));
    }
    for p in params.iter_mut() {
        let Param { value, grad, .. } = &mut **p;
        for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
            *v -= lr * g;
        }
        p.zero_grad();
    }
    Ok(())
}

/// Seeded Glorot-uniform initialiser.
pub struct Initializer {
    rng: SplitMix64,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Uniform in ±√(6 / (fan_in + fan_out)).
    pub fn glorot(&mut self, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> Param {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-limit..limit)).collect();
        Param::new(name, Tensor::new(shape.to_vec(), data).expect("shape matches"))
    }
}
