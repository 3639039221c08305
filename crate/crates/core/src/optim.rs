//! First-order optimizers and minibatch scheduling.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math;

/// Plain gradient descent: `theta -= lr * grad`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, theta: &mut [f64], grad: &[f64]) {
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= self.lr * g;
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - math::powi(self.beta1, self.t);
        let c2 = 1.0 - math::powi(self.beta2, self.t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (math::sqrt(vh) + self.eps);
        }
    }
}

/// Either optimizer behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd(o) => o.step(theta, grad),
            Optimizer::Adam(o) => o.step(theta, grad),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Sgd(o) => o.lr = lr,
            Optimizer::Adam(o) => o.lr = lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl OptimizerKind {
    pub fn build(self, dim: usize, lr: f64) -> Optimizer {
        match self {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd { lr }),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(dim, lr)),
        }
    }
}

/// A shuffled partition of `0..n` into batches of `batch` (the last may be short).
/// `batch == 0` or `batch >= n` gives one full batch.
pub fn epoch_batches<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let b = if batch == 0 { n.max(1) } else { batch };
    idx.chunks(b).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut theta = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = theta.clone();
            opt.step(&mut theta, &g);
        }
        assert!(math::norm_sq(&theta) < 1e-6);
    }

    #[test]
    fn batches_cover_everything_once() {
        let b = epoch_batches(10, 3, &mut stream(1, 0));
        assert_eq!(b.len(), 4);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
