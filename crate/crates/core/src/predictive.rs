//! Posterior-predictive summaries shared by every method.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{NoiseModel, Task};
use crate::nn::{self, MlpSpec};
use crate::samplers::ChainTrace;

/// Fraction of a trace dropped as burn-in before prediction.
pub const DEFAULT_BURN_IN: f64 = 0.1;

/// Network outputs on a test design, one matrix per posterior draw
/// (class probabilities for softmax nets).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub draws: Vec<Matrix>,
}

impl PredictiveDraws {
    pub fn from_thetas<'a, I>(spec: &MlpSpec, thetas: I, x: &Matrix) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let draws = thetas
            .into_iter()
            .map(|t| nn::forward(spec, t, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { draws })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.draws.first().map_or(0, Matrix::rows)
    }

    pub fn cols(&self) -> usize {
        self.draws.first().map_or(0, Matrix::cols)
    }

    /// Per-draw values of output `k` at test row `i`.
    pub fn values_at(&self, i: usize, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.get(i, k)).collect()
    }

    pub fn mean(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for d in &self.draws {
            for (a, v) in m.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *a += v;
            }
        }
        let s = self.draws.len().max(1) as f64;
        m.as_mut_slice().iter_mut().for_each(|a| *a /= s);
        m
    }
}

/// Per-test-point predictive mean and central interval; for classification
/// also the argmax label of the mean probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub task: Task,
    pub mean: Matrix,
    pub lower: Matrix,
    pub upper: Matrix,
    pub labels: Option<Vec<usize>>,
    pub level: f64,
}

/// Summarizes draws at central coverage `level`.
///
/// Regression intervals with `noise` are the exact quantiles of the mixture
/// `(1/S) sum_s N(f_s, gamma_k)`; without noise they are type-7 percentiles of
/// the draws.
pub fn summarize(
    draws: &PredictiveDraws,
    task: Task,
    noise: Option<&NoiseModel>,
    level: f64,
) -> Result<PredictiveSummary> {
    if draws.is_empty() {
        return Err(Error::invalid("no posterior draws to summarize"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("interval level must lie in (0, 1)"));
    }
    let (n, q) = (draws.rows(), draws.cols());
    if let Some(nm) = noise {
        ensure_len("noise dimension", q, nm.gamma_diag().len())?;
    }
    let mean = draws.mean();
    let (lo_q, hi_q) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);
    let mut lower = Matrix::zeros(n, q);
    let mut upper = Matrix::zeros(n, q);
    for i in 0..n {
        for k in 0..q {
            let vals = draws.values_at(i, k);
            let (lo, hi) = match (task, noise) {
                (Task::Regression, Some(nm)) => {
                    let sd = math::sqrt(nm.gamma_diag()[k]);
                    (
                        math::normal_mixture_quantile(&vals, sd, lo_q),
                        math::normal_mixture_quantile(&vals, sd, hi_q),
                    )
                }
                _ => (math::quantile(&vals, lo_q), math::quantile(&vals, hi_q)),
            };
            lower.set(i, k, lo);
            upper.set(i, k, hi);
        }
    }
    let labels = (task == Task::Classification).then(|| {
        (0..n)
            .map(|i| {
                mean.row(i)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
                    .0
            })
            .collect()
    });
    Ok(PredictiveSummary {
        task,
        mean,
        lower,
        upper,
        labels,
        level,
    })
}

/// Drops `burn_in` of the trace and summarizes predictions on `x_test` at 95%.
pub fn posterior_predictive(
    spec: &MlpSpec,
    trace: &ChainTrace,
    x_test: &Matrix,
    noise: Option<&NoiseModel>,
    task: Task,
    burn_in: f64,
) -> Result<(PredictiveDraws, PredictiveSummary)> {
    let kept = trace.without_burn_in(burn_in);
    if kept.is_empty() {
        return Err(Error::invalid("trace is empty after burn-in"));
    }
    let draws = PredictiveDraws::from_thetas(spec, kept.samples(), x_test)?;
    let summary = summarize(&draws, task, noise, 0.95)?;
    Ok((draws, summary))
}

/// Summary with zero-width intervals for a single point estimate.
pub fn point_summary(spec: &MlpSpec, theta: &[f64], x: &Matrix, task: Task) -> Result<PredictiveSummary> {
    let draws = PredictiveDraws {
        draws: vec![nn::forward(spec, theta, x)?],
    };
    summarize(&draws, task, None, 0.95)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(values: &[f64]) -> PredictiveDraws {
        PredictiveDraws {
            draws: values
                .iter()
                .map(|&v| Matrix::from_vec(1, 1, vec![v]).unwrap())
                .collect(),
        }
    }

    #[test]
    fn two_draws_without_noise() {
        let s = summarize(&draws(&[0.0, 1.0]), Task::Regression, None, 0.95).unwrap();
        assert_eq!(s.mean.get(0, 0), 0.5);
        // Type-7: q * (n - 1) = 0.025 and 0.975.
        assert!((s.lower.get(0, 0) - 0.025).abs() < 1e-15);
        assert!((s.upper.get(0, 0) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn single_draw_gives_noise_quantiles() {
        let noise = NoiseModel::isotropic(4.0, 1).unwrap();
        let s = summarize(&draws(&[1.0]), Task::Regression, Some(&noise), 0.95).unwrap();
        assert!((s.lower.get(0, 0) - (1.0 - 2.0 * 1.959_963_985)).abs() < 1e-6);
        assert!((s.upper.get(0, 0) - (1.0 + 2.0 * 1.959_963_985)).abs() < 1e-6);
    }

    #[test]
    fn empty_rejected() {
        assert!(summarize(&draws(&[]), Task::Regression, None, 0.95).is_err());
    }
}
