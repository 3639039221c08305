//! Synthetic regression and classification data in the style of the
//! scikit-learn `make_regression` / `make_classification` recipes.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{Dataset, DatasetSplit, Task};
use crate::rng::{self, standard_normal};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticSpec {
    pub task: Task,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    /// Raw-scale noise std (regression) before the target is standardized.
    pub noise_std: f64,
    /// Half the distance between cluster centers per informative axis.
    pub class_sep: f64,
    pub n_classes: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::regression(2000, 10)
    }
}

impl SyntheticSpec {
    pub fn regression(n_samples: usize, n_features: usize) -> Self {
        Self {
            task: Task::Regression,
            n_samples,
            n_features,
            n_informative: n_features.min(5),
            noise_std: 0.5,
            class_sep: 1.0,
            n_classes: 2,
            test_fraction: 0.2,
            seed: 0,
        }
    }

    pub fn classification(n_samples: usize, n_features: usize) -> Self {
        Self {
            task: Task::Classification,
            n_informative: n_features.min(5),
            ..Self::regression(n_samples, n_features)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::invalid("synthetic data needs at least 10 samples"));
        }
        if self.n_features == 0 || self.n_informative > self.n_features {
            return Err(Error::invalid("need 1 <= n_features and n_informative <= n_features"));
        }
        if !(self.noise_std >= 0.0) || !(self.class_sep >= 0.0) {
            return Err(Error::invalid("noise_std and class_sep must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::invalid("test fraction must lie in [0, 1)"));
        }
        if self.task == Task::Classification {
            if self.n_classes < 2 {
                return Err(Error::invalid("need at least two classes"));
            }
            if self.n_informative == 0 || self.n_classes > 1usize << self.n_informative.min(20) {
                return Err(Error::invalid("too few informative features for the class count"));
            }
        }
        Ok(())
    }
}

/// Generated data and the noise variance of the (standardized) target.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub split: DatasetSplit,
    /// Observation noise variance in the units the target is stored in; 0 for
    /// classification.
    pub noise_variance: f64,
    /// True coefficients on the raw scale (regression only).
    pub coefficients: Vec<f64>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    match spec.task {
        Task::Regression => gen_regression(spec),
        Task::Classification => gen_classification(spec),
    }
}

/// `X ~ N(0, I)`, `y = X w + eps` with `n_informative` nonzero entries of `w`.
/// Feature columns and the target are z-scored.
pub fn gen_regression(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, 0);
    let (n, p) = (spec.n_samples, spec.n_features);
    let mut informative: Vec<usize> = (0..p).collect();
    informative.shuffle(&mut rng);
    informative.truncate(spec.n_informative);
    let mut w = vec![0.0; p];
    for &j in &informative {
        w[j] = standard_normal(&mut rng);
    }
    let mut x = Matrix::zeros(n, p);
    rng::fill_standard_normal(&mut rng, x.as_mut_slice());
    let mut y: Vec<f64> = (0..n)
        .map(|i| math::dot(x.row(i), &w) + spec.noise_std * standard_normal(&mut rng))
        .collect();
    standardize_columns(&mut x);
    let (my, sy) = mean_std(&y);
    let scale = if sy > 0.0 { sy } else { 1.0 };
    y.iter_mut().for_each(|v| *v = (*v - my) / scale);
    let noise_variance = spec.noise_std * spec.noise_std / (scale * scale);
    let y = Matrix::from_vec(n, 1, y)?;
    let data = Dataset::regression(x, y)?;
    let split = DatasetSplit::random(data, spec.test_fraction, &mut rng::stream(spec.seed, 1))?;
    Ok(SyntheticData {
        split,
        noise_variance,
        coefficients: w,
    })
}

/// Balanced Gaussian clusters at hypercube vertices `+-class_sep` on the
/// informative axes; the other features are pure noise.
pub fn gen_classification(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, 0);
    let (n, p, k) = (spec.n_samples, spec.n_features, spec.n_classes);
    let mut informative: Vec<usize> = (0..p).collect();
    informative.shuffle(&mut rng);
    informative.truncate(spec.n_informative);
    // Distinct vertices per class, in shuffled order.
    let mut vertices: Vec<usize> = (0..(1usize << spec.n_informative.min(20))).collect();
    vertices.shuffle(&mut rng);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut x = Matrix::zeros(n, p);
    rng::fill_standard_normal(&mut rng, x.as_mut_slice());
    for (i, &c) in labels.iter().enumerate() {
        let v = vertices[c];
        let row = x.row_mut(i);
        for (bit, &j) in informative.iter().enumerate() {
            let sign = if bit < 20 && (v >> bit) & 1 == 1 { 1.0 } else { -1.0 };
            row[j] += sign * spec.class_sep;
        }
    }
    standardize_columns(&mut x);
    let data = Dataset::classification(x, labels, k)?;
    let split = DatasetSplit::random(data, spec.test_fraction, &mut rng::stream(spec.seed, 1))?;
    Ok(SyntheticData {
        split,
        noise_variance: 0.0,
        coefficients: Vec::new(),
    })
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = math::mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len().max(1) as f64;
    (m, math::sqrt(var))
}

/// Z-scores every column in place (constant columns are only centered).
/// Returns the `(mean, std)` pairs used.
pub fn standardize_columns(x: &mut Matrix) -> Vec<(f64, f64)> {
    let stats: Vec<(f64, f64)> = (0..x.cols()).map(|j| mean_std(&x.column(j))).collect();
    apply_standardization(x, &stats);
    stats
}

pub fn apply_standardization(x: &mut Matrix, stats: &[(f64, f64)]) {
    for i in 0..x.rows() {
        for (v, &(m, s)) in x.row_mut(i).iter_mut().zip(stats) {
            *v = if s > 0.0 { (*v - m) / s } else { *v - m };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::least_squares;

    #[test]
    fn noiseless_regression_is_exactly_linear() {
        let spec = SyntheticSpec {
            noise_std: 0.0,
            n_samples: 200,
            ..SyntheticSpec::regression(200, 6)
        };
        let d = gen_regression(&spec).unwrap();
        let data = &d.split.data;
        let y = data.y.column(0);
        let (b, c) = least_squares(&data.x, &y, 0.0).unwrap();
        let mse = (0..data.len())
            .map(|i| {
                let r = math::dot(data.x.row(i), &b) + c - y[i];
                r * r
            })
            .sum::<f64>()
            / data.len() as f64;
        assert!(mse < 1e-10, "{mse}");
        assert_eq!(d.noise_variance, 0.0);
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec::classification(100, 4);
        let a = gen_classification(&spec).unwrap();
        let b = gen_classification(&spec).unwrap();
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn labels_balanced() {
        let spec = SyntheticSpec::classification(101, 4);
        let d = gen_classification(&spec).unwrap();
        let ones = d.split.data.labels.as_ref().unwrap().iter().filter(|&&l| l == 1).count();
        assert!((ones as i64 - (101 - ones) as i64).abs() <= 1);
    }

    #[test]
    fn standardized_columns() {
        let d = gen_regression(&SyntheticSpec::regression(500, 3)).unwrap();
        for j in 0..3 {
            let (m, s) = mean_std(&d.split.data.x.column(j));
            assert!(m.abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = SyntheticSpec {
            n_informative: 7,
            ..SyntheticSpec::regression(100, 3)
        };
        assert!(gen_regression(&spec).is_err());
        assert!(gen_regression(&SyntheticSpec::regression(5, 3)).is_err());
    }
}
