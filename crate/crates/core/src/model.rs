//! Datasets, observation noise, the Gaussian prior and the BNN potential.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::nn::{self, MlpSpec, OutputActivation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Task {
    Regression,
    Classification,
}

/// Inputs, targets and (for classification) integer labels with one-hot `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub labels: Option<Vec<usize>>,
    pub task: Task,
}

impl Dataset {
    pub fn regression(x: Matrix, y: Matrix) -> Result<Self> {
        ensure_len("target rows", x.rows(), y.rows())?;
        Ok(Self {
            x,
            y,
            labels: None,
            task: Task::Regression,
        })
    }

    /// Builds one-hot targets from labels in `0..classes`.
    pub fn classification(x: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        ensure_len("label count", x.rows(), labels.len())?;
        if classes < 2 {
            return Err(Error::invalid("classification needs at least two classes"));
        }
        let mut y = Matrix::zeros(labels.len(), classes);
        for (i, &c) in labels.iter().enumerate() {
            if c >= classes {
                return Err(Error::invalid("label out of range"));
            }
            y.set(i, c, 1.0);
        }
        Ok(Self {
            x,
            y,
            labels: Some(labels),
            task: Task::Classification,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            task: self.task,
        }
    }
}

/// A dataset plus a disjoint train/test partition of its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub data: Dataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn new(data: Dataset, train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let n = data.len();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n || seen[i] {
                return Err(Error::invalid(
                    "train/test indices must be disjoint and in range",
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("train/test indices must cover every row"));
        }
        Ok(Self { data, train, test })
    }

    /// Random partition holding out `test_fraction` of the rows. With labels
    /// the split is stratified: each class contributes its own share.
    pub fn random<R: Rng + ?Sized>(data: Dataset, test_fraction: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::invalid("test fraction must lie in [0, 1)"));
        }
        let groups: Vec<Vec<usize>> = match &data.labels {
            Some(labels) => {
                let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
                let mut g = vec![Vec::new(); classes];
                for (i, &c) in labels.iter().enumerate() {
                    g[c].push(i);
                }
                g
            }
            None => vec![(0..data.len()).collect()],
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for mut g in groups {
            g.shuffle(rng);
            let n_test = math::round(g.len() as f64 * test_fraction) as usize;
            test.extend_from_slice(&g[..n_test]);
            train.extend_from_slice(&g[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Self::new(data, train, test)
    }

    pub fn train_set(&self) -> Dataset {
        self.data.subset(&self.train)
    }

    pub fn test_set(&self) -> Dataset {
        self.data.subset(&self.test)
    }
}

/// Diagonal observation covariance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    gamma_diag: Vec<f64>,
}

impl NoiseModel {
    pub fn new(gamma_diag: Vec<f64>) -> Result<Self> {
        if gamma_diag.is_empty() || gamma_diag.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::invalid("noise variances must be positive and finite"));
        }
        Ok(Self { gamma_diag })
    }

    pub fn isotropic(variance: f64, outputs: usize) -> Result<Self> {
        Self::new(vec![variance; outputs])
    }

    pub fn gamma_diag(&self) -> &[f64] {
        &self.gamma_diag
    }
}

/// Isotropic Gaussian prior `N(0, variance * I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianPriorSpec {
    variance: f64,
}

impl Default for GaussianPriorSpec {
    fn default() -> Self {
        Self { variance: 1.0 }
    }
}

impl GaussianPriorSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid("prior variance must be positive and finite"));
        }
        Ok(Self { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Normalized log density.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let d = theta.len() as f64;
        -0.5 * math::norm_sq(theta) / self.variance - 0.5 * d * (math::LN_2PI + math::ln(self.variance))
    }

    pub fn grad_log_density(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| -t / self.variance).collect()
    }
}

/// How network outputs are scored against targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Likelihood {
    /// `1/2 sum_n r_n^T Gamma^-1 r_n`.
    Gaussian,
    /// `-sum_n sum_k y_nk log p_nk` on softmax outputs, probabilities clamped at 1e-12.
    CrossEntropy,
}

impl Likelihood {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Regression => Likelihood::Gaussian,
            Task::Classification => Likelihood::CrossEntropy,
        }
    }
}

const PROB_FLOOR: f64 = 1e-12;

/// Loss of network outputs against targets, plus its gradient with respect to
/// the outputs when `d_out` is given.
pub(crate) fn score_outputs(
    likelihood: Likelihood,
    gamma: &[f64],
    out: &Matrix,
    y: &Matrix,
    mut d_out: Option<&mut Matrix>,
) -> f64 {
    let mut total = 0.0;
    for i in 0..out.rows() {
        let o = out.row(i);
        let t = y.row(i);
        match likelihood {
            Likelihood::Gaussian => {
                for k in 0..o.len() {
                    let r = o[k] - t[k];
                    total += 0.5 * r * r / gamma[k];
                    if let Some(d) = d_out.as_deref_mut() {
                        d.set(i, k, r / gamma[k]);
                    }
                }
            }
            Likelihood::CrossEntropy => {
                for k in 0..o.len() {
                    if t[k] == 0.0 {
                        if let Some(d) = d_out.as_deref_mut() {
                            d.set(i, k, 0.0);
                        }
                        continue;
                    }
                    let p = o[k];
                    total -= t[k] * math::ln(p.max(PROB_FLOOR));
                    if let Some(d) = d_out.as_deref_mut() {
                        d.set(i, k, if p > PROB_FLOOR { -t[k] / p } else { 0.0 });
                    }
                }
            }
        }
    }
    total
}

/// The BNN posterior over a training set: potential, prior and gradients.
#[derive(Debug, Clone)]
pub struct BnnPosterior<'a> {
    spec: &'a MlpSpec,
    data: &'a Dataset,
    noise: &'a NoiseModel,
    prior: GaussianPriorSpec,
    likelihood: Likelihood,
}

impl<'a> BnnPosterior<'a> {
    pub fn new(
        spec: &'a MlpSpec,
        data: &'a Dataset,
        noise: &'a NoiseModel,
        prior: GaussianPriorSpec,
        likelihood: Likelihood,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("training data is empty"));
        }
        ensure_len("input columns", spec.input_dim(), data.x.cols())?;
        ensure_len("target columns", spec.output_dim(), data.y.cols())?;
        ensure_len("noise dimension", spec.output_dim(), noise.gamma_diag().len())?;
        if likelihood == Likelihood::CrossEntropy
            && spec.output_activation() != OutputActivation::Softmax
        {
            return Err(Error::invalid("cross-entropy needs a softmax output layer"));
        }
        Ok(Self {
            spec,
            data,
            noise,
            prior,
            likelihood,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        self.spec
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn noise(&self) -> &NoiseModel {
        self.noise
    }

    pub fn prior(&self) -> GaussianPriorSpec {
        self.prior
    }

    pub fn likelihood(&self) -> Likelihood {
        self.likelihood
    }

    pub fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn checked(&self, theta: &[f64], value: f64) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NumericOverflow {
                param_index: nn::suspect_parameter(theta),
            })
        }
    }

    /// Likelihood potential `Phi(theta)` over the full training set.
    pub fn potential(&self, theta: &[f64]) -> Result<f64> {
        let out = nn::forward(self.spec, theta, &self.data.x)?;
        let v = score_outputs(
            self.likelihood,
            self.noise.gamma_diag(),
            &out,
            &self.data.y,
            None,
        );
        self.checked(theta, v)
    }

    fn value_and_grad_on(&self, theta: &[f64], x: &Matrix, y: &Matrix) -> Result<(f64, Vec<f64>)> {
        let cache = nn::forward_cached(self.spec, theta, x)?;
        let mut d_out = Matrix::zeros(y.rows(), y.cols());
        let v = score_outputs(
            self.likelihood,
            self.noise.gamma_diag(),
            cache.output(),
            y,
            Some(&mut d_out),
        );
        let v = self.checked(theta, v)?;
        nn::output_grad_to_logit_grad(self.spec, &cache, &mut d_out);
        let mut grad = vec![0.0; theta.len()];
        nn::backward(self.spec, theta, &cache, &d_out, &mut grad)?;
        Ok((v, grad))
    }

    pub fn potential_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.value_and_grad_on(theta, &self.data.x, &self.data.y)
    }

    pub fn grad_potential(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.potential_and_grad(theta).map(|(_, g)| g)
    }

    /// Gradient over `batch` rows; with `rescale` it is multiplied by
    /// `N / |batch|`, an unbiased estimate of the full gradient under uniform
    /// batch sampling.
    pub fn minibatch_grad_potential(
        &self,
        theta: &[f64],
        batch: &[usize],
        rescale: bool,
    ) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::invalid("minibatch is empty"));
        }
        if batch.iter().any(|&i| i >= self.data.len()) {
            return Err(Error::invalid("minibatch index out of range"));
        }
        let x = self.data.x.select_rows(batch);
        let y = self.data.y.select_rows(batch);
        let (_, mut g) = self.value_and_grad_on(theta, &x, &y)?;
        if rescale {
            let s = self.data.len() as f64 / batch.len() as f64;
            g.iter_mut().for_each(|v| *v *= s);
        }
        Ok(g)
    }

    /// Unscaled potential and gradient over `batch` rows only.
    pub fn minibatch_potential_and_grad(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() || batch.iter().any(|&i| i >= self.data.len()) {
            return Err(Error::invalid("minibatch is empty or out of range"));
        }
        let x = self.data.x.select_rows(batch);
        let y = self.data.y.select_rows(batch);
        self.value_and_grad_on(theta, &x, &y)
    }

    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    pub fn grad_log_prior(&self, theta: &[f64]) -> Vec<f64> {
        self.prior.grad_log_density(theta)
    }

    /// `Phi(theta) - log p(theta)`.
    pub fn neg_log_posterior(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.potential(theta)? - self.log_prior(theta))
    }
}
