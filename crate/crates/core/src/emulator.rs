//! DNN emulation of the parameter-to-output map and the emulated potential.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{score_outputs, Likelihood, NoiseModel};
use crate::nn::{self, Activation, Dropout, MlpSpec, OutputActivation};
use crate::optim::epoch_batches;
pub use crate::optim::OptimizerKind;
use crate::rng;
use crate::samplers::{Clock, Target};

/// What the emulator is trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EmulationMode {
    /// Stacked network outputs on a reference subset of the training inputs
    /// (pre-softmax for classification nets).
    #[default]
    Predictions,
    /// The scalar potential itself.
    ScalarPotential,
}

/// Pairs `(theta_j, G(X_ref; theta_j))` recorded during calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub thetas: Matrix,
    pub outputs: Matrix,
    /// Rows of the training set used as the reference design.
    pub ref_indices: Vec<usize>,
    pub mode: EmulationMode,
}

impl CalibrationSet {
    pub fn new(
        thetas: Matrix,
        outputs: Matrix,
        ref_indices: Vec<usize>,
        mode: EmulationMode,
    ) -> Result<Self> {
        if thetas.rows() < 2 {
            return Err(Error::invalid("a calibration set needs at least two pairs"));
        }
        ensure_len("calibration outputs", thetas.rows(), outputs.rows())?;
        if ref_indices.is_empty() {
            return Err(Error::invalid("reference design is empty"));
        }
        Ok(Self {
            thetas,
            outputs,
            ref_indices,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.rows() == 0
    }
}

/// Outputs the calibration records for one parameter vector: the network's
/// output rows on `x_ref` (logits for softmax nets), flattened row-major.
pub fn reference_outputs(spec: &MlpSpec, theta: &[f64], x_ref: &Matrix) -> Result<Vec<f64>> {
    let cache = nn::forward_cached(spec, theta, x_ref)?;
    Ok(cache.logits().as_slice().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EmulatorSpec {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    /// Applied to the input layer and the first hidden layer while training.
    pub dropout_rate: f64,
    pub learning_rate: f64,
    /// Learning rate decays linearly to `learning_rate * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub validation_fraction: f64,
    /// Z-score inputs and outputs using training-pair statistics.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for EmulatorSpec {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![8, 64, 32],
            activation: Activation::Relu,
            epochs: 1000,
            dropout_rate: 0.5,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            validation_fraction: 0.2,
            standardize: true,
            seed: 0,
        }
    }
}

impl EmulatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("emulator needs at least one epoch"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("emulator dropout rate must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) || !(self.final_lr_fraction > 0.0) {
            return Err(Error::invalid("emulator learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

/// A map from parameters to a vector of outputs, optionally differentiable.
pub trait ForwardMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict(&self, theta: &[f64]) -> Result<Vec<f64>>;

    /// Vector-Jacobian product `(d out / d theta)^T v`.
    fn vjp(&self, _theta: &[f64], _v: &[f64]) -> Result<Vec<f64>> {
        Err(Error::GradientUnavailable)
    }
}

impl<F: ForwardMap + ?Sized> ForwardMap for &F {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn predict(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(theta)
    }
    fn vjp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        (**self).vjp(theta, v)
    }
}

/// The true forward map on a reference design; an emulator with zero error.
#[derive(Debug, Clone)]
pub struct ExactForward<'a> {
    pub spec: &'a MlpSpec,
    pub x_ref: Matrix,
}

impl ForwardMap for ExactForward<'_> {
    fn input_dim(&self) -> usize {
        self.spec.param_count()
    }

    fn output_dim(&self) -> usize {
        self.x_ref.rows() * self.spec.output_dim()
    }

    fn predict(&self, theta: &[f64]) -> Result<Vec<f64>> {
        reference_outputs(self.spec, theta, &self.x_ref)
    }

    fn vjp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let cache = nn::forward_cached(self.spec, theta, &self.x_ref)?;
        let dz = Matrix::from_vec(self.x_ref.rows(), self.spec.output_dim(), v.to_vec())?;
        let mut g = vec![0.0; theta.len()];
        nn::backward(self.spec, theta, &cache, &dz, &mut g)?;
        Ok(g)
    }
}

/// Trained emulator `G^e`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmulatorModel {
    pub spec: EmulatorSpec,
    pub net: MlpSpec,
    pub weights: Vec<f64>,
    pub mode: EmulationMode,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    output_shift: Vec<f64>,
    output_scale: f64,
    /// Max over held-out pairs of the sup-norm prediction error.
    pub validation_sup_error: f64,
    pub validation_pairs: usize,
    pub train_seconds: f64,
    /// Mean training loss per epoch (standardized units).
    pub loss_history: Vec<f64>,
}

impl EmulatorModel {
    /// Wraps raw weights with identity scaling.
    pub fn from_weights(net: MlpSpec, weights: Vec<f64>, mode: EmulationMode) -> Result<Self> {
        ensure_len("emulator weights", net.param_count(), weights.len())?;
        let (d, out) = (net.input_dim(), net.output_dim());
        Ok(Self {
            spec: EmulatorSpec {
                hidden_sizes: net.layer_sizes()[1..net.layer_sizes().len() - 1].to_vec(),
                standardize: false,
                ..EmulatorSpec::default()
            },
            net,
            weights,
            mode,
            input_shift: vec![0.0; d],
            input_scale: vec![1.0; d],
            output_shift: vec![0.0; out],
            output_scale: 1.0,
            validation_sup_error: 0.0,
            validation_pairs: 0,
            train_seconds: 0.0,
            loss_history: Vec::new(),
        })
    }

    fn scaled_input(&self, theta: &[f64]) -> Result<Matrix> {
        ensure_len("emulator input", self.net.input_dim(), theta.len())?;
        let row: Vec<f64> = theta
            .iter()
            .zip(&self.input_shift)
            .zip(&self.input_scale)
            .map(|((t, m), s)| (t - m) / s)
            .collect();
        Matrix::from_vec(1, row.len(), row)
    }

    /// Deterministic prediction; dropout is off.
    pub fn emulate_forward(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let x = self.scaled_input(theta)?;
        let out = nn::forward(&self.net, &self.weights, &x)?;
        Ok(out
            .as_slice()
            .iter()
            .zip(&self.output_shift)
            .map(|(o, m)| m + self.output_scale * o)
            .collect())
    }
}

impl ForwardMap for EmulatorModel {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn predict(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.emulate_forward(theta)
    }

    fn vjp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_len("cotangent", self.net.output_dim(), v.len())?;
        let x = self.scaled_input(theta)?;
        let cache = nn::forward_cached(&self.net, &self.weights, &x)?;
        let dz = Matrix::from_vec(1, v.len(), v.iter().map(|g| g * self.output_scale).collect())?;
        let dx = nn::backward_input(&self.net, &self.weights, &cache, &dz)?;
        Ok(dx
            .as_slice()
            .iter()
            .zip(&self.input_scale)
            .map(|(g, s)| g / s)
            .collect())
    }
}

fn column_stats(m: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; m.cols()];
    for &i in rows {
        for (a, v) in mean.iter_mut().zip(m.row(i)) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let mut var = vec![0.0; m.cols()];
    for &i in rows {
        for ((a, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    let sd = var.iter().map(|v| math::sqrt(v / n)).collect();
    (mean, sd)
}

/// Fits the emulator on a random 1 - `validation_fraction` share of the pairs
/// by minibatch descent on mean squared error; the rest are held out for
/// `validation_sup_error`.
pub fn train_emulator(
    cal: &CalibrationSet,
    espec: &EmulatorSpec,
    clock: &dyn Clock,
) -> Result<EmulatorModel> {
    espec.validate()?;
    let start = clock.now();
    let j = cal.len();
    let n_val = if espec.validation_fraction > 0.0 {
        (math::round(j as f64 * espec.validation_fraction) as usize).clamp(1, j - 1)
    } else {
        0
    };
    if j - n_val < 2 && espec.validation_fraction > 0.0 && j < 10 {
        return Err(Error::invalid("need at least 10 calibration pairs to hold some out"));
    }
    let mut split_rng = rng::stream(espec.seed, 0);
    let order = epoch_batches(j, 0, &mut split_rng).concat();
    let (val_idx, train_idx) = order.split_at(n_val);

    let d = cal.thetas.cols();
    let out_dim = cal.outputs.cols();
    let mut sizes = vec![d];
    sizes.extend_from_slice(&espec.hidden_sizes);
    sizes.push(out_dim);
    let net = MlpSpec::uniform(sizes, espec.activation, OutputActivation::Identity)?;

    let (input_shift, input_scale, output_shift, output_scale) = if espec.standardize {
        let (mi, si) = column_stats(&cal.thetas, train_idx);
        let si = si.into_iter().map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        let (mo, so) = column_stats(&cal.outputs, train_idx);
        let rms = math::sqrt(so.iter().map(|s| s * s).sum::<f64>() / out_dim.max(1) as f64);
        (mi, si, mo, if rms > 1e-12 { rms } else { 1.0 })
    } else {
        (vec![0.0; d], vec![1.0; d], vec![0.0; out_dim], 1.0)
    };
    let scale_row = |i: usize| -> (Vec<f64>, Vec<f64>) {
        let x = cal
            .thetas
            .row(i)
            .iter()
            .zip(&input_shift)
            .zip(&input_scale)
            .map(|((t, m), s)| (t - m) / s)
            .collect();
        let y = cal
            .outputs
            .row(i)
            .iter()
            .zip(&output_shift)
            .map(|(o, m)| (o - m) / output_scale)
            .collect();
        (x, y)
    };
    let mut xs = Matrix::zeros(j, d);
    let mut ys = Matrix::zeros(j, out_dim);
    for i in 0..j {
        let (x, y) = scale_row(i);
        xs.row_mut(i).copy_from_slice(&x);
        ys.row_mut(i).copy_from_slice(&y);
    }

    let mut init_rng = rng::stream(espec.seed, 1);
    let gain = if espec.activation == Activation::Relu { 2.0 } else { 1.0 };
    let mut weights = net.init_scaled(gain, &mut init_rng).into_inner();
    // Output layer starts at zero so the untrained emulator is the constant
    // mean map rather than a random function of theta.
    let last = net.depth() - 1;
    let off = net.param_count() - net.layer_sizes()[last] * net.layer_sizes()[last + 1] - out_dim;
    weights[off..].iter_mut().for_each(|w| *w = 0.0);
    let mut opt = espec.optimizer.build(weights.len(), espec.learning_rate);
    let dropout = Dropout::input_and_first_hidden(espec.dropout_rate);
    let mut batch_rng = rng::stream(espec.seed, 2);
    let mut mask_rng = rng::stream(espec.seed, 3);
    let mut grad = vec![0.0; weights.len()];
    let mut loss_history = Vec::with_capacity(espec.epochs);
    for epoch in 0..espec.epochs {
        let frac = if espec.epochs > 1 {
            epoch as f64 / (espec.epochs - 1) as f64
        } else {
            0.0
        };
        opt.set_lr(espec.learning_rate * (1.0 - frac * (1.0 - espec.final_lr_fraction)));
        let mut epoch_loss = 0.0;
        for batch in epoch_batches(train_idx.len(), espec.batch_size, &mut batch_rng) {
            let rows: Vec<usize> = batch.iter().map(|&b| train_idx[b]).collect();
            let xb = xs.select_rows(&rows);
            let yb = ys.select_rows(&rows);
            let cache = nn::forward_dropout(&net, &weights, &xb, &dropout, &mut mask_rng)?;
            let denom = (rows.len() * out_dim) as f64;
            let mut dz = Matrix::zeros(rows.len(), out_dim);
            let mut loss = 0.0;
            for ((g, o), t) in dz
                .as_mut_slice()
                .iter_mut()
                .zip(cache.output().as_slice())
                .zip(yb.as_slice())
            {
                let r = o - t;
                loss += r * r;
                *g = 2.0 * r / denom;
            }
            loss /= denom;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * rows.len() as f64;
            grad.iter_mut().for_each(|g| *g = 0.0);
            nn::backward(&net, &weights, &cache, &dz, &mut grad)?;
            opt.step(&mut weights, &grad);
        }
        loss_history.push(epoch_loss / train_idx.len() as f64);
    }

    let mut model = EmulatorModel {
        spec: espec.clone(),
        net,
        weights,
        mode: cal.mode,
        input_shift,
        input_scale,
        output_shift,
        output_scale,
        validation_sup_error: 0.0,
        validation_pairs: n_val,
        train_seconds: 0.0,
        loss_history,
    };
    let mut sup = 0.0f64;
    for &i in val_idx {
        let pred = model.emulate_forward(cal.thetas.row(i))?;
        for (p, t) in pred.iter().zip(cal.outputs.row(i)) {
            sup = sup.max((p - t).abs());
        }
    }
    model.validation_sup_error = sup;
    model.train_seconds = clock.now() - start;
    Ok(model)
}

/// `Phi^e`: the likelihood potential evaluated on emulated outputs.
///
/// In prediction mode the emulated outputs on the reference rows are scored
/// against `y_ref` and multiplied by `rescale` (usually `N / N_ref`); in
/// scalar mode the emulator output is the potential.
#[derive(Debug, Clone)]
pub struct EmulatedTarget<F> {
    pub map: F,
    pub mode: EmulationMode,
    pub y_ref: Matrix,
    pub noise: NoiseModel,
    pub likelihood: Likelihood,
    /// Apply softmax to emulated rows before scoring.
    pub softmax: bool,
    pub rescale: f64,
    pub prior_variance: f64,
}

impl<F: ForwardMap> EmulatedTarget<F> {
    /// Potential and, when asked, its gradient.
    pub fn potential_with_grad(&self, theta: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let raw = self.map.predict(theta)?;
        match self.mode {
            EmulationMode::ScalarPotential => {
                ensure_len("scalar emulator output", 1, raw.len())?;
                let g = if want_grad {
                    Some(self.map.vjp(theta, &[1.0])?)
                } else {
                    None
                };
                Ok((raw[0], g))
            }
            EmulationMode::Predictions => {
                let q = self.y_ref.cols();
                let mut out = Matrix::from_vec(self.y_ref.rows(), q, raw)?;
                if self.softmax {
                    for i in 0..out.rows() {
                        nn::softmax_in_place(out.row_mut(i));
                    }
                }
                let mut d_out = want_grad.then(|| Matrix::zeros(out.rows(), q));
                let phi = score_outputs(
                    self.likelihood,
                    self.noise.gamma_diag(),
                    &out,
                    &self.y_ref,
                    d_out.as_mut(),
                );
                let phi = phi * self.rescale;
                let g = match d_out {
                    Some(mut d) => {
                        if self.softmax {
                            for i in 0..d.rows() {
                                let p = out.row(i);
                                let gi = d.row_mut(i);
                                let gp = math::dot(gi, p);
                                for (gk, pk) in gi.iter_mut().zip(p) {
                                    *gk = pk * (*gk - gp);
                                }
                            }
                        }
                        let v: Vec<f64> = d.as_slice().iter().map(|x| x * self.rescale).collect();
                        Some(self.map.vjp(theta, &v)?)
                    }
                    None => None,
                };
                Ok((phi, g))
            }
        }
    }

    pub fn emulated_potential(&self, theta: &[f64]) -> Result<f64> {
        self.potential_with_grad(theta, false).map(|(p, _)| p)
    }
}

impl<F: ForwardMap> Target for EmulatedTarget<F> {
    fn dim(&self) -> usize {
        self.map.input_dim()
    }

    fn potential(&self, theta: &[f64]) -> f64 {
        match self.emulated_potential(theta) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    fn neg_log_prior(&self, theta: &[f64]) -> f64 {
        0.5 * math::norm_sq(theta) / self.prior_variance
    }

    fn grad_neg_log_posterior(&self, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        let (_, g) = self.potential_with_grad(theta, true)?;
        let g = g.expect("gradient requested");
        for ((o, gi), t) in grad.iter_mut().zip(g).zip(theta) {
            *o = gi + t / self.prior_variance;
        }
        Ok(())
    }

    fn prior_variance(&self) -> Option<f64> {
        Some(self.prior_variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::NoClock;

    fn linear_set(j: usize) -> CalibrationSet {
        let mut r = rng::stream(5, 0);
        let a = [[1.0, -0.5, 0.2, 0.0, 0.3], [0.0, 1.0, 1.0, -1.0, 0.5], [0.4, 0.0, -0.2, 0.1, 1.0]];
        let mut thetas = Matrix::zeros(j, 5);
        rng::fill_standard_normal(&mut r, thetas.as_mut_slice());
        let mut outputs = Matrix::zeros(j, 3);
        for i in 0..j {
            for k in 0..3 {
                outputs.set(i, k, math::dot(&a[k], thetas.row(i)));
            }
        }
        CalibrationSet::new(thetas, outputs, vec![0], EmulationMode::Predictions).unwrap()
    }

    #[test]
    fn constant_outputs_are_learned() {
        let mut cal = linear_set(50);
        cal.outputs.as_mut_slice().iter_mut().for_each(|v| *v = 2.5);
        let spec = EmulatorSpec {
            hidden_sizes: vec![16],
            dropout_rate: 0.0,
            ..EmulatorSpec::default()
        };
        let m = train_emulator(&cal, &spec, &NoClock).unwrap();
        assert!(m.validation_sup_error < 1e-3, "{}", m.validation_sup_error);
    }

    #[test]
    fn linear_map_is_learned() {
        let cal = linear_set(400);
        let spec = EmulatorSpec {
            hidden_sizes: vec![32],
            dropout_rate: 0.0,
            learning_rate: 3e-3,
            final_lr_fraction: 0.02,
            epochs: 1500,
            ..EmulatorSpec::default()
        };
        let m = train_emulator(&cal, &spec, &NoClock).unwrap();
        assert!(m.validation_sup_error < 0.05, "{}", m.validation_sup_error);
    }

    #[test]
    fn prediction_is_deterministic() {
        let cal = linear_set(20);
        let spec = EmulatorSpec {
            epochs: 5,
            ..EmulatorSpec::default()
        };
        let m = train_emulator(&cal, &spec, &NoClock).unwrap();
        let t = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(m.emulate_forward(&t).unwrap(), m.emulate_forward(&t).unwrap());
    }

    #[test]
    fn zero_weights_give_bias() {
        let net = MlpSpec::uniform(vec![2, 3, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut w = vec![0.0; net.param_count()];
        let n = w.len();
        w[n - 2] = 1.5;
        w[n - 1] = -0.5;
        let m = EmulatorModel::from_weights(net, w, EmulationMode::Predictions).unwrap();
        assert_eq!(m.emulate_forward(&[3.0, 4.0]).unwrap(), vec![1.5, -0.5]);
    }

    #[test]
    fn emulator_vjp_matches_finite_differences() {
        let net = MlpSpec::uniform(vec![3, 5, 2], Activation::Tanh, OutputActivation::Identity).unwrap();
        let w = net.init_scaled(1.0, &mut rng::stream(2, 0)).into_inner();
        let m = EmulatorModel::from_weights(net, w, EmulationMode::Predictions).unwrap();
        let theta = [0.3, -0.2, 0.7];
        let v = [0.5, -1.5];
        let g = m.vjp(&theta, &v).unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut tp = theta;
            tp[i] += h;
            let mut tm = theta;
            tm[i] -= h;
            let fp = math::dot(&m.emulate_forward(&tp).unwrap(), &v);
            let fm = math::dot(&m.emulate_forward(&tm).unwrap(), &v);
            assert!(((fp - fm) / (2.0 * h) - g[i]).abs() < 1e-7);
        }
    }
}
