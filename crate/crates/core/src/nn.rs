//! Multilayer perceptron forward map and reverse-mode gradients.
//!
//! Parameters live in one flat vector, layer-major, with each layer's weight
//! matrix (row-major, `fan_out x fan_in`) followed by its bias vector. Every
//! other module (calibration records, emulator inputs, chain traces) shares this
//! layout.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use rand::{Rng, RngCore};

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => math::tanh(z),
            Activation::Sigmoid => math::sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = math::tanh(z);
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = math::sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OutputActivation {
    Identity,
    Softmax,
}

/// Network architecture.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    output: OutputActivation,
}

impl MlpSpec {
    /// `layer_sizes` runs from input width to output width; `activations` has
    /// one entry per hidden layer.
    pub fn new(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        output: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        ensure_len("hidden activations", layer_sizes.len() - 2, activations.len())?;
        Ok(Self {
            layer_sizes,
            activations,
            output,
        })
    }

    /// Same activation on every hidden layer.
    pub fn uniform(
        layer_sizes: Vec<usize>,
        activation: Activation,
        output: OutputActivation,
    ) -> Result<Self> {
        let hidden = layer_sizes.len().saturating_sub(2);
        Self::new(layer_sizes, vec![activation; hidden], output)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Offset of layer `l`'s weights (0-based affine layer index).
    fn layer_offset(&self, l: usize) -> usize {
        self.layer_sizes[..=l]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Activation following affine layer `l`; `None` for the output layer.
    fn hidden_activation(&self, l: usize) -> Option<Activation> {
        self.activations.get(l).copied()
    }

    /// Borrowed weight/bias views of layer `l`.
    pub fn layer<'a>(&self, theta: &'a [f64], l: usize) -> LayerView<'a> {
        let fan_in = self.layer_sizes[l];
        let fan_out = self.layer_sizes[l + 1];
        let off = self.layer_offset(l);
        let w_end = off + fan_in * fan_out;
        LayerView {
            fan_in,
            fan_out,
            weights: &theta[off..w_end],
            biases: &theta[w_end..w_end + fan_out],
        }
    }

    /// Zero-mean Gaussian initialization with variance `gain / fan_in` on weights
    /// and zero biases.
    pub fn init_scaled<R: Rng + ?Sized>(&self, gain: f64, rng: &mut R) -> ParamVector {
        let mut v = Vec::with_capacity(self.param_count());
        for w in self.layer_sizes.windows(2) {
            let sd = math::sqrt(gain / w[0] as f64);
            for _ in 0..w[0] * w[1] {
                v.push(sd * standard_normal(rng));
            }
            v.extend(core::iter::repeat_n(0.0, w[1]));
        }
        ParamVector(v)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        ensure_len("parameter vector", self.param_count(), theta.len())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        ensure_len("input columns", self.input_dim(), x.cols())
    }
}

/// One affine layer inside a flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

/// Flat parameter point, layout described at module level.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// Splits into per-layer `(weights, biases)`.
    pub fn unflatten(&self, spec: &MlpSpec) -> Result<Vec<(Matrix, Vec<f64>)>> {
        spec.check_theta(&self.0)?;
        (0..spec.depth())
            .map(|l| {
                let view = spec.layer(&self.0, l);
                Ok((
                    Matrix::from_vec(view.fan_out, view.fan_in, view.weights.to_vec())?,
                    view.biases.to_vec(),
                ))
            })
            .collect()
    }

    pub fn flatten(layers: &[(Matrix, Vec<f64>)]) -> Self {
        let mut v = Vec::new();
        for (w, b) in layers {
            v.extend_from_slice(w.as_slice());
            v.extend_from_slice(b);
        }
        Self(v)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Which layer inputs receive (inverted) dropout.
///
/// Index `k` refers to the activation entering affine layer `k`, so `0` is the
/// network input and `1` the output of the first hidden layer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dropout {
    pub rate: f64,
    pub layer_inputs: Vec<usize>,
}

impl Dropout {
    pub fn none() -> Self {
        Self {
            rate: 0.0,
            layer_inputs: Vec::new(),
        }
    }

    /// Input layer and first hidden layer.
    pub fn input_and_first_hidden(rate: f64) -> Self {
        Self {
            rate,
            layer_inputs: vec![0, 1],
        }
    }

    /// Every hidden layer output, network input excluded.
    pub fn hidden(spec: &MlpSpec, rate: f64) -> Self {
        Self {
            rate,
            layer_inputs: (1..spec.depth()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    fn active_at(&self, k: usize) -> bool {
        self.rate > 0.0 && self.layer_inputs.contains(&k)
    }
}

/// Intermediate values kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Activation entering each affine layer, after any dropout mask.
    layer_inputs: Vec<Matrix>,
    /// Pre-activation of each affine layer.
    pre_activations: Vec<Matrix>,
    /// Dropout scale per entry (0 or 1/(1-p)) for masked layer inputs.
    masks: Vec<Option<Vec<f64>>>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// Output-layer pre-activation (logits for softmax networks).
    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().unwrap()
    }

    pub fn into_output(self) -> Matrix {
        self.output
    }
}

fn affine(view: &LayerView<'_>, input: &Matrix) -> Matrix {
    let n = input.rows();
    let mut z = Matrix::zeros(n, view.fan_out);
    for i in 0..n {
        let a = input.row(i);
        let zi = z.row_mut(i);
        for (j, zij) in zi.iter_mut().enumerate() {
            let w = &view.weights[j * view.fan_in..(j + 1) * view.fan_in];
            *zij = view.biases[j] + math::dot(w, a);
        }
    }
    z
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn forward_impl(
    spec: &MlpSpec,
    theta: &[f64],
    x: &Matrix,
    dropout: Option<(&Dropout, &mut dyn RngCore)>,
) -> Result<ForwardCache> {
    spec.check_theta(theta)?;
    spec.check_input(x)?;
    let depth = spec.depth();
    let mut layer_inputs = Vec::with_capacity(depth);
    let mut pre_activations = Vec::with_capacity(depth);
    let mut masks = Vec::with_capacity(depth);
    let mut current = x.clone();
    let mut dropout = dropout;
    for l in 0..depth {
        let mask = match dropout.as_mut() {
            Some((plan, rng)) if plan.active_at(l) => {
                let keep = 1.0 - plan.rate;
                let scale = 1.0 / keep;
                let m: Vec<f64> = (0..current.as_slice().len())
                    .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                    .collect();
                for (v, s) in current.as_mut_slice().iter_mut().zip(&m) {
                    *v *= s;
                }
                Some(m)
            }
            _ => None,
        };
        let view = spec.layer(theta, l);
        let z = affine(&view, &current);
        let next = match spec.hidden_activation(l) {
            Some(act) => {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                a
            }
            None => {
                let mut out = z.clone();
                if spec.output == OutputActivation::Softmax {
                    for i in 0..out.rows() {
                        softmax_in_place(out.row_mut(i));
                    }
                }
                out
            }
        };
        layer_inputs.push(current);
        pre_activations.push(z);
        masks.push(mask);
        current = next;
    }
    Ok(ForwardCache {
        layer_inputs,
        pre_activations,
        masks,
        output: current,
    })
}

/// `G(X; theta)`: one output row per input row.
pub fn forward(spec: &MlpSpec, theta: &[f64], x: &Matrix) -> Result<Matrix> {
    forward_cached(spec, theta, x).map(ForwardCache::into_output)
}

/// Forward pass that keeps what back-propagation needs.
pub fn forward_cached(spec: &MlpSpec, theta: &[f64], x: &Matrix) -> Result<ForwardCache> {
    forward_impl(spec, theta, x, None)
}

/// Forward pass with fresh dropout masks drawn from `rng`.
pub fn forward_dropout<R: Rng + ?Sized>(
    spec: &MlpSpec,
    theta: &[f64],
    x: &Matrix,
    dropout: &Dropout,
    rng: &mut R,
) -> Result<ForwardCache> {
    dropout.validate()?;
    let mut rng = rng;
    forward_impl(spec, theta, x, Some((dropout, &mut rng)))
}

/// Accumulates `d loss / d theta` into `grad` given `d loss / d z_out`, the
/// gradient with respect to the output layer's pre-activation.
pub fn backward(
    spec: &MlpSpec,
    theta: &[f64],
    cache: &ForwardCache,
    dz_out: &Matrix,
    grad: &mut [f64],
) -> Result<()> {
    ensure_len("gradient buffer", theta.len(), grad.len())?;
    backward_impl(spec, theta, cache, dz_out, Some(grad), false).map(|_| ())
}

/// `d loss / d X` given `d loss / d z_out`; one row per input row.
pub fn backward_input(
    spec: &MlpSpec,
    theta: &[f64],
    cache: &ForwardCache,
    dz_out: &Matrix,
) -> Result<Matrix> {
    backward_impl(spec, theta, cache, dz_out, None, true)
        .map(|m| m.expect("input gradient requested"))
}

fn backward_impl(
    spec: &MlpSpec,
    theta: &[f64],
    cache: &ForwardCache,
    dz_out: &Matrix,
    mut grad: Option<&mut [f64]>,
    want_input: bool,
) -> Result<Option<Matrix>> {
    spec.check_theta(theta)?;
    let depth = spec.depth();
    let n = cache.output.rows();
    ensure_len("output gradient rows", n, dz_out.rows())?;
    ensure_len("output gradient cols", spec.output_dim(), dz_out.cols())?;
    let mut dz = dz_out.clone();
    for l in (0..depth).rev() {
        let view = spec.layer(theta, l);
        if let Some(grad) = grad.as_deref_mut() {
            let off = spec.layer_offset(l);
            let input = &cache.layer_inputs[l];
            let (gw, rest) = grad[off..].split_at_mut(view.fan_in * view.fan_out);
            let gb = &mut rest[..view.fan_out];
            for i in 0..n {
                let dzi = dz.row(i);
                let ai = input.row(i);
                for (j, &d) in dzi.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[j] += d;
                    let row = &mut gw[j * view.fan_in..(j + 1) * view.fan_in];
                    for (g, a) in row.iter_mut().zip(ai) {
                        *g += d * a;
                    }
                }
            }
        }
        if l == 0 && !want_input {
            return Ok(None);
        }
        let mut next = Matrix::zeros(n, view.fan_in);
        for i in 0..n {
            let dzi = dz.row(i);
            let out = next.row_mut(i);
            for (j, &d) in dzi.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let w = &view.weights[j * view.fan_in..(j + 1) * view.fan_in];
                for (o, wk) in out.iter_mut().zip(w) {
                    *o += d * wk;
                }
            }
        }
        if l > 0 {
            let act = spec
                .hidden_activation(l - 1)
                .expect("layers below the output carry an activation");
            let prev_z = &cache.pre_activations[l - 1];
            for i in 0..n {
                let zrow = prev_z.row(i);
                for (k, o) in next.row_mut(i).iter_mut().enumerate() {
                    *o *= act.derivative(zrow[k]);
                }
            }
        }
        if let Some(mask) = &cache.masks[l] {
            for (o, s) in next.as_mut_slice().iter_mut().zip(mask) {
                *o *= s;
            }
        }
        dz = next;
    }
    Ok(Some(dz))
}

/// Maps `d loss / d output` to `d loss / d z_out` through the output activation.
pub fn output_grad_to_logit_grad(spec: &MlpSpec, cache: &ForwardCache, d_out: &mut Matrix) {
    if spec.output == OutputActivation::Softmax {
        for i in 0..d_out.rows() {
            let p = cache.output.row(i);
            let g = d_out.row_mut(i);
            let gp = math::dot(g, p);
            for (gk, pk) in g.iter_mut().zip(p) {
                *gk = pk * (*gk - gp);
            }
        }
    }
}

/// Index reported when a network output turns non-finite.
pub(crate) fn suspect_parameter(theta: &[f64]) -> usize {
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return i;
    }
    theta
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn tiny_relu() -> MlpSpec {
        MlpSpec::uniform(vec![1, 1, 1], Activation::Relu, OutputActivation::Identity).unwrap()
    }

    #[test]
    fn relu_clips_negative_input() {
        let spec = tiny_relu();
        // W1 = 1, b1 = 0, W2 = 1, b2 = 0
        let theta = [1.0, 0.0, 1.0, 0.0];
        let x = Matrix::from_rows(&[[-3.0]]).unwrap();
        let y = forward(&spec, &theta, &x).unwrap();
        assert_eq!(y.as_slice(), &[0.0]);
    }

    #[test]
    fn zero_weights_give_bias_composition() {
        let spec =
            MlpSpec::uniform(vec![3, 2, 2], Activation::Identity, OutputActivation::Identity)
                .unwrap();
        let mut theta = ParamVector::zeros(spec.param_count());
        // layer 0: 6 weights then biases [0.5, -1]; layer 1: 4 weights then biases [2, 3]
        theta[6] = 0.5;
        theta[7] = -1.0;
        theta[12] = 2.0;
        theta[13] = 3.0;
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]).unwrap();
        let y = forward(&spec, &theta, &x).unwrap();
        for i in 0..2 {
            assert_eq!(y.row(i), &[2.0, 3.0]);
        }
    }

    #[test]
    fn param_count_matches_formula() {
        let spec =
            MlpSpec::uniform(vec![10, 16, 1], Activation::Tanh, OutputActivation::Identity)
                .unwrap();
        assert_eq!(spec.param_count(), 10 * 16 + 16 + 16 + 1);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpSpec::uniform(vec![3], Activation::Relu, OutputActivation::Identity).is_err());
        assert!(
            MlpSpec::uniform(vec![3, 0, 1], Activation::Relu, OutputActivation::Identity).is_err()
        );
        let spec = tiny_relu();
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            forward(&spec, &[0.0; 4], &x),
            Err(Error::DimensionMismatch { .. })
        ));
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(forward(&spec, &[0.0; 3], &x).is_err());
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let spec = MlpSpec::uniform(vec![4, 5, 3], Activation::Tanh, OutputActivation::Softmax)
            .unwrap();
        let mut rng = stream(1, 0);
        let theta = spec.init_scaled(25.0, &mut rng);
        let x = Matrix::from_vec(6, 4, (0..24).map(|i| i as f64 - 12.0).collect()).unwrap();
        let y = forward(&spec, &theta, &x).unwrap();
        for i in 0..6 {
            let s: f64 = y.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row(i).iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn zero_rate_dropout_matches_plain_forward() {
        let spec =
            MlpSpec::uniform(vec![3, 4, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut rng = stream(2, 0);
        let theta = spec.init_scaled(2.0, &mut rng);
        let x = Matrix::from_rows(&[[0.1, -0.2, 0.3]]).unwrap();
        let plain = forward(&spec, &theta, &x).unwrap();
        let d = Dropout::input_and_first_hidden(0.0);
        let dropped = forward_dropout(&spec, &theta, &x, &d, &mut rng).unwrap();
        assert_eq!(plain, *dropped.output());
    }
}
