//! Non-CES comparison methods: point DNN, deep ensemble, mean-field VI,
//! Laplace (Gaussian or L1 MAP), MC-dropout and diagonal SWAG.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{score_outputs, BnnPosterior, GaussianPriorSpec, Likelihood};
use crate::nn::{self, Dropout, MlpSpec, OutputActivation, ParamVector};
use crate::optim::{epoch_batches, OptimizerKind};
use crate::predictive::PredictiveDraws;
use crate::rng::{self, standard_normal};

/// Training loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Initial weights are `N(0, init_gain / fan_in)`.
    pub init_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            init_gain: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.init_gain >= 0.0) {
            return Err(Error::invalid("init gain must be non-negative"));
        }
        Ok(())
    }
}

/// Term added to the potential during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    None,
    /// `|theta|^2 / (2 variance)`, i.e. MAP under the Gaussian prior.
    Gaussian(f64),
    /// `lambda * |theta|_1`.
    L1(f64),
}

impl Penalty {
    fn value(self, theta: &[f64]) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::Gaussian(v) => 0.5 * math::norm_sq(theta) / v,
            Penalty::L1(l) => l * theta.iter().map(|t| t.abs()).sum::<f64>(),
        }
    }

    fn add_grad(self, theta: &[f64], scale: f64, grad: &mut [f64]) {
        match self {
            Penalty::None => {}
            Penalty::Gaussian(v) => {
                for (g, t) in grad.iter_mut().zip(theta) {
                    *g += scale * t / v;
                }
            }
            Penalty::L1(l) => {
                for (g, t) in grad.iter_mut().zip(theta) {
                    if *t != 0.0 {
                        *g += scale * l * t.signum();
                    }
                }
            }
        }
    }
}

/// Loss and gradient on one minibatch, optionally with dropout masks.
fn batch_value_and_grad<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    theta: &[f64],
    batch: &[usize],
    dropout: Option<(&Dropout, &mut R)>,
) -> Result<(f64, Vec<f64>)> {
    match dropout {
        None => post.minibatch_potential_and_grad(theta, batch),
        Some((mask, rng)) => {
            let spec = post.spec();
            let x = post.data().x.select_rows(batch);
            let y = post.data().y.select_rows(batch);
            let cache = nn::forward_dropout(spec, theta, &x, mask, rng)?;
            let mut d_out = Matrix::zeros(y.rows(), y.cols());
            let v = score_outputs(
                post.likelihood(),
                post.noise().gamma_diag(),
                cache.output(),
                &y,
                Some(&mut d_out),
            );
            nn::output_grad_to_logit_grad(spec, &cache, &mut d_out);
            let mut grad = vec![0.0; theta.len()];
            nn::backward(spec, theta, &cache, &d_out, &mut grad)?;
            Ok((v, grad))
        }
    }
}

/// Minibatch training on the per-example loss `(Phi + penalty) / N`.
///
/// `on_epoch` sees the parameters after every epoch. Returns the final
/// parameters and the mean training loss per epoch.
pub fn train<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    init: Vec<f64>,
    cfg: &TrainConfig,
    penalty: Penalty,
    dropout: Option<&Dropout>,
    rng: &mut R,
    mut on_epoch: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    ensure_len("initial parameters", post.dim(), init.len())?;
    if let Some(d) = dropout {
        d.validate()?;
    }
    let n = post.data().len();
    let mut theta = init;
    let mut opt = cfg.optimizer.build(theta.len(), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(n, cfg.batch_size, rng) {
            let b = batch.len() as f64;
            let (v, mut g) = match dropout {
                Some(d) => batch_value_and_grad(post, &theta, &batch, Some((d, &mut *rng))),
                None => batch_value_and_grad::<R>(post, &theta, &batch, None),
            }
            .map_err(|e| match e {
                Error::NumericOverflow { .. } => Error::Diverged {
                    epoch,
                    loss: f64::INFINITY,
                },
                other => other,
            })?;
            g.iter_mut().for_each(|x| *x /= b);
            penalty.add_grad(&theta, 1.0 / n as f64, &mut g);
            total += v + penalty.value(&theta) * b / n as f64;
            opt.step(&mut theta, &g);
        }
        let loss = total / n as f64;
        if !(loss.is_finite() && loss <= DIVERGENCE_LOSS) {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(loss);
        on_epoch(epoch, &theta);
    }
    Ok((theta, history))
}

/// `argmin Phi` from a random initialization.
pub fn train_point_dnn<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ParamVector> {
    let init = post.spec().init_scaled(cfg.init_gain, rng).into_inner();
    let (theta, _) = train(post, init, cfg, Penalty::None, None, rng, |_, _| {})?;
    Ok(ParamVector(theta))
}

/// Surviving members plus the index and error of any that failed.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<ParamVector>,
    pub failures: Vec<(usize, Error)>,
}

impl Ensemble {
    pub fn predictive(&self, spec: &MlpSpec, x: &Matrix) -> Result<PredictiveDraws> {
        PredictiveDraws::from_thetas(spec, self.members.iter().map(|m| &m.0[..]), x)
    }
}

/// Member `m` of an ensemble seeded from `root_seed`; independent of the others.
pub fn train_ensemble_member(
    post: &BnnPosterior<'_>,
    cfg: &TrainConfig,
    root_seed: u64,
    m: usize,
) -> Result<ParamVector> {
    train_point_dnn(post, cfg, &mut rng::stream(root_seed, 1000 + m as u64))
}

/// `members` point DNNs, each on its own seed stream. Continues past
/// failures while at least two members survive.
pub fn run_ensemble(
    post: &BnnPosterior<'_>,
    cfg: &TrainConfig,
    members: usize,
    root_seed: u64,
) -> Result<Ensemble> {
    if members < 2 {
        return Err(Error::invalid("an ensemble needs at least two members"));
    }
    let mut out = Ensemble {
        members: Vec::with_capacity(members),
        failures: Vec::new(),
    };
    for m in 0..members {
        match train_ensemble_member(post, cfg, root_seed, m) {
            Ok(t) => out.members.push(t),
            Err(e) => out.failures.push((m, e)),
        }
    }
    if out.members.len() < 2 {
        let (_, e) = out.failures.pop().expect("failures recorded");
        return Err(e);
    }
    Ok(out)
}

/// A family of parameter distributions that can be sampled for prediction.
pub trait ParamSampler {
    fn dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;

    fn sample_many<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    fn predictive<R: Rng + ?Sized>(
        &self,
        spec: &MlpSpec,
        x: &Matrix,
        n: usize,
        rng: &mut R,
    ) -> Result<PredictiveDraws> {
        let thetas = self.sample_many(n, rng);
        PredictiveDraws::from_thetas(spec, thetas.iter().map(Vec::as_slice), x)
    }
}

/// Draws from `N(mean, diag(sd^2))`.
fn diag_gaussian<R: Rng + ?Sized>(mean: &[f64], sd: impl Iterator<Item = f64>, rng: &mut R) -> Vec<f64> {
    mean.iter().zip(sd).map(|(m, s)| m + s * standard_normal(rng)).collect()
}

// ---------------------------------------------------------------- VI

/// Mean-field Gaussian `q = N(mu, diag(exp(log_sigma))^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub prior: GaussianPriorSpec,
}

impl VariationalState {
    pub fn new(mu: Vec<f64>, log_sigma: Vec<f64>, prior: GaussianPriorSpec) -> Result<Self> {
        ensure_len("log_sigma", mu.len(), log_sigma.len())?;
        if mu.iter().chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(Error::invalid("variational parameters must be finite"));
        }
        Ok(Self { mu, log_sigma, prior })
    }

    /// `q` equal to the prior.
    pub fn prior_matched(dim: usize, prior: GaussianPriorSpec) -> Self {
        let ls = 0.5 * math::ln(prior.variance());
        Self {
            mu: vec![0.0; dim],
            log_sigma: vec![ls; dim],
            prior,
        }
    }

    pub fn sigma(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_sigma.iter().map(|l| math::exp(*l))
    }

    /// `KL(q || prior)` in closed form.
    pub fn kl(&self) -> f64 {
        let s2 = self.prior.variance();
        self.mu
            .iter()
            .zip(&self.log_sigma)
            .map(|(m, ls)| {
                let r = math::exp(2.0 * ls) / s2;
                0.5 * (r + m * m / s2 - 1.0 - math::ln(r))
            })
            .sum()
    }
}

impl ParamSampler for VariationalState {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        diag_gaussian(&self.mu, self.sigma(), rng)
    }
}

/// ELBO estimate and its gradients with respect to `mu` and `log_sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGrad {
    pub elbo: f64,
    pub grad_mu: Vec<f64>,
    pub grad_log_sigma: Vec<f64>,
}

/// `E_q[-Phi(W)] - KL(q || p)` by reparameterized Monte Carlo,
/// `W = mu + sigma * z`. `potential` returns `Phi` and its gradient.
pub fn elbo_and_grad_with<F, R>(
    state: &VariationalState,
    mut potential: F,
    mc_draws: usize,
    rng: &mut R,
) -> Result<ElboGrad>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    R: Rng + ?Sized,
{
    if mc_draws == 0 {
        return Err(Error::invalid("need at least one Monte Carlo draw"));
    }
    let d = state.mu.len();
    let sigma: Vec<f64> = state.sigma().collect();
    let mut z = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut exp_phi = 0.0;
    let mut g_mu = vec![0.0; d];
    let mut g_ls = vec![0.0; d];
    for draw in 0..mc_draws {
        rng::fill_standard_normal(rng, &mut z);
        for j in 0..d {
            w[j] = state.mu[j] + sigma[j] * z[j];
        }
        let (phi, g) = potential(&w).map_err(|_| Error::NonFiniteDraw { draw })?;
        if !phi.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDraw { draw });
        }
        ensure_len("potential gradient", d, g.len())?;
        exp_phi += phi;
        for j in 0..d {
            g_mu[j] -= g[j];
            g_ls[j] -= g[j] * sigma[j] * z[j];
        }
    }
    let s = mc_draws as f64;
    let s2 = state.prior.variance();
    for j in 0..d {
        g_mu[j] = g_mu[j] / s - state.mu[j] / s2;
        g_ls[j] = g_ls[j] / s - (sigma[j] * sigma[j] / s2 - 1.0);
    }
    Ok(ElboGrad {
        elbo: -exp_phi / s - state.kl(),
        grad_mu: g_mu,
        grad_log_sigma: g_ls,
    })
}

pub fn elbo_and_grad<R: Rng + ?Sized>(
    state: &VariationalState,
    post: &BnnPosterior<'_>,
    mc_draws: usize,
    rng: &mut R,
) -> Result<ElboGrad> {
    elbo_and_grad_with(state, |w| post.potential_and_grad(w), mc_draws, rng)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ViConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub mc_draws: usize,
    pub optimizer: OptimizerKind,
    /// Starting `log sigma` for every coordinate.
    pub init_log_sigma: f64,
    pub init_gain: f64,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            learning_rate: 1e-2,
            mc_draws: 1,
            optimizer: OptimizerKind::Adam,
            init_log_sigma: -5.0,
            init_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ViRun {
    pub state: VariationalState,
    pub elbo_history: Vec<f64>,
}

/// Gradient ascent on the ELBO from `init`. The ELBO estimate is taken on
/// the full potential each step.
pub fn run_vi_with<F, R>(
    init: VariationalState,
    mut potential: F,
    cfg: &ViConfig,
    rng: &mut R,
) -> Result<ViRun>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    R: Rng + ?Sized,
{
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let d = init.mu.len();
    let mut params: Vec<f64> = init.mu.iter().chain(&init.log_sigma).copied().collect();
    let mut opt = cfg.optimizer.build(2 * d, cfg.learning_rate);
    let mut state = init;
    let mut history = Vec::with_capacity(cfg.steps);
    let mut neg = vec![0.0; 2 * d];
    for _ in 0..cfg.steps {
        let eg = elbo_and_grad_with(&state, &mut potential, cfg.mc_draws, rng)?;
        history.push(eg.elbo);
        for j in 0..d {
            neg[j] = -eg.grad_mu[j];
            neg[d + j] = -eg.grad_log_sigma[j];
        }
        opt.step(&mut params, &neg);
        state.mu.copy_from_slice(&params[..d]);
        state.log_sigma.copy_from_slice(&params[d..]);
    }
    Ok(ViRun {
        state,
        elbo_history: history,
    })
}

pub fn run_vi<R: Rng + ?Sized>(post: &BnnPosterior<'_>, cfg: &ViConfig, rng: &mut R) -> Result<ViRun> {
    let mu = post.spec().init_scaled(cfg.init_gain, rng).into_inner();
    let ls = vec![cfg.init_log_sigma; mu.len()];
    let init = VariationalState::new(mu, ls, post.prior())?;
    run_vi_with(init, |w| post.potential_and_grad(w), cfg, rng)
}

// ---------------------------------------------------------------- Laplace

/// Gaussian approximation `N(map_theta, diag(1 / hessian_diag))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceState {
    pub map_theta: Vec<f64>,
    pub hessian_diag: Vec<f64>,
    /// Entries whose curvature was not positive and got floored at the damping.
    pub floored: usize,
    /// Norm of the objective gradient at `map_theta`.
    pub grad_norm: f64,
}

impl ParamSampler for LaplaceState {
    fn dim(&self) -> usize {
        self.map_theta.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        diag_gaussian(&self.map_theta, self.hessian_diag.iter().map(|h| 1.0 / math::sqrt(*h)), rng)
    }
}

/// Diagonal of the generalized Gauss-Newton matrix of `Phi` at `theta`:
/// `sum_n J_n^T Lambda_n J_n` with `Lambda = Gamma^-1` for Gaussian noise and
/// `diag(p) - p p^T` on the logits for softmax cross-entropy.
pub fn ggn_diagonal(post: &BnnPosterior<'_>, theta: &[f64]) -> Result<Vec<f64>> {
    let spec = post.spec();
    let data = post.data();
    let q = spec.output_dim();
    let d = theta.len();
    let gamma = post.noise().gamma_diag();
    let softmax = post.likelihood() == Likelihood::CrossEntropy;
    let mut diag = vec![0.0; d];
    let mut jac = vec![vec![0.0; d]; q];
    let mut dz = Matrix::zeros(1, q);
    for i in 0..data.len() {
        let x = data.x.select_rows(&[i]);
        let cache = nn::forward_cached(spec, theta, &x)?;
        for (k, row) in jac.iter_mut().enumerate() {
            dz.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
            dz.set(0, k, 1.0);
            if !softmax && spec.output_activation() == OutputActivation::Softmax {
                // Gaussian on probabilities: chain through the softmax.
                nn::output_grad_to_logit_grad(spec, &cache, &mut dz);
            }
            row.iter_mut().for_each(|v| *v = 0.0);
            nn::backward(spec, theta, &cache, &dz, row)?;
        }
        if softmax {
            let p = cache.output().row(0);
            for j in 0..d {
                let mut a = 0.0;
                let mut b = 0.0;
                for k in 0..q {
                    a += p[k] * jac[k][j] * jac[k][j];
                    b += p[k] * jac[k][j];
                }
                diag[j] += a - b * b;
            }
        } else {
            for k in 0..q {
                for j in 0..d {
                    diag[j] += jac[k][j] * jac[k][j] / gamma[k];
                }
            }
        }
    }
    Ok(diag)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LaplaceConfig {
    pub train: TrainConfig,
    pub damping: f64,
    /// Full-batch descent iterations after minibatch training.
    pub polish_iterations: usize,
    /// Polishing stops once the gradient norm is below this.
    pub polish_tolerance: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            damping: 1e-4,
            polish_iterations: 500,
            polish_tolerance: 1e-4,
        }
    }
}

/// Full-batch gradient descent with Armijo backtracking on
/// `Phi + penalty`. Returns the final gradient norm.
fn polish(
    post: &BnnPosterior<'_>,
    theta: &mut Vec<f64>,
    penalty: Penalty,
    iterations: usize,
    tolerance: f64,
) -> Result<f64> {
    let objective = |t: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, mut g) = post.potential_and_grad(t)?;
        penalty.add_grad(t, 1.0, &mut g);
        Ok((v + penalty.value(t), g))
    };
    let (mut f, mut g) = objective(theta)?;
    let mut step = 1.0;
    for _ in 0..iterations {
        let gn2 = math::norm_sq(&g);
        if math::sqrt(gn2) < tolerance {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            match objective(&cand) {
                Ok((fc, gc)) if fc <= f - 1e-4 * step * gn2 => {
                    *theta = cand;
                    f = fc;
                    g = gc;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    Ok(math::sqrt(math::norm_sq(&g)))
}

fn laplace_from_map(
    post: &BnnPosterior<'_>,
    mut theta: Vec<f64>,
    penalty: Penalty,
    cfg: &LaplaceConfig,
) -> Result<LaplaceState> {
    if !(cfg.damping > 0.0) {
        return Err(Error::invalid("Laplace damping must be positive"));
    }
    let grad_norm = polish(post, &mut theta, penalty, cfg.polish_iterations, cfg.polish_tolerance)?;
    let prior_precision = match penalty {
        Penalty::Gaussian(v) => 1.0 / v,
        _ => 0.0,
    };
    let mut floored = 0;
    let hessian_diag = ggn_diagonal(post, &theta)?
        .into_iter()
        .map(|h| {
            let c = h + prior_precision;
            if c > 0.0 && c.is_finite() {
                c + cfg.damping
            } else {
                floored += 1;
                cfg.damping
            }
        })
        .collect();
    Ok(LaplaceState {
        map_theta: theta,
        hessian_diag,
        floored,
        grad_norm,
    })
}

/// MAP under the Gaussian prior, then a damped diagonal GGN covariance.
pub fn run_laplace<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    cfg: &LaplaceConfig,
    rng: &mut R,
) -> Result<LaplaceState> {
    let penalty = Penalty::Gaussian(post.prior().variance());
    let init = post.spec().init_scaled(cfg.train.init_gain, rng).into_inner();
    let (theta, _) = train(post, init, &cfg.train, penalty, None, rng, |_, _| {})?;
    laplace_from_map(post, theta, penalty, cfg)
}

/// Laplace at an L1-penalized MAP. The L1 term adds no curvature, so the
/// covariance comes from the likelihood GGN plus damping alone.
pub fn run_lasso<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    lambda: f64,
    cfg: &LaplaceConfig,
    rng: &mut R,
) -> Result<LaplaceState> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("L1 strength must be non-negative"));
    }
    let penalty = Penalty::L1(lambda);
    let init = post.spec().init_scaled(cfg.train.init_gain, rng).into_inner();
    let (theta, _) = train(post, init, &cfg.train, penalty, None, rng, |_, _| {})?;
    laplace_from_map(post, theta, penalty, cfg)
}

// ---------------------------------------------------------------- MC-dropout

/// Trained weights and the dropout layout kept active at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct McDropout {
    pub theta: Vec<f64>,
    pub dropout: Dropout,
}

impl McDropout {
    /// `passes` stochastic forward passes on `x`.
    pub fn predictive<R: Rng + ?Sized>(
        &self,
        spec: &MlpSpec,
        x: &Matrix,
        passes: usize,
        rng: &mut R,
    ) -> Result<PredictiveDraws> {
        if passes < 2 {
            return Err(Error::invalid("MC-dropout needs at least two passes"));
        }
        let draws = (0..passes)
            .map(|_| nn::forward_dropout(spec, &self.theta, x, &self.dropout, rng).map(|c| c.into_output()))
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictiveDraws { draws })
    }
}

/// Trains with dropout on every hidden layer at `rate`.
pub fn run_mc_dropout<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    cfg: &TrainConfig,
    rate: f64,
    rng: &mut R,
) -> Result<McDropout> {
    let dropout = Dropout::hidden(post.spec(), rate);
    dropout.validate()?;
    let init = post.spec().init_scaled(cfg.init_gain, rng).into_inner();
    let penalty = Penalty::Gaussian(post.prior().variance());
    let (theta, _) = train(post, init, cfg, penalty, Some(&dropout), rng, |_, _| {})?;
    Ok(McDropout { theta, dropout })
}

// ---------------------------------------------------------------- SWAG

/// Diagonal SWAG moments of the last `K` epoch snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SwagState {
    pub weight_history: Matrix,
    pub mu: Vec<f64>,
    /// Unbiased (`1 / (K - 1)`) per-coordinate variance.
    pub sigma_diag: Vec<f64>,
}

impl SwagState {
    pub fn from_history(weight_history: Matrix) -> Result<Self> {
        let k = weight_history.rows();
        if k < 2 {
            return Err(Error::invalid("SWAG needs at least two snapshots"));
        }
        let mu = weight_history.column_means();
        let sigma_diag = (0..weight_history.cols())
            .map(|j| {
                (0..k)
                    .map(|i| {
                        let r = weight_history.get(i, j) - mu[j];
                        r * r
                    })
                    .sum::<f64>()
                    / (k - 1) as f64
            })
            .collect();
        Ok(Self {
            weight_history,
            mu,
            sigma_diag,
        })
    }
}

impl ParamSampler for SwagState {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        diag_gaussian(&self.mu, self.sigma_diag.iter().map(|v| math::sqrt(*v)), rng)
    }
}

/// Trains on the MAP objective and snapshots the last `collect_last` epochs.
pub fn run_swag<R: Rng + ?Sized>(
    post: &BnnPosterior<'_>,
    cfg: &TrainConfig,
    collect_last: usize,
    rng: &mut R,
) -> Result<SwagState> {
    if collect_last < 2 {
        return Err(Error::invalid("SWAG needs at least two snapshots"));
    }
    if collect_last > cfg.epochs {
        return Err(Error::invalid("SWAG snapshot count exceeds the epoch count"));
    }
    let d = post.dim();
    let first = cfg.epochs - collect_last;
    let mut hist = Matrix::zeros(collect_last, d);
    let init = post.spec().init_scaled(cfg.init_gain, rng).into_inner();
    let penalty = Penalty::Gaussian(post.prior().variance());
    train(post, init, cfg, penalty, None, rng, |epoch, theta| {
        if epoch >= first {
            hist.row_mut(epoch - first).copy_from_slice(theta);
        }
    })?;
    SwagState::from_history(hist)
}
