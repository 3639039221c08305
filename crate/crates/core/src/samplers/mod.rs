//! MCMC kernels over an abstract target.
//!
//! A [`Target`] separates the likelihood potential `Phi` from the prior term.
//! Random-walk MH, HMC and SGHMC move on `U = Phi - log p(theta)`; pCN's
//! proposal preserves the Gaussian prior, so its acceptance uses `Phi` alone.

mod chain;
mod kernels;
mod tune;

use alloc::vec::Vec;

pub use chain::{run_chain, ChainAbort, ChainConfig, ChainTrace, Kernel, KernelKind};
pub use kernels::{
    hmc_step, leapfrog, mh_step, pcn_step, sghmc_step, HmcConfig, MhConfig, PcnConfig,
    SghmcConfig, StepOutcome,
};
pub use tune::{tune_pcn_beta, PcnTuning};

use crate::error::{Error, Result};
use crate::math;
use crate::model::BnnPosterior;

/// Monotonic clock in seconds from an arbitrary origin.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock frozen at zero, for callers that do not care about timing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Density a sampler explores: `exp(-Phi(theta)) * prior(theta)`.
pub trait Target {
    fn dim(&self) -> usize;

    /// Likelihood potential `Phi`. Non-finite values are treated as rejections.
    fn potential(&self, theta: &[f64]) -> f64;

    /// `-log p(theta)` up to a constant.
    fn neg_log_prior(&self, _theta: &[f64]) -> f64 {
        0.0
    }

    fn neg_log_posterior(&self, theta: &[f64]) -> f64 {
        self.potential(theta) + self.neg_log_prior(theta)
    }

    /// Writes `grad U(theta)` into `grad`.
    fn grad_neg_log_posterior(&self, _theta: &[f64], _grad: &mut [f64]) -> Result<()> {
        Err(Error::GradientUnavailable)
    }

    /// Number of data rows available for minibatching; 0 means no data-level
    /// structure and stochastic gradients fall back to the exact one.
    fn data_len(&self) -> usize {
        0
    }

    /// Unbiased estimate of `grad U(theta)` from the rows in `batch`.
    fn minibatch_grad_neg_log_posterior(
        &self,
        theta: &[f64],
        _batch: &[usize],
        grad: &mut [f64],
    ) -> Result<()> {
        self.grad_neg_log_posterior(theta, grad)
    }

    /// Variance of the isotropic Gaussian prior, when there is one. Required by pCN.
    fn prior_variance(&self) -> Option<f64> {
        None
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn potential(&self, theta: &[f64]) -> f64 {
        (**self).potential(theta)
    }
    fn neg_log_prior(&self, theta: &[f64]) -> f64 {
        (**self).neg_log_prior(theta)
    }
    fn neg_log_posterior(&self, theta: &[f64]) -> f64 {
        (**self).neg_log_posterior(theta)
    }
    fn grad_neg_log_posterior(&self, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        (**self).grad_neg_log_posterior(theta, grad)
    }
    fn data_len(&self) -> usize {
        (**self).data_len()
    }
    fn minibatch_grad_neg_log_posterior(
        &self,
        theta: &[f64],
        batch: &[usize],
        grad: &mut [f64],
    ) -> Result<()> {
        (**self).minibatch_grad_neg_log_posterior(theta, batch, grad)
    }
    fn prior_variance(&self) -> Option<f64> {
        (**self).prior_variance()
    }
}

impl Target for BnnPosterior<'_> {
    fn dim(&self) -> usize {
        BnnPosterior::dim(self)
    }

    fn potential(&self, theta: &[f64]) -> f64 {
        BnnPosterior::potential(self, theta).unwrap_or(f64::INFINITY)
    }

    fn neg_log_prior(&self, theta: &[f64]) -> f64 {
        0.5 * math::norm_sq(theta) / self.prior().variance()
    }

    fn grad_neg_log_posterior(&self, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        let g = self.grad_potential(theta)?;
        let v = self.prior().variance();
        for ((o, gi), t) in grad.iter_mut().zip(g).zip(theta) {
            *o = gi + t / v;
        }
        Ok(())
    }

    fn data_len(&self) -> usize {
        self.data().len()
    }

    fn minibatch_grad_neg_log_posterior(
        &self,
        theta: &[f64],
        batch: &[usize],
        grad: &mut [f64],
    ) -> Result<()> {
        let g = self.minibatch_grad_potential(theta, batch, true)?;
        let v = self.prior().variance();
        for ((o, gi), t) in grad.iter_mut().zip(g).zip(theta) {
            *o = gi + t / v;
        }
        Ok(())
    }

    fn prior_variance(&self) -> Option<f64> {
        Some(self.prior().variance())
    }
}

/// `Phi(theta) = precision/2 * |theta|^2` with an optional `N(0, v I)` prior.
///
/// Handy analytic target: with no prior the law is `N(0, 1/precision)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticTarget {
    pub dim: usize,
    pub precision: f64,
    pub prior_variance: Option<f64>,
}

impl Target for QuadraticTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, theta: &[f64]) -> f64 {
        0.5 * self.precision * math::norm_sq(theta)
    }

    fn neg_log_prior(&self, theta: &[f64]) -> f64 {
        self.prior_variance
            .map_or(0.0, |v| 0.5 * math::norm_sq(theta) / v)
    }

    fn grad_neg_log_posterior(&self, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        let prior_precision = self.prior_variance.map_or(0.0, |v| 1.0 / v);
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = (self.precision + prior_precision) * t;
        }
        Ok(())
    }

    fn prior_variance(&self) -> Option<f64> {
        self.prior_variance
    }
}

/// Current position of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    /// `Phi(theta)`. Kept current by MH, HMC and pCN after every step; SGHMC
    /// never evaluates `Phi`, so the chain runner refreshes it when recording.
    pub potential: f64,
    /// SGHMC velocity, carried between steps.
    pub momentum: Option<Vec<f64>>,
    grad: Option<Vec<f64>>,
}

impl ChainState {
    pub fn new<T: Target + ?Sized>(theta: Vec<f64>, target: &T) -> Result<Self> {
        crate::error::ensure_len("initial state", target.dim(), theta.len())?;
        let potential = target.potential(&theta);
        if !potential.is_finite() {
            return Err(Error::invalid("initial state has a non-finite potential"));
        }
        Ok(Self {
            theta,
            potential,
            momentum: None,
            grad: None,
        })
    }

    pub(crate) fn refresh_potential<T: Target + ?Sized>(&mut self, target: &T) {
        self.potential = target.potential(&self.theta);
    }
}
