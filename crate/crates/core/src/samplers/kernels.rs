use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::{ChainState, Target};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::{fill_standard_normal, standard_normal};

/// What a single kernel step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// Proposal potential was non-finite; counted as a rejection.
    RejectedNonFinite,
    /// HMC energy error exceeded the divergence threshold; rejected.
    Divergent,
}

impl StepOutcome {
    pub fn accepted(self) -> bool {
        self == StepOutcome::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MhConfig {
    pub step_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SghmcConfig {
    pub learning_rate: f64,
    pub friction: f64,
    /// Rows per stochastic gradient; `0` or anything `>= N` uses the full data.
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PcnConfig {
    pub beta: f64,
}

/// `|Delta H|` beyond which an HMC trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

fn energy<T: Target + ?Sized>(target: &T, theta: &[f64], potential: f64) -> f64 {
    potential + target.neg_log_prior(theta)
}

/// Gaussian random-walk Metropolis on `U = Phi - log p`.
pub fn mh_step<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    step_scale: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !(step_scale > 0.0) {
        return Err(Error::invalid("MH step scale must be positive"));
    }
    let mut proposal = vec![0.0; state.theta.len()];
    fill_standard_normal(rng, &mut proposal);
    for (p, t) in proposal.iter_mut().zip(&state.theta) {
        *p = t + step_scale * *p;
    }
    let u: f64 = rng.random();
    let phi_new = target.potential(&proposal);
    let u_new = energy(target, &proposal, phi_new);
    if !u_new.is_finite() {
        return Ok(StepOutcome::RejectedNonFinite);
    }
    let u_old = energy(target, &state.theta, state.potential);
    let accept_prob = math::exp(u_old - u_new).min(1.0);
    if u < accept_prob {
        state.theta = proposal;
        state.potential = phi_new;
        state.grad = None;
        Ok(StepOutcome::Accepted)
    } else {
        Ok(StepOutcome::Rejected)
    }
}

/// Runs `steps` leapfrog steps of size `eps` from `(theta, momentum)` in place.
/// Returns the gradient of `U` at the final position.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    theta: &mut [f64],
    momentum: &mut [f64],
    grad_at_start: &[f64],
    eps: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut grad = grad_at_start.to_vec();
    for (p, g) in momentum.iter_mut().zip(&grad) {
        *p -= 0.5 * eps * g;
    }
    for s in 0..steps {
        for (t, p) in theta.iter_mut().zip(momentum.iter()) {
            *t += eps * p;
        }
        target.grad_neg_log_posterior(theta, &mut grad)?;
        let scale = if s + 1 == steps { 0.5 * eps } else { eps };
        for (p, g) in momentum.iter_mut().zip(&grad) {
            *p -= scale * g;
        }
    }
    Ok(grad)
}

/// One HMC transition with unit mass matrix.
pub fn hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    eps: f64,
    steps: usize,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !(eps > 0.0) || steps == 0 {
        return Err(Error::invalid("HMC needs eps > 0 and at least one leapfrog step"));
    }
    let d = state.theta.len();
    let grad0 = match state.grad.take() {
        Some(g) => g,
        None => {
            let mut g = vec![0.0; d];
            target.grad_neg_log_posterior(&state.theta, &mut g)?;
            g
        }
    };
    let mut momentum = vec![0.0; d];
    fill_standard_normal(rng, &mut momentum);
    let u: f64 = rng.random();
    let h_old = energy(target, &state.theta, state.potential) + 0.5 * math::norm_sq(&momentum);

    let mut theta = state.theta.clone();
    let grad1 = match leapfrog(target, &mut theta, &mut momentum, &grad0, eps, steps) {
        Ok(g) => g,
        Err(Error::GradientUnavailable) => return Err(Error::GradientUnavailable),
        Err(_) => {
            state.grad = Some(grad0);
            return Ok(StepOutcome::Divergent);
        }
    };
    let phi_new = target.potential(&theta);
    let h_new = energy(target, &theta, phi_new) + 0.5 * math::norm_sq(&momentum);
    let delta = h_new - h_old;
    if !delta.is_finite() || delta.abs() > DIVERGENCE_THRESHOLD {
        state.grad = Some(grad0);
        return Ok(StepOutcome::Divergent);
    }
    if u < math::exp(-delta).min(1.0) {
        state.theta = theta;
        state.potential = phi_new;
        state.grad = Some(grad1);
        Ok(StepOutcome::Accepted)
    } else {
        state.grad = Some(grad0);
        Ok(StepOutcome::Rejected)
    }
}

/// One SGHMC update, no Metropolis correction:
/// `v <- (1 - alpha) v - eta grad U~(theta) + N(0, 2 alpha eta)`, `theta <- theta + v`.
pub fn sghmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    config: &SghmcConfig,
    rng: &mut R,
) -> Result<()> {
    let SghmcConfig {
        learning_rate: eta,
        friction: alpha,
        batch_size,
    } = *config;
    if !(eta > 0.0) || !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("SGHMC needs eta > 0 and friction in [0, 1)"));
    }
    let d = state.theta.len();
    let mut grad = vec![0.0; d];
    let n = target.data_len();
    if n > 0 && batch_size > 0 && batch_size < n {
        let batch = index::sample(rng, n, batch_size).into_vec();
        target.minibatch_grad_neg_log_posterior(&state.theta, &batch, &mut grad)
    } else {
        target.grad_neg_log_posterior(&state.theta, &mut grad)
    }
    .map_err(|e| Error::ChainAborted {
        step: 0,
        reason: format!("{e}"),
    })?;
    let noise_sd = math::sqrt(2.0 * alpha * eta);
    let v = state.momentum.get_or_insert_with(|| vec![0.0; d]);
    for (vi, g) in v.iter_mut().zip(&grad) {
        let z = if noise_sd > 0.0 { standard_normal(rng) } else { 0.0 };
        *vi = (1.0 - alpha) * *vi - eta * g + noise_sd * z;
    }
    for (t, vi) in state.theta.iter_mut().zip(v.iter()) {
        *t += vi;
    }
    if state.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::ChainAborted {
            step: 0,
            reason: "non-finite SGHMC update".into(),
        });
    }
    state.grad = None;
    Ok(())
}

/// One preconditioned Crank-Nicolson step. Acceptance compares `Phi` only.
pub fn pcn_step<T: Target + ?Sized, R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &T,
    beta: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid("pCN beta must lie in [0, 1]"));
    }
    let prior_sd = math::sqrt(target.prior_variance().ok_or(Error::PriorUnavailable)?);
    let shrink = math::sqrt(1.0 - beta * beta);
    let mut proposal = vec![0.0; state.theta.len()];
    fill_standard_normal(rng, &mut proposal);
    for (p, u) in proposal.iter_mut().zip(&state.theta) {
        *p = shrink * u + beta * prior_sd * *p;
    }
    let u: f64 = rng.random();
    let phi_new = target.potential(&proposal);
    if !phi_new.is_finite() {
        return Ok(StepOutcome::RejectedNonFinite);
    }
    let accept_prob = math::exp(state.potential - phi_new).min(1.0);
    if u < accept_prob {
        state.theta = proposal;
        state.potential = phi_new;
        state.grad = None;
        Ok(StepOutcome::Accepted)
    } else {
        Ok(StepOutcome::Rejected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::samplers::QuadraticTarget;

    fn gaussian_1d() -> QuadraticTarget {
        QuadraticTarget {
            dim: 1,
            precision: 1.0,
            prior_variance: None,
        }
    }

    #[test]
    fn tiny_mh_step_always_accepts() {
        let t = gaussian_1d();
        let mut s = ChainState::new(vec![0.7], &t).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..1000 {
            assert_eq!(mh_step(&mut s, &t, 1e-15, &mut rng).unwrap(), StepOutcome::Accepted);
        }
        assert!((s.theta[0] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn downhill_mh_always_accepted() {
        // Replay the proposal noise from a cloned stream to know which moves go downhill.
        let t = gaussian_1d();
        let mut s = ChainState::new(vec![5.0], &t).unwrap();
        let mut rng = stream(5, 0);
        let mut downhill = 0;
        for _ in 0..500 {
            let old = s.theta[0];
            let mut probe = rng.clone();
            let z = standard_normal(&mut probe);
            let out = mh_step(&mut s, &t, 0.1, &mut rng).unwrap();
            if (old + 0.1 * z).abs() < old.abs() {
                assert!(out.accepted());
                downhill += 1;
            }
        }
        assert!(downhill > 100);
    }

    #[test]
    fn one_leapfrog_matches_hand_algebra() {
        let t = gaussian_1d();
        let (theta0, p0, eps) = (0.8_f64, -0.3_f64, 0.25_f64);
        let mut theta = [theta0];
        let mut p = [p0];
        leapfrog(&t, &mut theta, &mut p, &[theta0], eps, 1).unwrap();
        let p_half = p0 - 0.5 * eps * theta0;
        let theta1 = theta0 + eps * p_half;
        let p1 = p_half - 0.5 * eps * theta1;
        let dh_hand = 0.5 * theta1 * theta1 + 0.5 * p1 * p1 - 0.5 * theta0 * theta0 - 0.5 * p0 * p0;
        let dh = 0.5 * theta[0] * theta[0] + 0.5 * p[0] * p[0] - 0.5 * theta0 * theta0 - 0.5 * p0 * p0;
        assert!((dh - dh_hand).abs() < 1e-12);
    }

    #[test]
    fn tiny_hmc_step_always_accepts() {
        let t = gaussian_1d();
        let mut s = ChainState::new(vec![1.3], &t).unwrap();
        let mut rng = stream(6, 0);
        for _ in 0..500 {
            assert!(hmc_step(&mut s, &t, 1e-8, 1, &mut rng).unwrap().accepted());
        }
    }

    #[test]
    fn sghmc_ballistic_without_friction_or_gradient() {
        let t = QuadraticTarget {
            dim: 2,
            precision: 0.0,
            prior_variance: None,
        };
        let mut s = ChainState::new(vec![0.0, 1.0], &t).unwrap();
        s.momentum = Some(vec![0.5, -0.25]);
        let cfg = SghmcConfig {
            learning_rate: 0.1,
            friction: 0.0,
            batch_size: 0,
        };
        let mut rng = stream(7, 0);
        for k in 1..=4 {
            sghmc_step(&mut s, &t, &cfg, &mut rng).unwrap();
            assert_eq!(s.theta, vec![0.5 * k as f64, 1.0 - 0.25 * k as f64]);
        }
    }

    #[test]
    fn sghmc_two_deterministic_steps() {
        let t = gaussian_1d();
        let (theta0, v0, eta) = (0.9, 0.2, 0.05);
        let mut s = ChainState::new(vec![theta0], &t).unwrap();
        s.momentum = Some(vec![v0]);
        let cfg = SghmcConfig {
            learning_rate: eta,
            friction: 0.0,
            batch_size: 0,
        };
        let mut rng = stream(8, 0);
        sghmc_step(&mut s, &t, &cfg, &mut rng).unwrap();
        sghmc_step(&mut s, &t, &cfg, &mut rng).unwrap();
        let v1 = v0 - eta * theta0;
        let theta1 = theta0 + v1;
        let v2 = v1 - eta * theta1;
        let theta2 = theta1 + v2;
        assert!((s.theta[0] - theta2).abs() < 1e-12);
        assert!((s.momentum.as_ref().unwrap()[0] - v2).abs() < 1e-12);
    }

    #[test]
    fn pcn_beta_zero_freezes_chain() {
        let t = QuadraticTarget {
            dim: 3,
            precision: 2.0,
            prior_variance: Some(1.0),
        };
        let mut s = ChainState::new(vec![0.1, -0.2, 0.3], &t).unwrap();
        let mut rng = stream(9, 0);
        for _ in 0..100 {
            assert!(pcn_step(&mut s, &t, 0.0, &mut rng).unwrap().accepted());
        }
        assert_eq!(s.theta, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn pcn_beta_one_is_a_prior_draw() {
        let t = QuadraticTarget {
            dim: 3,
            precision: 0.0,
            prior_variance: Some(4.0),
        };
        let mut s = ChainState::new(vec![9.0, 9.0, 9.0], &t).unwrap();
        let mut rng = stream(10, 0);
        let mut probe = rng.clone();
        let mut xi = [0.0; 3];
        fill_standard_normal(&mut probe, &mut xi);
        pcn_step(&mut s, &t, 1.0, &mut rng).unwrap();
        for (a, z) in s.theta.iter().zip(xi) {
            assert!((a - 2.0 * z).abs() < 1e-12);
        }
    }

    #[test]
    fn pcn_without_prior_is_rejected() {
        let t = gaussian_1d();
        let mut s = ChainState::new(vec![0.0], &t).unwrap();
        assert_eq!(
            pcn_step(&mut s, &t, 0.5, &mut stream(0, 0)),
            Err(Error::PriorUnavailable)
        );
    }
}
