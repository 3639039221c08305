use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels::{
    hmc_step, mh_step, pcn_step, sghmc_step, HmcConfig, MhConfig, PcnConfig, SghmcConfig,
    StepOutcome,
};
use super::{ChainState, Clock, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum KernelKind {
    Mh,
    Hmc,
    Sghmc,
    Pcn,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Mh => "mh",
            KernelKind::Hmc => "hmc",
            KernelKind::Sghmc => "sghmc",
            KernelKind::Pcn => "pcn",
        }
    }
}

/// A kernel together with its tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    RandomWalk(MhConfig),
    Hmc(HmcConfig),
    Sghmc(SghmcConfig),
    Pcn(PcnConfig),
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::RandomWalk(_) => KernelKind::Mh,
            Kernel::Hmc(_) => KernelKind::Hmc,
            Kernel::Sghmc(_) => KernelKind::Sghmc,
            Kernel::Pcn(_) => KernelKind::Pcn,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::RandomWalk(c) if !(c.step_scale > 0.0) => {
                Err(Error::invalid("MH step scale must be positive"))
            }
            Kernel::Hmc(c) if !(c.step_size > 0.0) || c.leapfrog_steps == 0 => {
                Err(Error::invalid("HMC needs eps > 0 and L >= 1"))
            }
            Kernel::Sghmc(c) if !(c.learning_rate > 0.0) || !(0.0..1.0).contains(&c.friction) => {
                Err(Error::invalid("SGHMC needs eta > 0 and friction in [0, 1)"))
            }
            Kernel::Pcn(c) if !(c.beta > 0.0 && c.beta <= 1.0) => {
                Err(Error::invalid("pCN beta must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Advances the chain by one kernel step.
    pub fn step<T: Target + ?Sized, R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        target: &T,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        match self {
            Kernel::RandomWalk(c) => mh_step(state, target, c.step_scale, rng),
            Kernel::Hmc(c) => hmc_step(state, target, c.step_size, c.leapfrog_steps, rng),
            Kernel::Sghmc(c) => sghmc_step(state, target, c, rng).map(|_| StepOutcome::Accepted),
            Kernel::Pcn(c) => pcn_step(state, target, c.beta, rng),
        }
    }
}

/// How many samples to record and how many kernel steps separate them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainConfig {
    pub iterations: usize,
    pub thinning: usize,
}

/// Recorded samples of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    dim: usize,
    /// Row-major `len x dim`.
    samples: Vec<f64>,
    pub potentials: Vec<f64>,
    /// Whether any step since the previous record was accepted.
    pub accepted: Vec<bool>,
    /// Seconds since the chain started, one per record.
    pub wall_times: Vec<f64>,
    pub kernel: KernelKind,
    pub steps_total: usize,
    pub steps_accepted: usize,
    pub nonfinite_rejections: usize,
    pub divergences: usize,
}

impl ChainTrace {
    pub fn empty(dim: usize, kernel: KernelKind) -> Self {
        Self {
            dim,
            samples: Vec::new(),
            potentials: Vec::new(),
            accepted: Vec::new(),
            wall_times: Vec::new(),
            kernel,
            steps_total: 0,
            steps_accepted: 0,
            nonfinite_rejections: 0,
            divergences: 0,
        }
    }

    /// Rebuilds a trace from stored columns (e.g. a CSV file).
    pub fn from_parts(
        dim: usize,
        kernel: KernelKind,
        samples: Vec<f64>,
        potentials: Vec<f64>,
        accepted: Vec<bool>,
        wall_times: Vec<f64>,
    ) -> Result<Self> {
        let n = potentials.len();
        if samples.len() != n * dim || accepted.len() != n || wall_times.len() != n {
            return Err(Error::invalid("trace columns disagree in length"));
        }
        if wall_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("trace wall times must be nondecreasing"));
        }
        let steps_accepted = accepted.iter().filter(|a| **a).count();
        Ok(Self {
            dim,
            samples,
            potentials,
            accepted,
            wall_times,
            kernel,
            steps_total: n,
            steps_accepted,
            nonfinite_rejections: 0,
            divergences: 0,
        })
    }

    pub fn push(&mut self, theta: &[f64], potential: f64, accepted: bool, wall_time: f64) {
        debug_assert_eq!(theta.len(), self.dim);
        self.samples.extend_from_slice(theta);
        self.potentials.push(potential);
        self.accepted.push(accepted);
        let t = self.wall_times.last().map_or(wall_time, |&l| wall_time.max(l));
        self.wall_times.push(t);
    }

    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.dim.max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.samples[i * self.dim + j]).collect()
    }

    pub fn last(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.sample(self.len() - 1))
    }

    /// Accepted fraction over every kernel step taken.
    pub fn acceptance_rate(&self) -> f64 {
        if self.steps_total == 0 {
            0.0
        } else {
            self.steps_accepted as f64 / self.steps_total as f64
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.wall_times.last().copied().unwrap_or(0.0)
    }

    /// First `n` records. Step counters are kept as-is.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            dim: self.dim,
            samples: self.samples[..n * self.dim].to_vec(),
            potentials: self.potentials[..n].to_vec(),
            accepted: self.accepted[..n].to_vec(),
            wall_times: self.wall_times[..n].to_vec(),
            ..self.clone()
        }
    }

    /// Drops the first `fraction` of records. Wall times keep their origin.
    pub fn without_burn_in(&self, fraction: f64) -> Self {
        let skip = (self.len() as f64 * fraction.clamp(0.0, 1.0)) as usize;
        let mut t = self.clone();
        t.samples.drain(..skip * self.dim);
        t.potentials.drain(..skip);
        t.accepted.drain(..skip);
        t.wall_times.drain(..skip);
        t
    }

    /// Multiplies every wall time by `factor`.
    pub fn scale_wall_times(&mut self, factor: f64) {
        self.wall_times.iter_mut().for_each(|t| *t *= factor);
    }

    /// Shifts wall times by `offset` seconds (e.g. to include calibration time).
    pub fn offset_wall_times(&mut self, offset: f64) {
        self.wall_times.iter_mut().for_each(|t| *t += offset);
    }
}

/// A chain stopped early; the samples recorded so far are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainAbort {
    pub trace: ChainTrace,
    pub error: Error,
}

impl From<ChainAbort> for Error {
    fn from(a: ChainAbort) -> Self {
        a.error
    }
}

/// Runs `config.iterations * config.thinning` kernel steps from `init`,
/// recording every `thinning`-th state.
pub fn run_chain<T: Target + ?Sized, R: Rng + ?Sized>(
    init: &[f64],
    kernel: &Kernel,
    config: &ChainConfig,
    target: &T,
    rng: &mut R,
    clock: &dyn Clock,
) -> Result<ChainTrace, ChainAbort> {
    let mut trace = ChainTrace::empty(target.dim(), kernel.kind());
    let abort = |trace: ChainTrace, error: Error| ChainAbort { trace, error };
    if let Err(e) = kernel.validate() {
        return Err(abort(trace, e));
    }
    if config.thinning == 0 {
        return Err(abort(trace, Error::invalid("thinning must be at least 1")));
    }
    let mut state = match ChainState::new(init.to_vec(), target) {
        Ok(s) => s,
        Err(e) => return Err(abort(trace, e)),
    };
    let start = clock.now();
    let mut step = 0usize;
    for _ in 0..config.iterations {
        let mut any_accepted = false;
        for _ in 0..config.thinning {
            match kernel.step(&mut state, target, rng) {
                Ok(outcome) => {
                    trace.steps_total += 1;
                    match outcome {
                        StepOutcome::Accepted => {
                            trace.steps_accepted += 1;
                            any_accepted = true;
                        }
                        StepOutcome::Rejected => {}
                        StepOutcome::RejectedNonFinite => trace.nonfinite_rejections += 1,
                        StepOutcome::Divergent => trace.divergences += 1,
                    }
                }
                Err(e) => {
                    let e = match e {
                        Error::ChainAborted { reason, .. } => Error::ChainAborted { step, reason },
                        other => Error::ChainAborted {
                            step,
                            reason: format!("{other}"),
                        },
                    };
                    return Err(abort(trace, e));
                }
            }
            step += 1;
        }
        if kernel.kind() == KernelKind::Sghmc {
            state.refresh_potential(target);
        }
        trace.push(&state.theta, state.potential, any_accepted, clock.now() - start);
    }
    Ok(trace)
}
