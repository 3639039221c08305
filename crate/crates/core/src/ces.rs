//! Calibrate, emulate, sample: the FBNN pipeline and its full-BNN baselines.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::emulator::{
    reference_outputs, train_emulator, CalibrationSet, EmulatedTarget, EmulationMode,
    EmulatorModel, EmulatorSpec,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::BnnPosterior;
use crate::nn::OutputActivation;
use crate::rng::fill_standard_normal;
use crate::samplers::{
    run_chain, tune_pcn_beta, ChainAbort, ChainConfig, ChainTrace, Clock, Kernel, KernelKind,
    PcnConfig, Target,
};

/// Draw from `N(0, variance I)`.
pub fn prior_draw<R: Rng + ?Sized>(dim: usize, variance: f64, rng: &mut R) -> Vec<f64> {
    let mut v = alloc::vec![0.0; dim];
    fill_standard_normal(rng, &mut v);
    let s = crate::math::sqrt(variance);
    v.iter_mut().for_each(|x| *x *= s);
    v
}

/// Sorted random subset of `0..n` of size `min(n, cap)`; all rows when `cap >= n`.
pub fn choose_reference<R: Rng + ?Sized>(n: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    if cap == 0 || cap >= n {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub set: CalibrationSet,
    pub trace: ChainTrace,
    /// Final chain state; the sampling phase starts here.
    pub last_state: Vec<f64>,
}

/// Calibration stopped early. `partial` holds the pairs recorded before the
/// failure when there were at least two.
#[derive(Debug, Clone)]
pub struct CalibrationAbort {
    pub partial: Option<CalibrationSet>,
    pub error: Error,
}

impl From<CalibrationAbort> for Error {
    fn from(a: CalibrationAbort) -> Self {
        a.error
    }
}

fn record_outputs(
    posterior: &BnnPosterior<'_>,
    trace: &ChainTrace,
    ref_indices: &[usize],
    mode: EmulationMode,
) -> Result<Matrix> {
    let x_ref = posterior.data().x.select_rows(ref_indices);
    let cols = match mode {
        EmulationMode::Predictions => ref_indices.len() * posterior.spec().output_dim(),
        EmulationMode::ScalarPotential => 1,
    };
    let mut out = Matrix::zeros(trace.len(), cols);
    for (j, theta) in trace.samples().enumerate() {
        match mode {
            EmulationMode::Predictions => {
                out.row_mut(j)
                    .copy_from_slice(&reference_outputs(posterior.spec(), theta, &x_ref)?);
            }
            EmulationMode::ScalarPotential => out.set(j, 0, posterior.potential(theta)?),
        }
    }
    Ok(out)
}

fn to_set(
    posterior: &BnnPosterior<'_>,
    trace: &ChainTrace,
    ref_indices: &[usize],
    mode: EmulationMode,
) -> Result<CalibrationSet> {
    let outputs = record_outputs(posterior, trace, ref_indices, mode)?;
    let thetas = Matrix::from_vec(
        trace.len(),
        trace.dim(),
        trace.samples().flat_map(|s| s.iter().copied()).collect(),
    )?;
    CalibrationSet::new(thetas, outputs, ref_indices.to_vec(), mode)
}

/// Runs `kernel` for `chain.iterations` recorded states from `init` and pairs
/// every recorded `theta` with its exact outputs on the reference rows.
#[allow(clippy::too_many_arguments)]
pub fn collect_calibration<R: Rng + ?Sized>(
    posterior: &BnnPosterior<'_>,
    kernel: &Kernel,
    chain: &ChainConfig,
    ref_indices: &[usize],
    mode: EmulationMode,
    init: &[f64],
    rng: &mut R,
    clock: &dyn Clock,
) -> Result<Calibration, CalibrationAbort> {
    let fail = |error| CalibrationAbort {
        partial: None,
        error,
    };
    if chain.iterations < 2 {
        return Err(fail(Error::invalid("calibration needs J >= 2")));
    }
    if !matches!(kernel.kind(), KernelKind::Sghmc | KernelKind::Pcn) {
        return Err(fail(Error::invalid("calibration kernel must be SGHMC or pCN")));
    }
    if ref_indices.is_empty() || ref_indices.iter().any(|&i| i >= posterior.data().len()) {
        return Err(fail(Error::invalid("reference rows must be training rows")));
    }
    match run_chain(init, kernel, chain, posterior, rng, clock) {
        Ok(trace) => {
            let set = to_set(posterior, &trace, ref_indices, mode).map_err(fail)?;
            let last_state = trace.last().map(<[f64]>::to_vec).unwrap_or_default();
            Ok(Calibration {
                set,
                trace,
                last_state,
            })
        }
        Err(ChainAbort { trace, error }) => {
            let partial = if trace.len() >= 2 {
                to_set(posterior, &trace, ref_indices, mode).ok()
            } else {
                None
            };
            Err(CalibrationAbort { partial, error })
        }
    }
}

/// Which kernels calibrate and which sample; each is SGHMC or pCN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FbnnVariant {
    pub calibration: KernelKind,
    pub sampling: KernelKind,
}

impl FbnnVariant {
    pub fn validate(&self) -> Result<()> {
        let ok = |k| matches!(k, KernelKind::Sghmc | KernelKind::Pcn);
        if ok(self.calibration) && ok(self.sampling) {
            Ok(())
        } else {
            Err(Error::invalid("FBNN kernels must be SGHMC or pCN"))
        }
    }

    /// e.g. `fbnn-sghmc-pcn`.
    pub fn name(&self) -> alloc::string::String {
        format!("fbnn-{}-{}", self.calibration.as_str(), self.sampling.as_str())
    }
}

/// Which potential the sampling-phase pCN pilot runs on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TuningPotential {
    /// The true `Phi`; pilot cost is charged to the sampling phase.
    #[default]
    Exact,
    /// The emulated `Phi^e`.
    Emulated,
}

/// Grid pilot for the sampling-phase pCN step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PcnTuningSpec {
    pub candidates: Vec<f64>,
    pub target_rate: f64,
    pub pilot_steps: usize,
    pub potential: TuningPotential,
}

impl Default for PcnTuningSpec {
    fn default() -> Self {
        Self {
            candidates: alloc::vec![1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 0.1, 0.2, 0.5],
            target_rate: 0.3,
            pilot_steps: 200,
            potential: TuningPotential::Exact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FbnnConfig {
    pub calibration_kernel: Kernel,
    pub calibration_chain: ChainConfig,
    pub sampling_kernel: Kernel,
    pub sampling_chain: ChainConfig,
    pub emulator: EmulatorSpec,
    pub mode: EmulationMode,
    /// Cap on the reference design size `N_ref`.
    pub reference_size: usize,
    /// When set and sampling with pCN, `beta` is picked by a pilot started at
    /// the last calibration state.
    pub pcn_tuning: Option<PcnTuningSpec>,
}

impl FbnnConfig {
    pub fn variant(&self) -> FbnnVariant {
        FbnnVariant {
            calibration: self.calibration_kernel.kind(),
            sampling: self.sampling_kernel.kind(),
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub calibration: f64,
    pub training: f64,
    pub sampling: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct FbnnRun {
    pub variant: FbnnVariant,
    pub calibration: Calibration,
    pub emulator: EmulatorModel,
    /// Sampling-phase trace; wall times start at the beginning of sampling.
    pub trace: ChainTrace,
    pub sampling_kernel: Kernel,
    pub timings: PhaseTimings,
}

/// Builds `Phi^e` for a trained emulator over `posterior`'s training data.
pub fn emulated_target<'m>(
    posterior: &BnnPosterior<'_>,
    emulator: &'m EmulatorModel,
    ref_indices: &[usize],
) -> EmulatedTarget<&'m EmulatorModel> {
    let n = posterior.data().len() as f64;
    EmulatedTarget {
        map: emulator,
        mode: emulator.mode,
        y_ref: posterior.data().y.select_rows(ref_indices),
        noise: posterior.noise().clone(),
        likelihood: posterior.likelihood(),
        softmax: posterior.spec().output_activation() == OutputActivation::Softmax,
        rescale: n / ref_indices.len() as f64,
        prior_variance: posterior.prior().variance(),
    }
}

/// Algorithm: calibrate on the true potential, fit the emulator, then sample
/// `Phi^e` from the last calibration state. Errors carry the phase name.
pub fn run_fbnn<R: Rng + ?Sized>(
    posterior: &BnnPosterior<'_>,
    config: &FbnnConfig,
    init: &[f64],
    rng: &mut R,
    clock: &dyn Clock,
) -> Result<FbnnRun> {
    let variant = config.variant();
    variant.validate()?;
    if config.sampling_chain.iterations == 0 {
        return Err(Error::invalid("FBNN needs T >= 1 sampling iterations"));
    }
    let t0 = clock.now();
    let ref_indices = choose_reference(posterior.data().len(), config.reference_size, rng);
    let calibration = collect_calibration(
        posterior,
        &config.calibration_kernel,
        &config.calibration_chain,
        &ref_indices,
        config.mode,
        init,
        rng,
        clock,
    )
    .map_err(|a| a.error.in_phase("calibration"))?;
    let t1 = clock.now();
    let emulator = train_emulator(&calibration.set, &config.emulator, clock)
        .map_err(|e| e.in_phase("emulation"))?;
    let t2 = clock.now();
    let target = emulated_target(posterior, &emulator, &ref_indices);
    let start = &calibration.last_state;
    // An exact pilot queries the true model, so it is billed to calibration.
    let mut exact_pilot = 0.0;
    let kernel = match (config.sampling_kernel, &config.pcn_tuning) {
        (Kernel::Pcn(_), Some(tuning)) => {
            let p0 = clock.now();
            let pilot: &dyn Target = match tuning.potential {
                TuningPotential::Exact => posterior,
                TuningPotential::Emulated => &target,
            };
            let t = tune_pcn_beta(
                start,
                pilot,
                &tuning.candidates,
                tuning.target_rate,
                tuning.pilot_steps,
                rng,
            )
            .map_err(|e| e.in_phase("sampling"))?;
            if tuning.potential == TuningPotential::Exact {
                exact_pilot = clock.now() - p0;
            }
            Kernel::Pcn(PcnConfig { beta: t.beta })
        }
        (k, _) => k,
    };
    let trace = run_chain(start, &kernel, &config.sampling_chain, &target, rng, clock)
        .map_err(|a| a.error.in_phase("sampling"))?;
    let t3 = clock.now();
    Ok(FbnnRun {
        variant,
        calibration,
        emulator,
        trace,
        sampling_kernel: kernel,
        timings: PhaseTimings {
            calibration: t1 - t0 + exact_pilot,
            training: t2 - t1,
            sampling: t3 - t2 - exact_pilot,
            total: clock.now() - t0,
        },
    })
}

/// Plain MCMC on the true potential for `chain.iterations` recorded samples.
pub fn run_full_bnn<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    kernel: &Kernel,
    chain: &ChainConfig,
    init: &[f64],
    rng: &mut R,
    clock: &dyn Clock,
) -> Result<ChainTrace, ChainAbort> {
    if chain.iterations == 0 {
        return Err(ChainAbort {
            trace: ChainTrace::empty(target.dim(), kernel.kind()),
            error: Error::invalid("need T >= 1 samples"),
        });
    }
    run_chain(init, kernel, chain, target, rng, clock)
}
