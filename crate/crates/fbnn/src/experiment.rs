//! Runs one configured method end to end and collects its metrics.

use std::time::Instant;

use fbnn_core::baselines::{self, ParamSampler};
use fbnn_core::ces::{self, FbnnConfig};
use fbnn_core::diagnostics::{self, CalibrationBins, CredibleBand, EssReport};
use fbnn_core::predictive::{summarize, PredictiveDraws, PredictiveSummary};
use fbnn_core::rng::stream;
use fbnn_core::samplers::{
    tune_pcn_beta, ChainConfig, ChainTrace, Clock, Kernel, KernelKind, PcnConfig, PcnTuning, SghmcConfig,
};
use fbnn_core::{BnnPosterior, GaussianPriorSpec, Likelihood, Matrix, MlpSpec, NoiseModel, OutputActivation, Task};
use serde::{Deserialize, Serialize};

use crate::config::{EssTime, ExperimentConfig, Method};
use crate::data::{self, PreparedData};
use crate::error::Result;

/// Wall clock in seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock(Instant);

impl MonotonicClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl MonotonicClock {
    pub fn now_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::start()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.now_secs()
    }
}

/// Keys of [`Metrics`] that depend on wall-clock time and are excluded from
/// reproducibility comparisons.
pub const TIMING_FIELDS: &[&str] = &[
    "min_ess_per_s",
    "spdup",
    "seconds_calibration",
    "seconds_training",
    "seconds_sampling",
    "seconds_total",
    "seconds_per_sample",
];

/// The metric block written to `metrics.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub method: String,
    /// `complete` or `failed`.
    pub status: String,
    pub error: Option<String>,
    pub seed: u64,
    pub task: Option<Task>,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub mse: Option<f64>,
    pub cp: Option<f64>,
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    pub samples: Option<usize>,
    pub acceptance_rate: Option<f64>,
    pub pcn_beta: Option<f64>,
    pub calibration_samples: Option<usize>,
    pub emulator_validation_sup_error: Option<f64>,
    pub ensemble_failures: Option<usize>,
    pub laplace_floored: Option<usize>,
    pub ess_min: Option<f64>,
    pub ess_med: Option<f64>,
    pub ess_max: Option<f64>,
    pub ess_constant_coordinates: Option<usize>,
    pub min_ess_per_s: Option<f64>,
    /// Filled in by `compare` against a baseline report.
    pub spdup: Option<f64>,
    pub seconds_calibration: Option<f64>,
    pub seconds_training: Option<f64>,
    pub seconds_sampling: Option<f64>,
    pub seconds_total: f64,
    /// Sampling-phase seconds per recorded sample (MCMC methods).
    pub seconds_per_sample: Option<f64>,
}

impl Metrics {
    pub fn is_complete(&self) -> bool {
        self.status == "complete"
    }

    /// JSON with every timing-derived key removed.
    pub fn without_timing(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("metrics serialize");
        if let Some(obj) = v.as_object_mut() {
            for k in TIMING_FIELDS {
                obj.remove(*k);
            }
        }
        v
    }
}

/// Everything a run produces; written to disk by [`crate::report`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Option<ChainTrace>,
    pub summary: Option<PredictiveSummary>,
    pub y_test: Matrix,
    pub labels_test: Option<Vec<usize>>,
    pub band: Option<CredibleBand>,
    pub bins: Option<CalibrationBins>,
    pub pcn_tuning: Option<PcnTuning>,
}

/// The network, noise model and likelihood implied by a config and dataset.
pub struct Problem {
    pub data: PreparedData,
    pub spec: MlpSpec,
    pub noise: NoiseModel,
    pub prior: GaussianPriorSpec,
    pub likelihood: Likelihood,
    pub train: fbnn_core::Dataset,
    pub test: fbnn_core::Dataset,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let data = data::prepare(&cfg.data, cfg.seed)?;
        let train = data.split.train_set();
        let test = data.split.test_set();
        let task = data.split.data.task;
        let mut sizes = vec![train.x.cols()];
        sizes.extend_from_slice(&cfg.model.hidden);
        sizes.push(train.y.cols());
        let output = match task {
            Task::Regression => OutputActivation::Identity,
            Task::Classification => OutputActivation::Softmax,
        };
        let spec = MlpSpec::uniform(sizes, cfg.model.activation, output)?;
        let noise = match task {
            Task::Regression => {
                let v = match (cfg.model.noise_variance, data.noise_variance) {
                    (Some(v), _) => v,
                    (None, Some(v)) if v > 0.0 => v,
                    _ => data::linear_residual_variance(&data.split)?,
                };
                NoiseModel::isotropic(v, train.y.cols())?
            }
            // Only read by the Gaussian likelihood.
            Task::Classification => NoiseModel::isotropic(cfg.model.noise_variance.unwrap_or(1.0), train.y.cols())?,
        };
        Ok(Self {
            prior: GaussianPriorSpec::new(cfg.model.prior_variance)?,
            likelihood: cfg.model.likelihood.unwrap_or(Likelihood::default_for(task)),
            data,
            spec,
            noise,
            train,
            test,
        })
    }

    pub fn task(&self) -> Task {
        self.data.split.data.task
    }

    pub fn posterior(&self) -> Result<BnnPosterior<'_>> {
        Ok(BnnPosterior::new(&self.spec, &self.train, &self.noise, self.prior, self.likelihood)?)
    }
}

fn sghmc_kernel(cfg: &ExperimentConfig) -> Kernel {
    Kernel::Sghmc(SghmcConfig {
        learning_rate: cfg.sghmc.learning_rate,
        friction: cfg.sghmc.friction,
        batch_size: cfg.sghmc.batch_size,
    })
}

/// Steps per SGHMC record: one pass over `n` rows unless configured.
fn sghmc_thinning(cfg: &ExperimentConfig, n: usize) -> usize {
    if cfg.sghmc.thinning > 0 {
        cfg.sghmc.thinning
    } else {
        let b = cfg.sghmc.batch_size;
        if b == 0 || b >= n {
            1
        } else {
            n.div_ceil(b)
        }
    }
}

/// pCN kernel with the configured `beta` or one tuned from `init` on `target`.
fn pcn_kernel<T: fbnn_core::samplers::Target + ?Sized>(
    cfg: &ExperimentConfig,
    init: &[f64],
    target: &T,
    seed_stream: u64,
) -> Result<(Kernel, Option<PcnTuning>)> {
    match cfg.pcn.beta {
        Some(beta) => Ok((Kernel::Pcn(PcnConfig { beta }), None)),
        None => {
            let t = &cfg.pcn.tuning;
            let tuning = tune_pcn_beta(
                init,
                target,
                &t.candidates,
                t.target_rate,
                t.pilot_steps,
                &mut stream(cfg.seed, seed_stream),
            )?;
            Ok((Kernel::Pcn(PcnConfig { beta: tuning.beta }), Some(tuning)))
        }
    }
}

fn summarize_draws(problem: &Problem, draws: &PredictiveDraws, level: f64) -> Result<PredictiveSummary> {
    let noise = (problem.task() == Task::Regression).then_some(&problem.noise);
    Ok(summarize(draws, problem.task(), noise, level)?)
}

fn fill_ess(m: &mut Metrics, report: &EssReport) {
    m.ess_min = Some(report.min);
    m.ess_med = Some(report.median);
    m.ess_max = Some(report.max);
    m.ess_constant_coordinates = Some(report.constant_coordinates);
    m.min_ess_per_s = Some(report.min_ess_per_second);
}

/// Result of the method-specific part of a run.
struct MethodOutput {
    draws: Option<PredictiveDraws>,
    trace: Option<ChainTrace>,
    pcn_tuning: Option<PcnTuning>,
    error: Option<String>,
}

impl MethodOutput {
    fn draws(draws: PredictiveDraws) -> Self {
        Self {
            draws: Some(draws),
            trace: None,
            pcn_tuning: None,
            error: None,
        }
    }
}

fn trace_draws(problem: &Problem, trace: &ChainTrace, burn_in: f64) -> Result<PredictiveDraws> {
    let kept = trace.without_burn_in(burn_in);
    Ok(PredictiveDraws::from_thetas(&problem.spec, kept.samples(), &problem.test.x)?)
}

fn run_method(cfg: &ExperimentConfig, problem: &Problem, m: &mut Metrics, clock: &MonotonicClock) -> Result<MethodOutput> {
    let post = problem.posterior()?;
    let x_test = &problem.test.x;
    let spec = &problem.spec;
    let d = spec.param_count();
    let mut rng = stream(cfg.seed, 2);
    let mut pred_rng = stream(cfg.seed, 3);
    let init = ces::prior_draw(d, problem.prior.variance(), &mut stream(cfg.seed, 100));
    let n_draws = cfg.predictive.draws;
    let out = match cfg.method {
        Method::Dnn => {
            let theta = baselines::train_point_dnn(&post, &cfg.train, &mut rng)?;
            MethodOutput::draws(PredictiveDraws::from_thetas(spec, [&theta.0[..]], x_test)?)
        }
        Method::Ensemble => {
            let members = cfg.ensemble.members;
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = (0..members)
                    .map(|k| {
                        let post = &post;
                        s.spawn(move || baselines::train_ensemble_member(post, &cfg.train, cfg.seed, k))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("ensemble member panicked")).collect()
            });
            let mut ens = baselines::Ensemble {
                members: Vec::new(),
                failures: Vec::new(),
            };
            for (k, r) in results.into_iter().enumerate() {
                match r {
                    Ok(t) => ens.members.push(t),
                    Err(e) => ens.failures.push((k, e)),
                }
            }
            m.ensemble_failures = Some(ens.failures.len());
            if ens.members.len() < 2 {
                let (_, e) = ens.failures.pop().expect("failures recorded");
                return Err(e.into());
            }
            MethodOutput::draws(ens.predictive(spec, x_test)?)
        }
        Method::Vi => {
            let run = baselines::run_vi(&post, &cfg.vi, &mut rng)?;
            MethodOutput::draws(run.state.predictive(spec, x_test, n_draws, &mut pred_rng)?)
        }
        Method::Laplace | Method::Lasso => {
            let state = if cfg.method == Method::Laplace {
                baselines::run_laplace(&post, &cfg.laplace, &mut rng)?
            } else {
                baselines::run_lasso(&post, cfg.lasso.lambda, &cfg.laplace, &mut rng)?
            };
            m.laplace_floored = Some(state.floored);
            MethodOutput::draws(state.predictive(spec, x_test, n_draws, &mut pred_rng)?)
        }
        Method::McDropout => {
            let mc = baselines::run_mc_dropout(&post, &cfg.train, cfg.mc_dropout.rate, &mut rng)?;
            MethodOutput::draws(mc.predictive(spec, x_test, cfg.mc_dropout.passes, &mut pred_rng)?)
        }
        Method::Swag => {
            let state = baselines::run_swag(&post, &cfg.swag.train, cfg.swag.collect_last, &mut rng)?;
            MethodOutput::draws(state.predictive(spec, x_test, n_draws, &mut pred_rng)?)
        }
        Method::BnnSghmc | Method::BnnSghmcFirst200 | Method::BnnPcn => {
            let samples = if cfg.method == Method::BnnSghmcFirst200 {
                cfg.fbnn.calibration_samples
            } else {
                cfg.mcmc.samples
            };
            let t0 = clock.now();
            let (kernel, thinning, tuning) = if cfg.method == Method::BnnPcn {
                let (k, t) = pcn_kernel(cfg, &init, &post, 4)?;
                (k, cfg.pcn.thinning, t)
            } else {
                (sghmc_kernel(cfg), sghmc_thinning(cfg, problem.train.len()), None)
            };
            let chain = ChainConfig {
                iterations: samples,
                thinning,
            };
            let pilot = clock.now() - t0;
            m.samples = Some(samples);
            m.pcn_beta = tuning.as_ref().map(|t| t.beta);
            let (mut trace, error) = match ces::run_full_bnn(&post, &kernel, &chain, &init, &mut rng, clock) {
                Ok(t) => (t, None),
                Err(abort) => (abort.trace, Some(abort.error.to_string())),
            };
            trace.offset_wall_times(pilot);
            m.acceptance_rate = Some(trace.acceptance_rate());
            let total = trace.total_seconds();
            m.seconds_sampling = Some(total);
            m.seconds_per_sample = Some(total / trace.len().max(1) as f64);
            if trace.len() >= 4 {
                fill_ess(m, &diagnostics::ess_report_with_seconds(&trace, total)?);
            }
            let draws = if trace.is_empty() {
                None
            } else {
                Some(trace_draws(problem, &trace, cfg.mcmc.burn_in)?)
            };
            MethodOutput {
                draws,
                trace: Some(trace),
                pcn_tuning: tuning,
                error,
            }
        }
        Method::Fbnn { calibration, sampling } => {
            let t0 = clock.now();
            let thin_sg = sghmc_thinning(cfg, problem.train.len());
            let (cal_kernel, cal_thin, cal_tuning) = match calibration {
                KernelKind::Pcn => {
                    let (k, t) = pcn_kernel(cfg, &init, &post, 4)?;
                    (k, cfg.pcn.thinning, t)
                }
                _ => (sghmc_kernel(cfg), thin_sg, None),
            };
            let pilot = clock.now() - t0;
            let (sampling_kernel, sampling_thin, tune_on_emulator) = match sampling {
                KernelKind::Pcn => (
                    Kernel::Pcn(PcnConfig {
                        beta: cfg.pcn.beta.unwrap_or(0.01),
                    }),
                    cfg.pcn.thinning,
                    cfg.pcn.beta.is_none(),
                ),
                _ => (sghmc_kernel(cfg), thin_sg, false),
            };
            let fcfg = FbnnConfig {
                calibration_kernel: cal_kernel,
                calibration_chain: ChainConfig {
                    iterations: cfg.fbnn.calibration_samples,
                    thinning: cal_thin,
                },
                sampling_kernel,
                sampling_chain: ChainConfig {
                    iterations: cfg.mcmc.samples,
                    thinning: sampling_thin,
                },
                emulator: fbnn_core::emulator::EmulatorSpec {
                    seed: cfg.seed,
                    ..cfg.emulator.clone()
                },
                mode: cfg.fbnn.mode,
                reference_size: cfg.fbnn.reference_size,
                pcn_tuning: tune_on_emulator.then(|| cfg.pcn.tuning.clone()),
            };
            let run = ces::run_fbnn(&post, &fcfg, &init, &mut rng, clock)?;
            let t = run.timings;
            let calib = t.calibration + pilot;
            let total = t.total + pilot;
            m.seconds_calibration = Some(calib);
            m.seconds_training = Some(t.training);
            m.seconds_sampling = Some(t.sampling);
            m.seconds_per_sample = Some(t.sampling / run.trace.len().max(1) as f64);
            m.samples = Some(run.trace.len());
            m.calibration_samples = Some(run.calibration.trace.len());
            m.acceptance_rate = Some(run.trace.acceptance_rate());
            m.emulator_validation_sup_error = Some(run.emulator.validation_sup_error);
            if let Kernel::Pcn(p) = run.sampling_kernel {
                m.pcn_beta = Some(p.beta);
            } else if let Some(ct) = &cal_tuning {
                m.pcn_beta = Some(ct.beta);
            }
            let denom = match cfg.fbnn.ess_time {
                EssTime::Total => total,
                EssTime::Sampling => t.sampling,
            };
            if run.trace.len() >= 4 {
                fill_ess(m, &diagnostics::ess_report_with_seconds(&run.trace, denom)?);
            }
            m.seconds_total = total;
            let draws = trace_draws(problem, &run.trace, cfg.mcmc.burn_in)?;
            MethodOutput {
                draws: Some(draws),
                trace: Some(run.trace),
                pcn_tuning: cal_tuning,
                error: None,
            }
        }
    };
    Ok(out)
}

/// Runs the configured method. Failures inside the method are reported in
/// the returned metrics (`status = "failed"`) together with any partial
/// trace; only setup errors (bad data, bad config) are returned as `Err`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = Problem::build(cfg)?;
    let clock = MonotonicClock::start();
    let mut m = Metrics {
        method: cfg.method.to_string(),
        status: "complete".into(),
        seed: cfg.seed,
        task: Some(problem.task()),
        n_train: problem.train.len(),
        n_test: problem.test.len(),
        dim: problem.spec.param_count(),
        ..Metrics::default()
    };
    let result = run_method(cfg, &problem, &mut m, &clock);
    if !matches!(cfg.method, Method::Fbnn { .. }) {
        m.seconds_total = clock.now();
    }
    let labels_test = problem.test.labels.clone();
    let mut out = RunOutput {
        metrics: m,
        trace: None,
        summary: None,
        y_test: problem.test.y.clone(),
        labels_test,
        band: None,
        bins: None,
        pcn_tuning: None,
    };
    let method_out = match result {
        Ok(o) => o,
        Err(e) => {
            out.metrics.status = "failed".into();
            out.metrics.error = Some(e.to_string());
            return Ok(out);
        }
    };
    if let Some(e) = method_out.error {
        out.metrics.status = "failed".into();
        out.metrics.error = Some(e);
    }
    out.trace = method_out.trace;
    out.pcn_tuning = method_out.pcn_tuning;
    if let Some(draws) = method_out.draws {
        let summary = summarize_draws(&problem, &draws, cfg.predictive.level)?;
        match problem.task() {
            Task::Regression => {
                let r = diagnostics::regression_metrics(&summary, &problem.test.y)?;
                out.metrics.mse = Some(r.mse);
                out.metrics.cp = Some(r.cp);
                if draws.len() >= 2 {
                    out.band = Some(diagnostics::credible_band(
                        &draws,
                        &problem.test.x,
                        &problem.test.y.column(0),
                        cfg.predictive.band_window,
                    )?);
                }
            }
            Task::Classification => {
                let labels = problem.test.labels.as_deref().unwrap_or_default();
                if labels.len() >= cfg.predictive.ece_bins {
                    let c = diagnostics::classification_metrics(&summary, labels, cfg.predictive.ece_bins)?;
                    out.metrics.accuracy = Some(c.accuracy);
                    out.metrics.ece = Some(c.ece);
                    out.bins = Some(c.bins);
                }
            }
        }
        out.summary = Some(summary);
    }
    Ok(out)
}
