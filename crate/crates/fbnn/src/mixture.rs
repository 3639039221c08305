//! Samplers on the 25-component Gaussian mixture.

use std::path::{Path, PathBuf};

use fbnn_core::diagnostics::MixtureTarget;
use fbnn_core::rng::stream;
use fbnn_core::samplers::{run_chain, tune_pcn_beta, ChainConfig, Kernel, KernelKind, PcnConfig, SghmcConfig};
use serde::{Deserialize, Serialize};

use crate::config::MixtureSection;
use crate::error::{Error, Result};
use crate::experiment::MonotonicClock;
use crate::report::write_csv;

pub const SUMMARY_FILE: &str = "mixture_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSummary {
    pub sampler: KernelKind,
    pub samples: usize,
    /// Fraction of samples within 3 sigma of some center.
    pub coverage: f64,
    pub per_center_coverage: Vec<f64>,
    /// Centers with at least one sample within 3 sigma.
    pub modes_visited: usize,
    pub acceptance_rate: f64,
    pub beta: Option<f64>,
    /// `(beta, acceptance)` pilot grid for pCN.
    pub tuning_grid: Vec<(f64, f64)>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub seed: u64,
    pub samplers: Vec<SamplerSummary>,
}

/// The sample paths plus their summaries.
#[derive(Debug, Clone)]
pub struct MixtureRun {
    pub summary: MixtureSummary,
    pub samples: Vec<(KernelKind, Vec<[f64; 2]>)>,
}

pub fn mixture_target(cfg: &MixtureSection) -> MixtureTarget {
    MixtureTarget::grid(cfg.per_axis, cfg.half_width, cfg.component_std)
}

/// Runs every requested sampler from the origin for `n_samples` steps.
pub fn mixture_demo(cfg: &MixtureSection, seed: u64) -> Result<MixtureRun> {
    if cfg.n_samples < 1000 {
        return Err(Error::Config("mixture demo needs at least 1000 samples".into()));
    }
    if cfg.samplers.is_empty() {
        return Err(Error::Config("mixture demo needs at least one sampler".into()));
    }
    let target = mixture_target(cfg);
    let chain = ChainConfig {
        iterations: cfg.n_samples,
        thinning: 1,
    };
    let init = [0.0, 0.0];
    let mut summaries = Vec::new();
    let mut paths = Vec::new();
    for (i, &kind) in cfg.samplers.iter().enumerate() {
        let mut rng = stream(seed, 10 + i as u64);
        let clock = MonotonicClock::start();
        let (trace, beta, grid) = match kind {
            KernelKind::Sghmc => {
                let kernel = Kernel::Sghmc(SghmcConfig {
                    learning_rate: cfg.sghmc_learning_rate,
                    friction: cfg.sghmc_friction,
                    batch_size: 0,
                });
                (run_chain(&init, &kernel, &chain, &target, &mut rng, &clock).map_err(fbnn_core::Error::from)?, None, Vec::new())
            }
            KernelKind::Pcn => {
                let t = target.clone().with_prior(cfg.pcn_prior_variance);
                let (beta, grid) = match cfg.pcn.beta {
                    Some(b) => (b, Vec::new()),
                    None => {
                        let tu = &cfg.pcn.tuning;
                        let r = tune_pcn_beta(&init, &t, &tu.candidates, tu.target_rate, tu.pilot_steps, &mut rng)?;
                        (r.beta, r.grid)
                    }
                };
                let kernel = Kernel::Pcn(PcnConfig { beta });
                (run_chain(&init, &kernel, &chain, &t, &mut rng, &clock).map_err(fbnn_core::Error::from)?, Some(beta), grid)
            }
            other => {
                return Err(Error::Config(format!("mixture demo supports sghmc and pcn, not {}", other.as_str())));
            }
        };
        let (coverage, per_center) = target.mode_coverage(trace.samples());
        summaries.push(SamplerSummary {
            sampler: kind,
            samples: trace.len(),
            coverage,
            modes_visited: per_center.iter().filter(|&&c| c > 0.0).count(),
            per_center_coverage: per_center,
            acceptance_rate: trace.acceptance_rate(),
            beta,
            tuning_grid: grid,
            seconds: clock.now_secs(),
        });
        paths.push((kind, trace.samples().map(|s| [s[0], s[1]]).collect()));
    }
    Ok(MixtureRun {
        summary: MixtureSummary {
            seed,
            samplers: summaries,
        },
        samples: paths,
    })
}

/// `scatter_<sampler>.csv` per sampler plus the JSON summary.
pub fn write_mixture(dir: &Path, run: &MixtureRun) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for (kind, pts) in &run.samples {
        let p = dir.join(format!("scatter_{}.csv", kind.as_str()));
        write_csv(
            &p,
            &["x", "y", "sampler"],
            pts.iter().map(|q| [q[0].to_string(), q[1].to_string(), kind.as_str().to_owned()]),
        )?;
        out.push(p);
    }
    let p = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&run.summary).map_err(|source| Error::Json {
        path: p.clone(),
        source,
    })?;
    text.push('\n');
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    out.push(p);
    Ok(out)
}
