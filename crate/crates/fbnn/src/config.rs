//! Experiment configuration, read from TOML.
//!
//! Every section has defaults, so an empty file is a valid config for
//! `fbnn-sghmc-pcn` on the synthetic regression problem.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fbnn_core::baselines::{LaplaceConfig, TrainConfig, ViConfig};
use fbnn_core::ces::PcnTuningSpec;
use fbnn_core::emulator::{EmulationMode, EmulatorSpec};
use fbnn_core::optim::OptimizerKind;
use fbnn_core::samplers::KernelKind;
use fbnn_core::synthetic::SyntheticSpec;
use fbnn_core::{Activation, Likelihood, Task};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every inference method the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Dnn,
    Ensemble,
    Vi,
    Laplace,
    Lasso,
    McDropout,
    Swag,
    BnnSghmc,
    BnnPcn,
    BnnSghmcFirst200,
    Fbnn { calibration: KernelKind, sampling: KernelKind },
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::Dnn,
        Method::Ensemble,
        Method::Vi,
        Method::Laplace,
        Method::Lasso,
        Method::McDropout,
        Method::Swag,
        Method::BnnSghmc,
        Method::BnnPcn,
        Method::BnnSghmcFirst200,
        Method::Fbnn {
            calibration: KernelKind::Sghmc,
            sampling: KernelKind::Sghmc,
        },
        Method::Fbnn {
            calibration: KernelKind::Sghmc,
            sampling: KernelKind::Pcn,
        },
        Method::Fbnn {
            calibration: KernelKind::Pcn,
            sampling: KernelKind::Sghmc,
        },
        Method::Fbnn {
            calibration: KernelKind::Pcn,
            sampling: KernelKind::Pcn,
        },
    ];

    pub fn is_mcmc(self) -> bool {
        matches!(
            self,
            Method::BnnSghmc | Method::BnnPcn | Method::BnnSghmcFirst200 | Method::Fbnn { .. }
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Dnn => "dnn",
            Method::Ensemble => "ensemble",
            Method::Vi => "vi",
            Method::Laplace => "laplace",
            Method::Lasso => "lasso",
            Method::McDropout => "mc_dropout",
            Method::Swag => "swag",
            Method::BnnSghmc => "bnn-sghmc",
            Method::BnnPcn => "bnn-pcn",
            Method::BnnSghmcFirst200 => "bnn-sghmc-first200",
            Method::Fbnn { calibration, sampling } => {
                return write!(f, "fbnn-{}-{}", calibration.as_str(), sampling.as_str());
            }
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| {
                let names: Vec<String> = Method::ALL.iter().map(Method::to_string).collect();
                Error::Config(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// `seed` inside the spec is replaced by the run seed.
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub target_column: String,
    pub task: Task,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub prior_variance: f64,
    /// Observation noise variance for regression. When absent: the generator's
    /// value for synthetic data, a linear-fit residual variance for CSV data.
    /// With a Gaussian classification likelihood it defaults to 1.
    pub noise_variance: Option<f64>,
    /// Defaults to Gaussian for regression and cross-entropy for
    /// classification. Classification may use either.
    pub likelihood: Option<Likelihood>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            activation: Activation::Tanh,
            prior_variance: 1.0,
            noise_variance: None,
            likelihood: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    /// Recorded samples `T`.
    pub samples: usize,
    /// Leading fraction dropped before prediction.
    pub burn_in: f64,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self {
            samples: 2000,
            burn_in: fbnn_core::predictive::DEFAULT_BURN_IN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SghmcSection {
    pub learning_rate: f64,
    pub friction: f64,
    pub batch_size: usize,
    /// Steps per recorded sample; 0 means one pass over the training data.
    pub thinning: usize,
}

impl Default for SghmcSection {
    fn default() -> Self {
        Self {
            learning_rate: 3e-6,
            friction: 0.5,
            batch_size: 32,
            thinning: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcnSection {
    /// Fixed step; when absent it is tuned by a pilot (see `tuning.potential`).
    pub beta: Option<f64>,
    pub thinning: usize,
    pub tuning: PcnTuningSpec,
}

impl Default for PcnSection {
    fn default() -> Self {
        Self {
            beta: None,
            thinning: 1,
            tuning: PcnTuningSpec::default(),
        }
    }
}

/// Which wall time divides the minimum ESS for FBNN runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EssTime {
    /// Calibration, emulator training and sampling.
    #[default]
    Total,
    Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbnnSection {
    /// Calibration samples `J`.
    pub calibration_samples: usize,
    pub reference_size: usize,
    pub mode: EmulationMode,
    pub ess_time: EssTime,
}

impl Default for FbnnSection {
    fn default() -> Self {
        Self {
            calibration_samples: 200,
            reference_size: 512,
            mode: EmulationMode::Predictions,
            ess_time: EssTime::Total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub members: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { members: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoSection {
    pub lambda: f64,
}

impl Default for LassoSection {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McDropoutSection {
    pub rate: f64,
    pub passes: usize,
}

impl Default for McDropoutSection {
    fn default() -> Self {
        Self {
            rate: 0.1,
            passes: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwagSection {
    pub collect_last: usize,
    pub train: TrainConfig,
}

impl Default for SwagSection {
    fn default() -> Self {
        Self {
            collect_last: 20,
            train: TrainConfig {
                learning_rate: 1e-2,
                optimizer: OptimizerKind::Sgd,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveSection {
    /// Parameter draws for VI, Laplace, lasso and SWAG.
    pub draws: usize,
    pub level: f64,
    pub band_window: usize,
    pub ece_bins: usize,
}

impl Default for PredictiveSection {
    fn default() -> Self {
        Self {
            draws: 200,
            level: 0.95,
            band_window: 25,
            ece_bins: fbnn_core::diagnostics::DEFAULT_ECE_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureSection {
    pub samplers: Vec<KernelKind>,
    pub n_samples: usize,
    pub per_axis: usize,
    pub half_width: f64,
    pub component_std: f64,
    pub sghmc_learning_rate: f64,
    pub sghmc_friction: f64,
    /// Variance of the Gaussian reference measure pCN preserves.
    pub pcn_prior_variance: f64,
    pub pcn: PcnSection,
}

impl Default for MixtureSection {
    fn default() -> Self {
        Self {
            samplers: vec![KernelKind::Sghmc, KernelKind::Pcn],
            n_samples: 200_000,
            per_axis: 5,
            half_width: 4.0,
            component_std: 0.1,
            sghmc_learning_rate: 1e-3,
            sghmc_friction: 0.1,
            pcn_prior_variance: 16.0,
            pcn: PcnSection {
                tuning: PcnTuningSpec {
                    candidates: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
                    target_rate: 0.3,
                    pilot_steps: 2000,
                    ..PcnTuningSpec::default()
                },
                ..PcnSection::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub data: DataSource,
    pub model: ModelSection,
    pub mcmc: McmcSection,
    pub sghmc: SghmcSection,
    pub pcn: PcnSection,
    pub fbnn: FbnnSection,
    pub emulator: EmulatorSpec,
    pub train: TrainConfig,
    pub ensemble: EnsembleSection,
    pub vi: ViConfig,
    pub laplace: LaplaceConfig,
    pub lasso: LassoSection,
    pub mc_dropout: McDropoutSection,
    pub swag: SwagSection,
    pub predictive: PredictiveSection,
    pub mixture: MixtureSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Fbnn {
                calibration: KernelKind::Sghmc,
                sampling: KernelKind::Pcn,
            },
            seed: 0,
            output_dir: None,
            data: DataSource::default(),
            model: ModelSection::default(),
            mcmc: McmcSection::default(),
            sghmc: SghmcSection::default(),
            pcn: PcnSection::default(),
            fbnn: FbnnSection::default(),
            emulator: EmulatorSpec::default(),
            train: TrainConfig::default(),
            ensemble: EnsembleSection::default(),
            vi: ViConfig::default(),
            laplace: LaplaceConfig::default(),
            lasso: LassoSection::default(),
            mc_dropout: McDropoutSection::default(),
            swag: SwagSection::default(),
            predictive: PredictiveSection::default(),
            mixture: MixtureSection::default(),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.to_owned()))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml_str(&text).map_err(|source| Error::Toml {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks the sections the chosen method uses.
    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic(s) => s.validate()?,
            DataSource::Csv(c) => check(
                (0.0..1.0).contains(&c.test_fraction) && c.test_fraction > 0.0,
                "csv test_fraction must lie in (0, 1)",
            )?,
        }
        check(!self.model.hidden.contains(&0), "hidden layer widths must be positive")?;
        check(
            self.model.prior_variance > 0.0 && self.model.prior_variance.is_finite(),
            "prior_variance must be positive",
        )?;
        let regression = match &self.data {
            DataSource::Synthetic(s) => s.task == Task::Regression,
            DataSource::Csv(c) => c.task == Task::Regression,
        };
        check(
            !(regression && self.model.likelihood == Some(Likelihood::CrossEntropy)),
            "cross_entropy likelihood needs a classification task",
        )?;
        if let Some(v) = self.model.noise_variance {
            check(v > 0.0 && v.is_finite(), "noise_variance must be positive")?;
        }
        check(
            (0.0..1.0).contains(&self.predictive.level) && self.predictive.level > 0.0,
            "predictive level must lie in (0, 1)",
        )?;
        check(self.predictive.ece_bins >= 1, "ece_bins must be at least 1")?;
        let uses_sghmc = matches!(self.method, Method::BnnSghmc | Method::BnnSghmcFirst200)
            || matches!(self.method, Method::Fbnn { calibration, sampling }
                if calibration == KernelKind::Sghmc || sampling == KernelKind::Sghmc);
        if uses_sghmc {
            check(self.sghmc.learning_rate > 0.0, "sghmc learning_rate must be positive")?;
            check((0.0..1.0).contains(&self.sghmc.friction), "sghmc friction must lie in [0, 1)")?;
        }
        if let Some(b) = self.pcn.beta {
            check(b > 0.0 && b <= 1.0, "pcn beta must lie in (0, 1]")?;
        } else {
            check(!self.pcn.tuning.candidates.is_empty(), "pcn tuning needs candidates")?;
        }
        check(self.pcn.thinning >= 1, "pcn thinning must be at least 1")?;
        match self.method {
            Method::BnnSghmc | Method::BnnPcn => {
                check(self.mcmc.samples >= 1, "mcmc samples must be at least 1")?;
            }
            Method::Fbnn { .. } => {
                check(self.mcmc.samples >= 1, "mcmc samples must be at least 1")?;
                check(self.fbnn.calibration_samples >= 10, "fbnn needs at least 10 calibration samples")?;
                check(self.fbnn.reference_size >= 1, "reference_size must be positive")?;
                self.emulator.validate()?;
            }
            Method::BnnSghmcFirst200 => {
                check(self.fbnn.calibration_samples >= 1, "calibration_samples must be positive")?;
            }
            Method::Ensemble => check(self.ensemble.members >= 2, "ensemble needs at least 2 members")?,
            Method::McDropout => {
                check(
                    self.mc_dropout.rate > 0.0 && self.mc_dropout.rate < 1.0,
                    "mc_dropout rate must lie in (0, 1)",
                )?;
                check(self.mc_dropout.passes >= 2, "mc_dropout needs at least 2 passes")?;
            }
            Method::Swag => {
                check(self.swag.collect_last >= 2, "swag collect_last must be at least 2")?;
                check(
                    self.swag.collect_last <= self.swag.train.epochs,
                    "swag collect_last exceeds epochs",
                )?;
            }
            Method::Laplace | Method::Lasso => {
                check(self.laplace.damping > 0.0, "laplace damping must be positive")?;
                check(self.lasso.lambda >= 0.0, "lasso lambda must be non-negative")?;
            }
            Method::Vi => check(self.vi.mc_draws >= 1, "vi mc_draws must be at least 1")?,
            Method::Dnn => {}
        }
        if matches!(self.method, Method::Vi | Method::Laplace | Method::Lasso | Method::Swag) {
            check(self.predictive.draws >= 2, "predictive draws must be at least 2")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("fbnn-mh-pcn".parse::<Method>().is_err());
    }

    #[test]
    fn empty_config_is_default() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("[sghmc]\nlr = 1.0\n").is_err());
    }
}
