use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbnn::compare::compare;
use fbnn::config::{ExperimentConfig, Method};
use fbnn::data::{prepare, write_dataset};
use fbnn::mixture::{mixture_demo, write_mixture};
use fbnn::report::{write_run, COMPARISON_FILE};

#[derive(Parser)]
#[command(name = "fbnn", version, about = "Calibrate, emulate and sample Bayesian neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the configured dataset, split column included, to dataset.csv.
    GenData(Common),
    /// Runs one method and writes metrics.json and the CSV artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the config method, e.g. `bnn-sghmc` or `fbnn-sghmc-pcn`.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Builds comparison.csv from run directories or metrics.json files.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "bnn-sghmc")]
        baseline: String,
        /// Output directory; the working directory when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Samples the 2-D Gaussian mixture and writes scatter_<sampler>.csv.
    MixtureDemo(Common),
    /// Parses and checks a config, printing the resolved TOML.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::GenData(common) => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg);
            std::fs::create_dir_all(&dir)?;
            let data = prepare(&cfg.data, cfg.seed)?;
            let p = dir.join("dataset.csv");
            write_dataset(&p, &data)?;
            report(&[p]);
            Ok(true)
        }
        Command::Run { common, method } => {
            let mut cfg = load(&common)?;
            if let Some(m) = method {
                cfg.method = m;
            }
            cfg.validate()?;
            let dir = out_dir(&common, &cfg);
            let out = fbnn::run_experiment(&cfg)?;
            report(&write_run(&dir, &out)?);
            if let Some(e) = &out.metrics.error {
                eprintln!("{} failed: {e}", out.metrics.method);
            }
            Ok(out.metrics.is_complete())
        }
        Command::Compare { reports, baseline, out } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let out = dir.join(COMPARISON_FILE);
            let rows = compare(&reports, &baseline, &out)?;
            for r in &rows {
                let speed = r.spdup.map_or("-".to_owned(), |s| format!("{s:.3}"));
                println!("{:<24} {:<9} spdup {speed}", r.method, r.status);
            }
            report(&[out]);
            Ok(true)
        }
        Command::MixtureDemo(common) => {
            let cfg = load(&common)?;
            let dir = out_dir(&common, &cfg);
            let run = mixture_demo(&cfg.mixture, cfg.seed)?;
            for s in &run.summary.samplers {
                println!(
                    "{:<6} coverage {:.3} modes {} acceptance {:.3}",
                    s.sampler.as_str(),
                    s.coverage,
                    s.modes_visited,
                    s.acceptance_rate
                );
            }
            report(&write_mixture(&dir, &run)?);
            Ok(true)
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(Path::new(&config))?;
            print!("{}", cfg.to_toml_string());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
