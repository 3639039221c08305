use alloc::vec::Vec;

use rand::Rng;

use super::chain::{run_chain, ChainConfig, Kernel};
use super::kernels::PcnConfig;
use super::{NoClock, Target};
use crate::error::{Error, Result};

/// Outcome of a pCN step-size pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct PcnTuning {
    pub beta: f64,
    pub acceptance: f64,
    /// `(beta, acceptance)` for every candidate tried.
    pub grid: Vec<(f64, f64)>,
}

/// Picks the `beta` from `candidates` whose pilot acceptance rate is closest
/// to `target_rate`. Each pilot runs `pilot_steps` steps from `init`.
pub fn tune_pcn_beta<T: Target + ?Sized, R: Rng + ?Sized>(
    init: &[f64],
    target: &T,
    candidates: &[f64],
    target_rate: f64,
    pilot_steps: usize,
    rng: &mut R,
) -> Result<PcnTuning> {
    if candidates.is_empty() || pilot_steps == 0 {
        return Err(Error::invalid("pCN tuning needs candidates and pilot steps"));
    }
    let cfg = ChainConfig {
        iterations: pilot_steps,
        thinning: 1,
    };
    let mut grid = Vec::with_capacity(candidates.len());
    for &beta in candidates {
        let kernel = Kernel::Pcn(PcnConfig { beta });
        let trace = run_chain(init, &kernel, &cfg, target, rng, &NoClock)?;
        grid.push((beta, trace.acceptance_rate()));
    }
    let &(beta, acceptance) = grid
        .iter()
        .min_by(|a, b| {
            (a.1 - target_rate)
                .abs()
                .total_cmp(&(b.1 - target_rate).abs())
        })
        .expect("non-empty grid");
    Ok(PcnTuning {
        beta,
        acceptance,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::samplers::QuadraticTarget;

    #[test]
    fn acceptance_falls_with_beta() {
        let t = QuadraticTarget {
            dim: 20,
            precision: 4.0,
            prior_variance: Some(1.0),
        };
        let init = alloc::vec![0.0; 20];
        let tuning = tune_pcn_beta(&init, &t, &[0.05, 0.3, 0.9], 0.25, 2000, &mut stream(3, 0))
            .unwrap();
        assert!(tuning.grid[0].1 > tuning.grid[2].1);
        assert!(tuning.grid.iter().any(|g| g.0 == tuning.beta));
    }
}
