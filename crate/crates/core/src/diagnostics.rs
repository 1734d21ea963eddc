//! Convergence diagnostics and posterior summary tables.

use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};
use crate::math::{mean, quantile_sorted, sample_variance, sorted};
use crate::model::Param;
use crate::sampler::Draws;

/// Potential scale reduction `R̂ = sqrt(((n-1)/n·W + B/n) / W)` for `m ≥ 2`
/// chains of equal length `n ≥ 2`, with `W` the mean within-chain variance
/// and `B = n·var(chain means)`. `None` when `W = 0`.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::domain("R-hat needs at least two chains"));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::domain("R-hat needs chains of one common length of at least two"));
    }
    let w = chains.iter().filter_map(|c| sample_variance(c)).sum::<f64>() / m as f64;
    if !(w > 0.0) {
        return Ok(None);
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n as f64 * sample_variance(&means).unwrap_or(0.0);
    let nf = n as f64;
    Ok(Some(sqrt(((nf - 1.0) / nf * w + b / nf) / w)))
}

/// One row of the posterior summary table.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
    /// `None` with fewer than two chains or a constant parameter.
    pub rhat: Option<f64>,
}

impl ParamSummary {
    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

/// Mean, sd, percentiles and R̂ of every parameter over all kept draws.
pub fn posterior_table(draws: &Draws) -> Result<Vec<(Param, ParamSummary)>> {
    if draws.n_kept() == 0 {
        return Err(Error::EmptyInput("no kept draws"));
    }
    Param::ALL
        .into_iter()
        .map(|p| {
            let chains = draws.param_chains(p);
            let all: Vec<f64> = chains.iter().flatten().copied().collect();
            let v = sorted(&all);
            let q = |x| quantile_sorted(&v, x);
            let rhat = match gelman_rubin(&chains) {
                Ok(r) => r,
                Err(_) => None,
            };
            Ok((
                p,
                ParamSummary {
                    mean: mean(&all),
                    sd: sample_variance(&all).map(sqrt).unwrap_or(0.0),
                    q025: q(0.025),
                    q25: q(0.25),
                    q50: q(0.5),
                    q75: q(0.75),
                    q975: q(0.975),
                    rhat,
                },
            ))
        })
        .collect()
}
