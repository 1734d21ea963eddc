//! Run configuration, read from TOML.
//!
//! Every field has a default, and the defaults reproduce the shape of the
//! application pipeline: calibrated synthetic data, the application priors,
//! three chains of 125 000 iterations, the κ grid {0, .25, .5, .75, 1} and
//! three alternative priors for λ at κ = 0.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use switchstrat_core::estimands::Region;
use switchstrat_core::model::LambdaPrior;
use switchstrat_core::sampler::{itt::IttPrior, McmcConfig, ProposalScales};
use switchstrat_core::trial::GeneratorConfig;
use switchstrat_core::{PriorSpec, Theta};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    /// Master seed; every stream in a run is derived from it.
    pub seed: u64,
    /// Observed trial CSV. When absent the data are simulated from `generator`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Study duration for `data`; defaults to the largest censoring time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_max: Option<f64>,
    pub kappa_grid: Vec<f64>,
    pub rhat_threshold: f64,
    pub generator: GeneratorSection,
    pub prior: PriorSpec,
    pub mcmc: McmcSection,
    pub itt: IttSection,
    pub lambda_variants: Vec<LambdaVariant>,
    pub estimands: EstimandSection,
    pub ppc: PpcSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: "default".into(),
            output_dir: "out".into(),
            seed: 20_240_611,
            data: None,
            c_max: None,
            kappa_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            rhat_threshold: 1.1,
            generator: GeneratorSection::default(),
            prior: PriorSpec::default(),
            mcmc: McmcSection::default(),
            itt: IttSection::default(),
            lambda_variants: vec![
                LambdaVariant { label: "normal_var1".into(), prior: LambdaPrior::Normal { mean: 0.0, var: 1.0 } },
                LambdaVariant { label: "normal_var10".into(), prior: LambdaPrior::Normal { mean: 0.0, var: 10.0 } },
                LambdaVariant { label: "improper".into(), prior: LambdaPrior::ImproperUniform },
            ],
            estimands: EstimandSection::default(),
            ppc: PpcSection::default(),
        }
    }
}

/// Synthetic trial settings; the seed comes from the run's master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub n: usize,
    pub p_treat: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub theta: Theta,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GeneratorConfig::calibrated(0);
        GeneratorSection { n: g.n, p_treat: g.p_treat, c_min: g.c_min, c_max: g.c_max, theta: g.theta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub adapt_burnin: bool,
    pub proposal_scales: ProposalScales,
}

impl Default for McmcSection {
    fn default() -> Self {
        let m = McmcConfig::default();
        McmcSection {
            n_iter: m.n_iter,
            burn_in: m.burn_in,
            thin: m.thin,
            n_chains: m.n_chains,
            adapt_burnin: m.adapt_burnin,
            proposal_scales: m.proposal_scales,
        }
    }
}

impl McmcSection {
    pub fn with_seed(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
            n_chains: self.n_chains,
            seed,
            proposal_scales: self.proposal_scales,
            adapt_burnin: self.adapt_burnin,
        }
    }
}

/// The intention-to-treat comparison fitted alongside the main model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IttSection {
    pub enabled: bool,
    pub prior: IttPrior,
}

impl Default for IttSection {
    fn default() -> Self {
        IttSection { enabled: true, prior: IttPrior::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaVariant {
    /// Directory-safe name, used as `lambda=<label>`.
    pub label: String,
    pub prior: LambdaPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimandSection {
    pub y_grid: Vec<f64>,
    pub s_values: Vec<f64>,
    pub regions: Vec<Region>,
    /// Monte Carlo nodes per posterior draw.
    pub mc_size: usize,
    /// Posterior draws used for curves, evenly spaced over the kept draws.
    pub max_draws: usize,
}

impl Default for EstimandSection {
    fn default() -> Self {
        let fine = (1..=60).map(|k| k as f64 / 20.0);
        let coarse = (13..=32).map(|k| k as f64 / 4.0);
        EstimandSection {
            y_grid: fine.chain(coarse).collect(),
            s_values: (1..=11).map(|k| k as f64 / 4.0).collect(),
            regions: vec![Region::All, Region::UpTo(1.0), Region::Beyond(1.0)],
            mc_size: 2000,
            max_draws: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcSection {
    pub t_grid: Vec<f64>,
}

impl Default for PpcSection {
    fn default() -> Self {
        PpcSection { t_grid: switchstrat_core::ppc::default_t_grid() }
    }
}

/// Seeds handed to each stochastic stage, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub generator: u64,
    pub mcmc: u64,
    pub nodes: u64,
    pub ppc: u64,
}

/// First eight bytes of SHA-256 over the master seed and a stage tag.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of the serialized configuration.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            master: self.seed,
            generator: derive_seed(self.seed, "generator"),
            mcmc: derive_seed(self.seed, "mcmc"),
            nodes: derive_seed(self.seed, "nodes"),
            ppc: derive_seed(self.seed, "ppc"),
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let g = &self.generator;
        GeneratorConfig {
            n: g.n,
            p_treat: g.p_treat,
            theta: g.theta,
            c_min: g.c_min,
            c_max: g.c_max,
            seed: self.seeds().generator,
        }
    }

    pub fn mcmc_config(&self) -> McmcConfig {
        self.mcmc.with_seed(self.seeds().mcmc)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AppError::Config(m));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return bad(format!("run_id `{}` is not a directory name", self.run_id));
        }
        if self.kappa_grid.is_empty() || self.kappa_grid.iter().any(|k| !(0.0..=1.0).contains(k)) {
            return bad("kappa_grid must be nonempty with values in [0, 1]".into());
        }
        if !(self.rhat_threshold > 1.0) {
            return bad("rhat_threshold must exceed 1".into());
        }
        for v in &self.lambda_variants {
            if v.label.is_empty() || !v.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
                return bad(format!("lambda variant label `{}` is not directory-safe", v.label));
            }
            PriorSpec { lambda: v.prior, ..self.prior }.validate()?;
        }
        let e = &self.estimands;
        for (name, grid) in [("y_grid", &e.y_grid), ("s_values", &e.s_values), ("ppc.t_grid", &self.ppc.t_grid)] {
            if grid.is_empty() || !strictly_increasing(grid) || grid[0] <= 0.0 {
                return bad(format!("{name} must be nonempty, positive and strictly increasing"));
            }
        }
        if e.mc_size == 0 || e.max_draws == 0 {
            return bad("estimands.mc_size and estimands.max_draws must be at least 1".into());
        }
        self.prior.validate()?;
        self.mcmc_config().validate()?;
        if self.data.is_none() {
            self.generator_config().validate()?;
        }
        Ok(())
    }
}

/// Formats κ for directory names: `kappa=0`, `kappa=0.25`.
pub fn kappa_label(kappa: f64) -> String {
    format!("kappa={kappa}")
}
