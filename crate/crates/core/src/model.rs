//! Parameters, priors and log densities of the switching mixture model.
//!
//! Sub-models, with `G` a Weibull in the `(shape, log-rate)` parameterization:
//!
//! ```text
//! S(0)                ~ Weibull(α_S, β_S)                     (switchers only)
//! Y(0) | non-switcher ~ Weibull(ᾱ_Y, β̄_Y)
//! Y(0) | S(0) = s     ~ s + Weibull(α_Y, β_Y + λ log s)
//! Y(1) | non-switcher ~ κ·Y(0) + Weibull(ν̄_Y, γ̄_Y)
//! Y(1) | S(0) = s     ~ κ·Y(0) + Weibull(ν_Y, γ_Y + λ log s)
//! ```
//!
//! with `P(non-switcher) = π` and κ fixed for a run.

use libm::log;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{beta_log_pdf, gamma_log_pdf, log_add_exp, log_mean_exp, normal_log_pdf};
use crate::trial::{open01, Arm, AugmentedUnit, Dataset, PatientRecord, SwitchStatus};
use crate::weibull::WeibullParams;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Theta {
    pub pi: f64,
    /// Switching time `(α_S, β_S)`.
    pub sw: WeibullParams,
    /// `Y(0)` for non-switchers `(ᾱ_Y, β̄_Y)`.
    pub y0_ns: WeibullParams,
    /// Residual `Y(0) - s` for switchers `(α_Y, β_Y)`.
    pub y0_sw: WeibullParams,
    /// Residual `Y(1) - κY(0)` for non-switchers `(ν̄_Y, γ̄_Y)`.
    pub y1_ns: WeibullParams,
    /// Residual `Y(1) - κY(0)` for switchers `(ν_Y, γ_Y)`.
    pub y1_sw: WeibullParams,
    pub lambda: f64,
    pub kappa: f64,
}

/// Scalar components of [`Theta`], in sweep order. κ is not a parameter here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Pi,
    AlphaS,
    BetaS,
    AlphaYNs,
    BetaYNs,
    AlphaYSw,
    BetaYSw,
    NuYNs,
    GammaYNs,
    NuYSw,
    GammaYSw,
    Lambda,
}

impl Param {
    pub const ALL: [Param; 12] = [
        Param::Pi,
        Param::AlphaS,
        Param::BetaS,
        Param::AlphaYNs,
        Param::BetaYNs,
        Param::AlphaYSw,
        Param::BetaYSw,
        Param::NuYNs,
        Param::GammaYNs,
        Param::NuYSw,
        Param::GammaYSw,
        Param::Lambda,
    ];

    /// The Metropolis blocks (everything but π, which has a Gibbs step).
    pub const MH_BLOCKS: [Param; 11] = [
        Param::AlphaS,
        Param::BetaS,
        Param::AlphaYNs,
        Param::BetaYNs,
        Param::AlphaYSw,
        Param::BetaYSw,
        Param::NuYNs,
        Param::GammaYNs,
        Param::NuYSw,
        Param::GammaYSw,
        Param::Lambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Pi => "pi",
            Param::AlphaS => "alpha_s",
            Param::BetaS => "beta_s",
            Param::AlphaYNs => "alpha_y_ns",
            Param::BetaYNs => "beta_y_ns",
            Param::AlphaYSw => "alpha_y_sw",
            Param::BetaYSw => "beta_y_sw",
            Param::NuYNs => "nu_y_ns",
            Param::GammaYNs => "gamma_y_ns",
            Param::NuYSw => "nu_y_sw",
            Param::GammaYSw => "gamma_y_sw",
            Param::Lambda => "lambda",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Weibull shapes get Gamma proposals and priors.
    pub fn is_shape(self) -> bool {
        matches!(
            self,
            Param::AlphaS | Param::AlphaYNs | Param::AlphaYSw | Param::NuYNs | Param::NuYSw
        )
    }
}

impl Theta {
    /// Posterior means from the zidovudine application, used as simulation truth.
    pub fn calibration_truth(kappa: f64) -> Theta {
        let w = |a, b| WeibullParams { shape: a, log_rate: b };
        Theta {
            pi: 0.38,
            sw: w(1.56, -1.29),
            y0_ns: w(1.38, -1.09),
            y0_sw: w(0.94, -1.21),
            y1_ns: w(1.29, -1.85),
            y1_sw: w(1.30, -2.24),
            lambda: 0.10,
            kappa,
        }
    }

    /// `Y(0) - s` given `S(0) = s`.
    #[inline]
    pub fn y0_switcher(&self, s: f64) -> WeibullParams {
        self.y0_sw.with_log_rate_offset(self.lambda * log(s))
    }

    /// `Y(1) - κY(0)` given `S(0) = s`.
    #[inline]
    pub fn y1_switcher(&self, s: f64) -> WeibullParams {
        self.y1_sw.with_log_rate_offset(self.lambda * log(s))
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Pi => self.pi,
            Param::AlphaS => self.sw.shape,
            Param::BetaS => self.sw.log_rate,
            Param::AlphaYNs => self.y0_ns.shape,
            Param::BetaYNs => self.y0_ns.log_rate,
            Param::AlphaYSw => self.y0_sw.shape,
            Param::BetaYSw => self.y0_sw.log_rate,
            Param::NuYNs => self.y1_ns.shape,
            Param::GammaYNs => self.y1_ns.log_rate,
            Param::NuYSw => self.y1_sw.shape,
            Param::GammaYSw => self.y1_sw.log_rate,
            Param::Lambda => self.lambda,
        }
    }

    pub fn set(&mut self, p: Param, v: f64) {
        let slot = match p {
            Param::Pi => &mut self.pi,
            Param::AlphaS => &mut self.sw.shape,
            Param::BetaS => &mut self.sw.log_rate,
            Param::AlphaYNs => &mut self.y0_ns.shape,
            Param::BetaYNs => &mut self.y0_ns.log_rate,
            Param::AlphaYSw => &mut self.y0_sw.shape,
            Param::BetaYSw => &mut self.y0_sw.log_rate,
            Param::NuYNs => &mut self.y1_ns.shape,
            Param::GammaYNs => &mut self.y1_ns.log_rate,
            Param::NuYSw => &mut self.y1_sw.shape,
            Param::GammaYSw => &mut self.y1_sw.log_rate,
            Param::Lambda => &mut self.lambda,
        };
        *slot = v;
    }

    pub fn values(&self) -> [f64; 12] {
        Param::ALL.map(|p| self.get(p))
    }

    pub fn from_values(values: [f64; 12], kappa: f64) -> Theta {
        let mut t = Theta::calibration_truth(kappa);
        for (p, v) in Param::ALL.into_iter().zip(values) {
            t.set(p, v);
        }
        t
    }

    /// Weibull blocks, λ and κ only.
    pub fn validate_components(&self) -> Result<()> {
        for (name, w) in [
            ("switching", self.sw),
            ("y0 non-switcher", self.y0_ns),
            ("y0 switcher", self.y0_sw),
            ("y1 non-switcher", self.y1_ns),
            ("y1 switcher", self.y1_sw),
        ] {
            if !w.is_valid() {
                return Err(Error::invalid(alloc::format!(
                    "{name} Weibull(shape={}, log_rate={})",
                    w.shape, w.log_rate
                )));
            }
        }
        if !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid(alloc::format!("kappa = {} outside [0,1]", self.kappa)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::invalid(alloc::format!("pi = {} outside (0,1)", self.pi)));
        }
        self.validate_components()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalPrior {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LambdaPrior {
    Normal { mean: f64, var: f64 },
    ImproperUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PriorSpec {
    pub pi_a: f64,
    pub pi_b: f64,
    pub alpha_s: GammaPrior,
    pub beta_s: NormalPrior,
    pub alpha_y_ns: GammaPrior,
    pub beta_y_ns: NormalPrior,
    pub alpha_y_sw: GammaPrior,
    pub beta_y_sw: NormalPrior,
    pub nu_y_ns: GammaPrior,
    pub gamma_y_ns: NormalPrior,
    pub nu_y_sw: GammaPrior,
    pub gamma_y_sw: NormalPrior,
    pub lambda: LambdaPrior,
}

impl Default for PriorSpec {
    /// The application priors: flat Beta on π, vague Gamma(1, scale 10)
    /// shapes, vague N(0, 10⁴) log-rates, and the tighter priors on
    /// (ν̄_Y, γ̄_Y, γ_Y) that help separate the treated-arm mixture.
    fn default() -> Self {
        let vague_shape = GammaPrior { shape: 1.0, scale: 10.0 };
        let vague = NormalPrior { mean: 0.0, var: 1e4 };
        let unit = NormalPrior { mean: 0.0, var: 1.0 };
        PriorSpec {
            pi_a: 1.0,
            pi_b: 1.0,
            alpha_s: vague_shape,
            beta_s: vague,
            alpha_y_ns: vague_shape,
            beta_y_ns: vague,
            alpha_y_sw: vague_shape,
            beta_y_sw: vague,
            nu_y_ns: GammaPrior { shape: 125.0, scale: 0.01 },
            gamma_y_ns: unit,
            nu_y_sw: vague_shape,
            gamma_y_sw: unit,
            lambda: LambdaPrior::Normal { mean: 0.0, var: 1e4 },
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.pi_a) || !pos(self.pi_b) {
            return Err(Error::Config("Beta prior on pi needs positive a, b".into()));
        }
        for p in Param::MH_BLOCKS {
            let ok = if p.is_shape() {
                let g = self.gamma(p);
                pos(g.shape) && pos(g.scale)
            } else if p == Param::Lambda {
                match self.lambda {
                    LambdaPrior::Normal { mean, var } => mean.is_finite() && pos(var),
                    LambdaPrior::ImproperUniform => true,
                }
            } else {
                let n = self.normal(p);
                n.mean.is_finite() && pos(n.var)
            };
            if !ok {
                return Err(Error::Config(alloc::format!("invalid prior for {}", p.name())));
            }
        }
        Ok(())
    }

    fn gamma(&self, p: Param) -> GammaPrior {
        match p {
            Param::AlphaS => self.alpha_s,
            Param::AlphaYNs => self.alpha_y_ns,
            Param::AlphaYSw => self.alpha_y_sw,
            Param::NuYNs => self.nu_y_ns,
            Param::NuYSw => self.nu_y_sw,
            _ => unreachable!("{:?} is not a shape", p),
        }
    }

    fn normal(&self, p: Param) -> NormalPrior {
        match p {
            Param::BetaS => self.beta_s,
            Param::BetaYNs => self.beta_y_ns,
            Param::BetaYSw => self.beta_y_sw,
            Param::GammaYNs => self.gamma_y_ns,
            Param::GammaYSw => self.gamma_y_sw,
            _ => unreachable!("{:?} has no normal prior", p),
        }
    }

    /// Log prior density of one component at `value`.
    pub fn log_density(&self, p: Param, value: f64) -> f64 {
        match p {
            Param::Pi => beta_log_pdf(value, self.pi_a, self.pi_b),
            Param::Lambda => match self.lambda {
                LambdaPrior::Normal { mean, var } => normal_log_pdf(value, mean, var),
                LambdaPrior::ImproperUniform => 0.0,
            },
            p if p.is_shape() => {
                let g = self.gamma(p);
                gamma_log_pdf(value, g.shape, g.scale)
            }
            p => {
                let n = self.normal(p);
                normal_log_pdf(value, n.mean, n.var)
            }
        }
    }

    /// Sum of the component log densities; κ carries no prior mass.
    pub fn log_prior(&self, theta: &Theta) -> f64 {
        Param::ALL
            .into_iter()
            .map(|p| self.log_density(p, theta.get(p)))
            .sum()
    }
}

/// Density block for an event (`log f`) or a censoring (`log G`) at `t - shift`.
#[inline]
fn event_block(w: &WeibullParams, event: bool, t: f64, shift: f64) -> f64 {
    if event {
        w.log_pdf_shifted(t, shift)
    } else {
        w.log_survival_shifted(t, shift)
    }
}

/// `log π` or `log(1 - π)` according to the status.
#[inline]
pub fn mix_term(aug: &AugmentedUnit, theta: &Theta) -> f64 {
    match aug.s_star {
        SwitchStatus::NonSwitcher => log(theta.pi),
        SwitchStatus::SwitchAt(_) => libm::log1p(-theta.pi),
    }
}

/// Switching-time factor: `f_S(s)` for observed or imputed switches,
/// `G_S(c)` for controls imputed as switching after censoring.
#[inline]
pub fn switch_term(rec: &PatientRecord, aug: &AugmentedUnit, theta: &Theta) -> f64 {
    let SwitchStatus::SwitchAt(s) = aug.s_star else {
        return 0.0;
    };
    match rec.arm {
        Arm::Control if !rec.s_event => theta.sw.log_survival_shifted(rec.c, 0.0),
        _ => theta.sw.log_pdf_shifted(s, 0.0),
    }
}

/// Observed control-arm survival factor. Zero for treated units and for
/// switchers whose switch is beyond censoring (then `Y(0) > S(0) > C`).
#[inline]
pub fn y0_term(rec: &PatientRecord, aug: &AugmentedUnit, theta: &Theta) -> f64 {
    if rec.arm != Arm::Control {
        return 0.0;
    }
    match aug.s_star {
        SwitchStatus::NonSwitcher => event_block(&theta.y0_ns, rec.y_event, rec.y_tilde, 0.0),
        SwitchStatus::SwitchAt(_) if !rec.s_event => 0.0,
        SwitchStatus::SwitchAt(_) => {
            let s = rec.s_tilde.unwrap_or(rec.c);
            event_block(&theta.y0_switcher(s), rec.y_event, rec.y_tilde, s)
        }
    }
}

/// Log density of an imputed treated-arm `Y*(0)` under its sub-model.
/// Zero when nothing is imputed (κ = 0).
#[inline]
pub fn y0_latent_term(rec: &PatientRecord, aug: &AugmentedUnit, theta: &Theta) -> f64 {
    if rec.arm != Arm::Treated {
        return 0.0;
    }
    let Some(y0) = aug.y0_star else {
        return 0.0;
    };
    match aug.s_star {
        SwitchStatus::NonSwitcher => theta.y0_ns.log_pdf_shifted(y0, 0.0),
        SwitchStatus::SwitchAt(s) => theta.y0_switcher(s).log_pdf_shifted(y0, s),
    }
}

/// Treated-arm survival factor at `ỹ - κ·Y*(0)`.
#[inline]
pub fn y1_term(rec: &PatientRecord, aug: &AugmentedUnit, theta: &Theta) -> f64 {
    if rec.arm != Arm::Treated {
        return 0.0;
    }
    let shift = theta.kappa * aug.y0_star.unwrap_or(0.0);
    match aug.s_star {
        SwitchStatus::NonSwitcher => event_block(&theta.y1_ns, rec.y_event, rec.y_tilde, shift),
        SwitchStatus::SwitchAt(s) => event_block(&theta.y1_switcher(s), rec.y_event, rec.y_tilde, shift),
    }
}

/// One unit's factor of the complete-data posterior, conditional on the
/// imputed `S*(0)` and `Y*(0)`.
///
/// Returns `-inf` for an augmentation incompatible with the observation,
/// such as `ỹ ≤ κ·Y*(0)` for an observed treated event.
pub fn unit_log_complete(rec: &PatientRecord, aug: &AugmentedUnit, theta: &Theta) -> f64 {
    mix_term(aug, theta) + switch_term(rec, aug, theta) + y0_term(rec, aug, theta) + y1_term(rec, aug, theta)
}

/// Joint density of the unit's data and its latent values: the complete-data
/// factor times the density of the imputed `Y*(0)` of a treated unit. This is
/// what the sampler targets when κ > 0; for κ = 0 the two coincide.
pub fn unit_log_joint(rec: &PatientRecord, aug: &AugmentedUnit, theta: &Theta) -> f64 {
    unit_log_complete(rec, aug, theta) + y0_latent_term(rec, aug, theta)
}

pub fn log_complete_posterior(
    data: &Dataset,
    aug: &[AugmentedUnit],
    theta: &Theta,
    prior: &PriorSpec,
) -> f64 {
    debug_assert_eq!(data.len(), aug.len());
    prior.log_prior(theta)
        + data
            .records()
            .iter()
            .zip(aug)
            .map(|(r, a)| unit_log_complete(r, a, theta))
            .sum::<f64>()
}

pub fn log_joint_posterior(
    data: &Dataset,
    aug: &[AugmentedUnit],
    theta: &Theta,
    prior: &PriorSpec,
) -> f64 {
    prior.log_prior(theta)
        + data
            .records()
            .iter()
            .zip(aug)
            .map(|(r, a)| unit_log_joint(r, a, theta))
            .sum::<f64>()
}

/// The part of the joint log likelihood that depends on `param`.
///
/// Differences of this quantity between two values of `param` equal the
/// differences of the full joint log likelihood.
pub fn block_log_lik(param: Param, records: &[PatientRecord], aug: &[AugmentedUnit], theta: &Theta) -> f64 {
    let mut total = 0.0;
    for (rec, a) in records.iter().zip(aug) {
        let ns = !a.s_star.is_switcher();
        let treated = rec.arm == Arm::Treated;
        total += match param {
            Param::Pi => mix_term(a, theta),
            Param::AlphaS | Param::BetaS => switch_term(rec, a, theta),
            Param::AlphaYNs | Param::BetaYNs if ns => {
                if treated {
                    y0_latent_term(rec, a, theta)
                } else {
                    y0_term(rec, a, theta)
                }
            }
            Param::AlphaYSw | Param::BetaYSw if !ns => {
                if treated {
                    y0_latent_term(rec, a, theta)
                } else {
                    y0_term(rec, a, theta)
                }
            }
            Param::NuYNs | Param::GammaYNs if ns && treated => y1_term(rec, a, theta),
            Param::NuYSw | Param::GammaYSw if !ns && treated => y1_term(rec, a, theta),
            Param::Lambda if !ns => {
                if treated {
                    y0_latent_term(rec, a, theta) + y1_term(rec, a, theta)
                } else {
                    y0_term(rec, a, theta)
                }
            }
            _ => 0.0,
        };
    }
    total
}

/// Log of the mixture weight `π_NS` with which a control that neither
/// switched nor died before `c` is a non-switcher.
pub fn log_prob_ambiguous_non_switcher(c: f64, theta: &Theta) -> f64 {
    let ns = log(theta.pi) + theta.y0_ns.log_survival_shifted(c, 0.0);
    let sw = libm::log1p(-theta.pi) + theta.sw.log_survival_shifted(c, 0.0);
    ns - log_add_exp(ns, sw)
}

/// Observed-data log likelihood of one unit.
///
/// Control units are in closed form. Treated units integrate the latent
/// `(S(0), Y(0))` by stratified Monte Carlo with `mc_size` prior draws per stratum;
/// at κ = 0 the `Y(0)` integral is trivial and only `S(0)` is sampled.
pub fn unit_log_observed<R: Rng + ?Sized>(
    rec: &PatientRecord,
    theta: &Theta,
    mc_size: usize,
    rng: &mut R,
) -> f64 {
    let ln_pi = log(theta.pi);
    let ln_1mpi = libm::log1p(-theta.pi);
    match rec.arm {
        Arm::Control => {
            if rec.s_event {
                let s = rec.s_tilde.unwrap_or(rec.c);
                ln_1mpi
                    + theta.sw.log_pdf_shifted(s, 0.0)
                    + event_block(&theta.y0_switcher(s), rec.y_event, rec.y_tilde, s)
            } else if rec.y_event {
                ln_pi + theta.y0_ns.log_pdf_shifted(rec.y_tilde, 0.0)
            } else {
                log_add_exp(
                    ln_pi + theta.y0_ns.log_survival_shifted(rec.c, 0.0),
                    ln_1mpi + theta.sw.log_survival_shifted(rec.c, 0.0),
                )
            }
        }
        Arm::Treated => {
            let m = mc_size.max(1);
            // Stratified draws in the first latent coordinate and a Latin
            // hypercube in the second: unbiased, with far less noise than
            // plain sampling for these smooth one- and two-dimensional integrals.
            let u = stratified(m, rng);
            let mut v = stratified(m, rng);
            v.shuffle(rng);
            let mut buf = alloc::vec::Vec::with_capacity(m);
            let ns = if theta.kappa == 0.0 {
                event_block(&theta.y1_ns, rec.y_event, rec.y_tilde, 0.0)
            } else {
                buf.extend(u.iter().map(|&ui| {
                    let y0 = theta.y0_ns.quantile_survival(ui);
                    event_block(&theta.y1_ns, rec.y_event, rec.y_tilde, theta.kappa * y0)
                }));
                log_mean_exp(&buf)
            };
            buf.clear();
            buf.extend(u.iter().zip(&v).map(|(&ui, &vi)| {
                let s = theta.sw.quantile_survival(ui);
                let shift = if theta.kappa == 0.0 {
                    0.0
                } else {
                    theta.kappa * (s + theta.y0_switcher(s).quantile_survival(vi))
                };
                event_block(&theta.y1_switcher(s), rec.y_event, rec.y_tilde, shift)
            }));
            let sw = log_mean_exp(&buf);
            log_add_exp(ln_pi + ns, ln_1mpi + sw)
        }
    }
}

/// `(i + U_i)/m` for `i < m`, each strictly inside (0, 1).
fn stratified<R: Rng + ?Sized>(m: usize, rng: &mut R) -> alloc::vec::Vec<f64> {
    (0..m).map(|i| (i as f64 + open01(rng)) / m as f64).collect()
}

/// Observed-data log likelihood. Deterministic given the generator state;
/// meant for reporting, not for use inside the sampler.
pub fn log_observed_likelihood<R: Rng + ?Sized>(
    data: &Dataset,
    theta: &Theta,
    mc_size: usize,
    rng: &mut R,
) -> f64 {
    data.records()
        .iter()
        .map(|r| unit_log_observed(r, theta, mc_size, rng))
        .sum()
}
