//! Data-augmentation MCMC for the switching mixture model.
//!
//! One iteration:
//!
//! 1. when κ > 0, refresh the latent `Y*(0)` of every treated unit by an
//!    independence Metropolis step with the prior sub-model as proposal;
//! 2. impute switching statuses: ambiguous controls exactly, treated units by
//!    Metropolis with a draw from the prior mixture as candidate;
//! 3. draw π from its Beta full conditional;
//! 4. one Metropolis step per parameter, in a fixed order. Shapes use Gamma
//!    proposals centred at the current value, everything else a Normal walk.
//!
//! During burn-in the proposal scales may be tuned by Robbins–Monro towards
//! an acceptance rate of 0.35; they are frozen before any draw is kept.

use alloc::vec::Vec;

use libm::{exp, log, log1p, sqrt};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::estimands;
use crate::math::{gamma_log_pdf, mean, normal_log_pdf, sample_variance};
use crate::model::{block_log_lik, log_prob_ambiguous_non_switcher, unit_log_joint, Param, PriorSpec, Theta};
use crate::trial::{open01, Arm, AugmentedUnit, Dataset, ObservedPattern, PatientRecord, SwitchStatus};
use crate::weibull::WeibullParams;
use crate::ChainRng;

const TARGET_ACCEPTANCE: f64 = 0.35;

/// Proposal standard deviations, one per Metropolis block.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ProposalScales {
    pub alpha_s: f64,
    pub beta_s: f64,
    pub alpha_y_ns: f64,
    pub beta_y_ns: f64,
    pub alpha_y_sw: f64,
    pub beta_y_sw: f64,
    pub nu_y_ns: f64,
    pub gamma_y_ns: f64,
    pub nu_y_sw: f64,
    pub gamma_y_sw: f64,
    pub lambda: f64,
}

impl Default for ProposalScales {
    fn default() -> Self {
        ProposalScales {
            alpha_s: 0.06,
            beta_s: 0.1,
            alpha_y_ns: 0.06,
            beta_y_ns: 0.1,
            alpha_y_sw: 0.06,
            beta_y_sw: 0.12,
            nu_y_ns: 0.06,
            gamma_y_ns: 0.12,
            nu_y_sw: 0.08,
            gamma_y_sw: 0.15,
            lambda: 0.06,
        }
    }
}

impl ProposalScales {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::AlphaS => self.alpha_s,
            Param::BetaS => self.beta_s,
            Param::AlphaYNs => self.alpha_y_ns,
            Param::BetaYNs => self.beta_y_ns,
            Param::AlphaYSw => self.alpha_y_sw,
            Param::BetaYSw => self.beta_y_sw,
            Param::NuYNs => self.nu_y_ns,
            Param::GammaYNs => self.gamma_y_ns,
            Param::NuYSw => self.nu_y_sw,
            Param::GammaYSw => self.gamma_y_sw,
            Param::Lambda => self.lambda,
            Param::Pi => f64::NAN,
        }
    }

    fn to_array(self) -> [f64; 11] {
        Param::MH_BLOCKS.map(|p| self.get(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub proposal_scales: ProposalScales,
    pub adapt_burnin: bool,
}

impl Default for McmcConfig {
    /// 125 000 iterations, 25 000 discarded, every 20th kept, three chains.
    fn default() -> Self {
        McmcConfig {
            n_iter: 125_000,
            burn_in: 25_000,
            thin: 20,
            n_chains: 3,
            seed: 20_240_611,
            proposal_scales: ProposalScales::default(),
            adapt_burnin: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(alloc::format!(
                "burn_in ({}) must be below n_iter ({})",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 || self.n_chains == 0 {
            return Err(Error::Config("thin and n_chains must be at least 1".into()));
        }
        for p in Param::MH_BLOCKS {
            let s = self.proposal_scales.get(p);
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(alloc::format!("proposal scale for {} must be positive", p.name())));
            }
        }
        Ok(())
    }

    /// Number of draws kept per chain.
    pub fn kept_per_chain(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Quantities recorded alongside each kept draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub ace_ns: f64,
    pub mean_y0_ns: f64,
    pub mean_y1_ns: f64,
}

impl Snapshot {
    pub const NAMES: [&'static str; 3] = ["ace_ns", "mean_y0_ns", "mean_y1_ns"];

    pub fn of(theta: &Theta) -> Self {
        Snapshot {
            ace_ns: estimands::ace_ns(theta),
            mean_y0_ns: estimands::mean_y0_ns(theta),
            mean_y1_ns: estimands::mean_y1_ns(theta),
        }
    }

    pub fn values(&self) -> [f64; 3] {
        [self.ace_ns, self.mean_y0_ns, self.mean_y1_ns]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub iter: usize,
    pub theta: Theta,
    pub snapshot: Snapshot,
}

/// Metropolis acceptance counts after burn-in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Acceptance {
    pub tried: [u64; 11],
    pub accepted: [u64; 11],
    pub status_tried: u64,
    pub status_accepted: u64,
    pub y0_tried: u64,
    pub y0_accepted: u64,
}

impl Acceptance {
    /// Acceptance rate of a parameter block; `None` before any attempt.
    pub fn rate(&self, p: Param) -> Option<f64> {
        let i = block_index(p)?;
        (self.tried[i] > 0).then(|| self.accepted[i] as f64 / self.tried[i] as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    pub draws: Vec<Draw>,
    pub acceptance: Acceptance,
    /// Proposal scales in force after burn-in.
    pub scales: [f64; 11],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub kappa: f64,
    pub chains: Vec<ChainDraws>,
}

impl Draws {
    pub fn n_kept(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// Per-chain sequences of one parameter.
    pub fn param_chains(&self, p: Param) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d.theta.get(p)).collect())
            .collect()
    }

    /// All kept parameter vectors, chain by chain.
    pub fn thetas(&self) -> impl Iterator<Item = &Theta> + '_ {
        self.chains.iter().flat_map(|c| c.draws.iter().map(|d| &d.theta))
    }
}

fn block_index(p: Param) -> Option<usize> {
    Param::MH_BLOCKS.iter().position(|&q| q == p)
}

/// Blocks sharing the same likelihood terms (a Weibull pair).
fn term_group(p: Param) -> u8 {
    match p {
        Param::AlphaS | Param::BetaS => 0,
        Param::AlphaYNs | Param::BetaYNs => 1,
        Param::AlphaYSw | Param::BetaYSw => 2,
        Param::NuYNs | Param::GammaYNs => 3,
        Param::NuYSw | Param::GammaYSw => 4,
        Param::Lambda => 5,
        Param::Pi => 6,
    }
}

/// `π_NS`: probability that a control with neither switch nor event by `c`
/// is a non-switcher.
pub fn pi_ns(c: f64, theta: &Theta) -> f64 {
    exp(log_prob_ambiguous_non_switcher(c, theta))
}

/// Exact draw for an ambiguous control: non-switcher with probability `π_NS`,
/// otherwise a switcher whose switching time is censored at `c`.
pub fn impute_ambiguous_control(c: f64, theta: &Theta, u: f64) -> SwitchStatus {
    if log(u) < log_prob_ambiguous_non_switcher(c, theta) {
        SwitchStatus::NonSwitcher
    } else {
        SwitchStatus::SwitchAt(c)
    }
}

/// A candidate from the prior mixture: non-switcher when `u1 < π`, otherwise
/// a Weibull(α_S, β_S) switching time by inversion of `u2`.
pub fn propose_switch_status(theta: &Theta, u1: f64, u2: f64) -> SwitchStatus {
    if u1 < theta.pi {
        SwitchStatus::NonSwitcher
    } else {
        SwitchStatus::SwitchAt(theta.sw.quantile_survival(u2))
    }
}

/// Metropolis acceptance probability for a switching-status candidate.
///
/// `log_r` is the log posterior ratio of candidate over current. The factor
/// applied to `r` follows the case table of the algorithm:
///
/// | current | candidate | factor                         |
/// |---------|-----------|--------------------------------|
/// | NS      | NS        | 1                              |
/// | NS      | s         | π / ((1-π) f_S(s))             |
/// | s       | NS        | (1-π) f_S(s) / π               |
/// | s       | s'        | f_S(s) / f_S(s')               |
///
/// With κ > 0 a candidate switching after the imputed `Y*(0)` is refused.
pub fn mh_switch_acceptance(
    current: SwitchStatus,
    cand: SwitchStatus,
    log_r: f64,
    theta: &Theta,
    y0_star: Option<f64>,
) -> f64 {
    if let (SwitchStatus::SwitchAt(s), Some(y0)) = (cand, y0_star) {
        if theta.kappa > 0.0 && s > y0 {
            return 0.0;
        }
    }
    let ln_pi = log(theta.pi);
    let ln_1mpi = log1p(-theta.pi);
    let ln_fs = |s: f64| theta.sw.log_pdf_shifted(s, 0.0);
    let correction = match (current, cand) {
        (SwitchStatus::NonSwitcher, SwitchStatus::NonSwitcher) => 0.0,
        (SwitchStatus::NonSwitcher, SwitchStatus::SwitchAt(s)) => ln_pi - ln_1mpi - ln_fs(s),
        (SwitchStatus::SwitchAt(s), SwitchStatus::NonSwitcher) => ln_1mpi + ln_fs(s) - ln_pi,
        (SwitchStatus::SwitchAt(s), SwitchStatus::SwitchAt(t)) => ln_fs(s) - ln_fs(t),
    };
    acceptance_from_log(log_r + correction)
}

/// `min(1, e^x)`, with NaN (an infeasible pair) mapped to 0.
#[inline]
fn acceptance_from_log(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else if x >= 0.0 {
        1.0
    } else {
        exp(x)
    }
}

/// The control-arm survival law of a unit with the given status, as
/// `(location, residual Weibull)`.
fn y0_law(s_star: SwitchStatus, theta: &Theta) -> (f64, WeibullParams) {
    match s_star {
        SwitchStatus::NonSwitcher => (0.0, theta.y0_ns),
        SwitchStatus::SwitchAt(s) => (s, theta.y0_switcher(s)),
    }
}

/// One independence Metropolis update of a treated unit's `Y*(0)` (κ > 0).
///
/// The candidate `location + W` is drawn from the prior sub-model with
/// `u_prop`; it is accepted when `u_acc < r·f(current)/f(cand)`. A candidate
/// above `ỹ/κ` for an observed event is always refused. Returns the new value
/// and whether the candidate was accepted.
pub fn impute_treated_y0(
    rec: &PatientRecord,
    s_star: SwitchStatus,
    theta: &Theta,
    current: f64,
    u_prop: f64,
    u_acc: f64,
) -> (f64, bool) {
    let (loc, w) = y0_law(s_star, theta);
    let cand = loc + w.quantile_survival(u_prop);
    if rec.y_event && theta.kappa * cand > rec.y_tilde {
        return (current, false);
    }
    let joint = |y0: f64| {
        unit_log_joint(
            rec,
            &AugmentedUnit {
                s_star,
                y0_star: Some(y0),
            },
            theta,
        )
    };
    let log_r = joint(cand) - joint(current);
    let log_p = log_r + w.log_pdf_shifted(current, loc) - w.log_pdf_shifted(cand, loc);
    if u_acc < acceptance_from_log(log_p) {
        (cand, true)
    } else {
        (current, false)
    }
}

/// Exact draw from the Beta full conditional of π.
pub fn gibbs_pi<R: Rng + ?Sized>(n_ns: u64, n_sw: u64, a: f64, b: f64, rng: &mut R) -> f64 {
    let beta = Beta::new(a + n_ns as f64, b + n_sw as f64).expect("positive Beta parameters");
    beta.sample(rng)
}

/// Gamma proposal with mean `center` and standard deviation `scale`,
/// i.e. shape `(center/scale)²` and rate `center/scale²`.
pub fn gamma_proposal_log_density(x: f64, center: f64, scale: f64) -> f64 {
    let shape = (center / scale) * (center / scale);
    gamma_log_pdf(x, shape, scale * scale / center)
}

fn draw_gamma_proposal<R: Rng + ?Sized>(center: f64, scale: f64, rng: &mut R) -> f64 {
    let shape = (center / scale) * (center / scale);
    Gamma::new(shape, scale * scale / center)
        .expect("positive Gamma proposal")
        .sample(rng)
}

/// Weibull fit from the first two moments of `log t`:
/// `var = π²/(6α²)` and `mean = -(β + γ_E)/α`.
pub fn fit_log_moments(times: &[f64]) -> Option<WeibullParams> {
    let logs: Vec<f64> = times.iter().filter(|&&t| t > 0.0).map(|&t| log(t)).collect();
    let var = sample_variance(&logs)?;
    if !(var > 0.0) {
        return None;
    }
    let shape = core::f64::consts::PI / sqrt(6.0 * var);
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    WeibullParams::new(shape, -EULER_GAMMA - shape * mean(&logs)).ok()
}

/// Starting values from observed control-arm subsets: switching times, deaths
/// of known non-switchers and post-switch residuals of known switchers. The
/// treated-arm residual laws start from the matching control fits; π starts
/// at its prior mean and λ at 0.
pub fn initial_theta(data: &Dataset, prior: &PriorSpec, kappa: f64) -> Theta {
    let mut switch_times = Vec::new();
    let mut ns_deaths = Vec::new();
    let mut sw_residuals = Vec::new();
    for r in data.records() {
        match r.classify() {
            ObservedPattern::KnownNonSwitcher => ns_deaths.push(r.y_tilde),
            ObservedPattern::KnownSwitcherDead => {
                let s = r.s_tilde.unwrap_or(r.c);
                switch_times.push(s);
                sw_residuals.push(r.y_tilde - s);
            }
            ObservedPattern::KnownSwitcherCensored => switch_times.push(r.s_tilde.unwrap_or(r.c)),
            _ => {}
        }
    }
    let fallback = WeibullParams { shape: 1.0, log_rate: -1.0 };
    let sw = fit_log_moments(&switch_times).unwrap_or(fallback);
    let y0_ns = fit_log_moments(&ns_deaths).unwrap_or(fallback);
    let y0_sw = fit_log_moments(&sw_residuals).unwrap_or(fallback);
    Theta {
        pi: prior.pi_a / (prior.pi_a + prior.pi_b),
        sw,
        y0_ns,
        y0_sw,
        y1_ns: y0_ns,
        y1_sw: y0_sw,
        lambda: 0.0,
        kappa,
    }
}

/// Multiplies every parameter by an independent factor in [0.8, 1.2].
pub fn jitter<R: Rng + ?Sized>(theta: &Theta, rng: &mut R) -> Theta {
    let mut t = *theta;
    for p in Param::ALL {
        let f = 1.0 + 0.2 * (2.0 * rng.random::<f64>() - 1.0);
        t.set(p, theta.get(p) * f);
    }
    t.pi = t.pi.clamp(0.02, 0.98);
    t
}

/// State of one chain. The step methods are public so that partial samplers
/// (for example a single block with everything else held fixed) can be run.
pub struct Sampler<'a> {
    data: &'a Dataset,
    prior: PriorSpec,
    theta: Theta,
    aug: Vec<AugmentedUnit>,
    scales: [f64; 11],
    adapt_steps: [u64; 11],
    rng: ChainRng,
    counting: bool,
    acceptance: Acceptance,
    /// Block log likelihood after the last parameter update, keyed by its
    /// term group; valid until the state changes elsewhere.
    cached: Option<(u8, f64)>,
}

impl<'a> Sampler<'a> {
    /// A chain at `theta`. Treated units start as non-switchers (with `Y*(0)`
    /// drawn below `ỹ/κ` when κ > 0); ambiguous controls as non-switchers.
    pub fn new(
        data: &'a Dataset,
        prior: PriorSpec,
        theta: Theta,
        scales: ProposalScales,
        mut rng: ChainRng,
    ) -> Result<Self> {
        theta.validate()?;
        prior.validate()?;
        let kappa = theta.kappa;
        let aug = data
            .records()
            .iter()
            .map(|r| {
                let s_star = match (r.arm, r.s_event) {
                    (Arm::Control, true) => SwitchStatus::SwitchAt(r.s_tilde.unwrap_or(r.c)),
                    _ => SwitchStatus::NonSwitcher,
                };
                let y0_star = if kappa == 0.0 {
                    None
                } else if r.arm == Arm::Control {
                    Some(r.y_tilde)
                } else {
                    let u = open01(&mut rng);
                    Some(if r.y_event {
                        theta.y0_ns.sample_below(r.y_tilde / kappa, u)
                    } else {
                        theta.y0_ns.quantile_survival(u)
                    })
                };
                AugmentedUnit { s_star, y0_star }
            })
            .collect();
        Ok(Sampler {
            data,
            prior,
            theta,
            aug,
            scales: scales.to_array(),
            adapt_steps: [0; 11],
            rng,
            counting: false,
            acceptance: Acceptance::default(),
            cached: None,
        })
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn augmentation(&self) -> &[AugmentedUnit] {
        &self.aug
    }

    pub fn acceptance(&self) -> &Acceptance {
        &self.acceptance
    }

    pub fn scales(&self) -> [f64; 11] {
        self.scales
    }

    /// Whether acceptance counters are updated.
    pub fn set_counting(&mut self, on: bool) {
        self.counting = on;
    }

    /// Step 1 (κ > 0): refresh `Y*(0)` for treated units.
    pub fn impute_y0(&mut self) {
        if self.theta.kappa == 0.0 {
            return;
        }
        self.cached = None;
        for (rec, a) in self.data.records().iter().zip(self.aug.iter_mut()) {
            if rec.arm != Arm::Treated {
                continue;
            }
            let cur = a.y0_star.expect("treated Y*(0) is imputed when kappa > 0");
            let (u_prop, u_acc) = (open01(&mut self.rng), self.rng.random::<f64>());
            let (next, accepted) = impute_treated_y0(rec, a.s_star, &self.theta, cur, u_prop, u_acc);
            a.y0_star = Some(next);
            if self.counting {
                self.acceptance.y0_tried += 1;
                self.acceptance.y0_accepted += accepted as u64;
            }
        }
    }

    /// Step 2: switching statuses, controls first.
    pub fn impute_statuses(&mut self) {
        self.cached = None;
        let theta = self.theta;
        for (rec, a) in self.data.records().iter().zip(self.aug.iter_mut()) {
            if rec.classify() == ObservedPattern::AmbiguousControl {
                a.s_star = impute_ambiguous_control(rec.c, &theta, open01(&mut self.rng));
            }
        }
        for (rec, a) in self.data.records().iter().zip(self.aug.iter_mut()) {
            if rec.arm != Arm::Treated {
                continue;
            }
            let cand = propose_switch_status(&theta, self.rng.random::<f64>(), open01(&mut self.rng));
            let proposed = AugmentedUnit { s_star: cand, ..*a };
            let log_r = unit_log_joint(rec, &proposed, &theta) - unit_log_joint(rec, a, &theta);
            let p = mh_switch_acceptance(a.s_star, cand, log_r, &theta, a.y0_star);
            let accepted = self.rng.random::<f64>() < p;
            if accepted {
                a.s_star = cand;
            }
            if self.counting {
                self.acceptance.status_tried += 1;
                self.acceptance.status_accepted += accepted as u64;
            }
        }
    }

    /// Step 3: π from Beta(a + #non-switchers, b + #switchers).
    pub fn update_pi(&mut self) {
        let n_ns = self.aug.iter().filter(|a| !a.s_star.is_switcher()).count() as u64;
        let n_sw = self.aug.len() as u64 - n_ns;
        self.theta.pi = gibbs_pi(n_ns, n_sw, self.prior.pi_a, self.prior.pi_b, &mut self.rng);
        self.cached = None;
    }

    /// One Metropolis update of a parameter block. With `adapt` the block's
    /// proposal scale takes a Robbins–Monro step. Returns acceptance.
    pub fn update_block(&mut self, p: Param, adapt: bool) -> bool {
        let i = block_index(p).expect("update_block takes a Metropolis block");
        let scale = self.scales[i];
        let cur = self.theta.get(p);
        let group = term_group(p);
        let records = self.data.records();
        let cur_ll = match self.cached {
            Some((g, v)) if g == group => v,
            _ => block_log_lik(p, records, &self.aug, &self.theta),
        };
        let (cand, log_q_ratio) = if p.is_shape() {
            let cand = draw_gamma_proposal(cur, scale, &mut self.rng);
            let q = gamma_proposal_log_density(cur, cand, scale) - gamma_proposal_log_density(cand, cur, scale);
            (cand, q)
        } else {
            let step = Normal::new(0.0, scale).expect("positive scale").sample(&mut self.rng);
            (cur + step, 0.0)
        };
        let mut accepted = false;
        let mut new_ll = cur_ll;
        if cand.is_finite() && (!p.is_shape() || cand > 0.0) {
            let mut moved = self.theta;
            moved.set(p, cand);
            let cand_ll = block_log_lik(p, records, &self.aug, &moved);
            let log_a = cand_ll - cur_ll + self.prior.log_density(p, cand) - self.prior.log_density(p, cur)
                + log_q_ratio;
            if self.rng.random::<f64>() < acceptance_from_log(log_a) {
                self.theta = moved;
                new_ll = cand_ll;
                accepted = true;
            }
        }
        self.cached = Some((group, new_ll));
        if self.counting {
            self.acceptance.tried[i] += 1;
            self.acceptance.accepted[i] += accepted as u64;
        }
        if adapt {
            self.adapt_steps[i] += 1;
            let gain = libm::pow(self.adapt_steps[i] as f64, -0.6);
            let target = if accepted { 1.0 } else { 0.0 } - TARGET_ACCEPTANCE;
            self.scales[i] = (self.scales[i] * exp(gain * target)).clamp(1e-4, 10.0);
        }
        accepted
    }

    /// Step 4: all Metropolis blocks in sweep order.
    pub fn sweep(&mut self, adapt: bool) {
        for p in Param::MH_BLOCKS {
            self.update_block(p, adapt);
        }
    }

    /// One full iteration.
    pub fn iterate(&mut self, adapt: bool) {
        self.impute_y0();
        self.impute_statuses();
        self.update_pi();
        self.sweep(adapt);
    }
}

/// Runs chain number `chain`. Its generator is stream `chain + 1` of the
/// master seed, so chains are reproducible one by one and in any order.
pub fn run_chain(data: &Dataset, prior: &PriorSpec, config: &McmcConfig, kappa: f64, chain: usize) -> Result<ChainDraws> {
    config.validate()?;
    prior.validate()?;
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::Config(alloc::format!("kappa = {kappa} outside [0,1]")));
    }
    let mut rng = crate::stream_rng(config.seed, chain as u64 + 1);
    let start = jitter(&initial_theta(data, prior, kappa), &mut rng);
    let mut sampler = Sampler::new(data, *prior, start, config.proposal_scales, rng)?;
    sampler.impute_y0();
    sampler.impute_statuses();
    let mut draws = Vec::with_capacity(config.kept_per_chain());
    for iter in 1..=config.n_iter {
        let burning = iter <= config.burn_in;
        sampler.set_counting(!burning);
        sampler.iterate(burning && config.adapt_burnin);
        if !burning && (iter - config.burn_in) % config.thin == 0 {
            let theta = *sampler.theta();
            draws.push(Draw {
                iter,
                theta,
                snapshot: Snapshot::of(&theta),
            });
        }
    }
    Ok(ChainDraws {
        chain,
        draws,
        acceptance: *sampler.acceptance(),
        scales: sampler.scales(),
    })
}

/// Runs all chains one after another. Equivalent to collecting
/// [`run_chain`] for `0..n_chains` in any order or in parallel.
pub fn run_chains(data: &Dataset, prior: &PriorSpec, config: &McmcConfig, kappa: f64) -> Result<Draws> {
    let chains = (0..config.n_chains)
        .map(|c| run_chain(data, prior, config, kappa, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(Draws { kappa, chains })
}

/// Two-arm Weibull model fitted by assignment, ignoring switching.
pub mod itt {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq)]
    #[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
    pub struct IttPrior {
        pub shape: crate::model::GammaPrior,
        pub log_rate: crate::model::NormalPrior,
    }

    impl Default for IttPrior {
        /// Gamma(shape 1, scale 10⁴) shapes and N(0, 10⁴) log-rates.
        fn default() -> Self {
            IttPrior {
                shape: crate::model::GammaPrior { shape: 1.0, scale: 1e4 },
                log_rate: crate::model::NormalPrior { mean: 0.0, var: 1e4 },
            }
        }
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct IttDraw {
        pub control: WeibullParams,
        pub treated: WeibullParams,
    }

    fn arm_log_lik(records: &[PatientRecord], arm: Arm, w: &WeibullParams) -> f64 {
        records
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| {
                if r.y_event {
                    w.log_pdf_shifted(r.y_tilde, 0.0)
                } else {
                    w.log_survival_shifted(r.y_tilde, 0.0)
                }
            })
            .sum()
    }

    fn log_prior(prior: &IttPrior, w: &WeibullParams) -> f64 {
        gamma_log_pdf(w.shape, prior.shape.shape, prior.shape.scale)
            + normal_log_pdf(w.log_rate, prior.log_rate.mean, prior.log_rate.var)
    }

    /// One chain of the ITT model; same schedule and seeding rules as
    /// [`run_chain`], on a separate stream family.
    pub fn run_chain(data: &Dataset, prior: &IttPrior, config: &McmcConfig, chain: usize) -> Result<Vec<IttDraw>> {
        config.validate()?;
        let records = data.records();
        let mut rng = crate::stream_rng(config.seed, (1 << 32) + chain as u64);
        let fit = |arm: Arm| {
            let times: Vec<f64> = records.iter().filter(|r| r.arm == arm && r.y_event).map(|r| r.y_tilde).collect();
            fit_log_moments(&times).unwrap_or(WeibullParams { shape: 1.0, log_rate: -1.0 })
        };
        let mut arms = [fit(Arm::Control), fit(Arm::Treated)];
        for w in arms.iter_mut() {
            w.shape *= 1.0 + 0.2 * (2.0 * rng.random::<f64>() - 1.0);
            w.log_rate *= 1.0 + 0.2 * (2.0 * rng.random::<f64>() - 1.0);
        }
        let mut scales = [0.05f64; 4];
        let mut steps = [0u64; 4];
        let mut out = Vec::with_capacity(config.kept_per_chain());
        for iter in 1..=config.n_iter {
            let adapt = iter <= config.burn_in && config.adapt_burnin;
            for (k, arm) in [Arm::Control, Arm::Treated].into_iter().enumerate() {
                let mut cur_ll = arm_log_lik(records, arm, &arms[k]);
                for shape_block in [true, false] {
                    let j = 2 * k + usize::from(!shape_block);
                    let w = arms[k];
                    let mut cand = w;
                    let mut log_q = 0.0;
                    if shape_block {
                        cand.shape = draw_gamma_proposal(w.shape, scales[j], &mut rng);
                        log_q = gamma_proposal_log_density(w.shape, cand.shape, scales[j])
                            - gamma_proposal_log_density(cand.shape, w.shape, scales[j]);
                    } else {
                        cand.log_rate += Normal::new(0.0, scales[j]).expect("positive scale").sample(&mut rng);
                    }
                    let mut accepted = false;
                    if cand.is_valid() {
                        let cand_ll = arm_log_lik(records, arm, &cand);
                        let log_a = cand_ll - cur_ll + log_prior(prior, &cand) - log_prior(prior, &w) + log_q;
                        if rng.random::<f64>() < acceptance_from_log(log_a) {
                            arms[k] = cand;
                            cur_ll = cand_ll;
                            accepted = true;
                        }
                    }
                    if adapt {
                        steps[j] += 1;
                        let gain = libm::pow(steps[j] as f64, -0.6);
                        let target = if accepted { 1.0 } else { 0.0 } - TARGET_ACCEPTANCE;
                        scales[j] = (scales[j] * exp(gain * target)).clamp(1e-4, 10.0);
                    }
                }
            }
            if iter > config.burn_in && (iter - config.burn_in) % config.thin == 0 {
                out.push(IttDraw {
                    control: arms[0],
                    treated: arms[1],
                });
            }
        }
        Ok(out)
    }
}
