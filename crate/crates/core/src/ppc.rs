//! Posterior predictive checks for κ = 0 fits.
//!
//! For each posterior draw θ the switching statuses are imputed from their
//! exact conditional law given θ and the data, a replicate trial is simulated
//! with the same assignments and censoring times, and each discrepancy is
//! computed on both complete datasets. A posterior predictive p-value is the
//! share of draws whose replicate discrepancy is at least the observed one.

use alloc::string::String;
use alloc::vec::Vec;

use libm::{exp, log, sqrt};
use rand::Rng;

use crate::error::{Error, Result};
use crate::km::km_fit;
use crate::math::{mean, sample_variance};
use crate::model::{unit_log_complete, Theta};
use crate::sampler::{impute_ambiguous_control, propose_switch_status};
use crate::trial::{draw_latent, observe, open01, Arm, AugmentedUnit, Dataset, ObservedPattern, PatientRecord, SwitchStatus};

/// Number of free parameters (κ excluded) in the BIC discrepancy.
pub const N_PARAMS: usize = 12;

/// Default KM grid: 0.01, 0.02, …, 3.00.
pub fn default_t_grid() -> Vec<f64> {
    (1..=300).map(|k| k as f64 / 100.0).collect()
}

/// Exact draw of a treated unit's status given θ (κ = 0) by rejection from
/// the prior mixture. The acceptance weight is the unit's outcome factor over
/// a bound: 1 for a censored outcome; for an event, the larger of the
/// non-switcher density and `ν_Y/(e·ỹ)`, the largest value a Weibull
/// density with shape `ν_Y` can take at `ỹ` over all rates.
pub fn draw_treated_status<R: Rng + ?Sized>(rec: &PatientRecord, theta: &Theta, rng: &mut R) -> SwitchStatus {
    let factor = |st: SwitchStatus| {
        let w = match st {
            SwitchStatus::NonSwitcher => theta.y1_ns,
            SwitchStatus::SwitchAt(s) => theta.y1_switcher(s),
        };
        if rec.y_event {
            w.log_pdf_shifted(rec.y_tilde, 0.0)
        } else {
            w.log_survival_shifted(rec.y_tilde, 0.0)
        }
    };
    let log_bound = if rec.y_event {
        let ns = theta.y1_ns.log_pdf_shifted(rec.y_tilde, 0.0);
        let sw = log(theta.y1_sw.shape) - 1.0 - log(rec.y_tilde);
        ns.max(sw)
    } else {
        0.0
    };
    let mut cand = SwitchStatus::NonSwitcher;
    for _ in 0..1_000_000 {
        cand = propose_switch_status(theta, rng.random::<f64>(), open01(rng));
        if rng.random::<f64>() < exp(factor(cand) - log_bound) {
            return cand;
        }
    }
    cand
}

/// Draws every unit's status from its conditional law given θ and the data.
/// Requires κ = 0 (the treated `Y(0)` is then irrelevant).
pub fn impute_statuses_exact<R: Rng + ?Sized>(data: &Dataset, theta: &Theta, rng: &mut R) -> Vec<AugmentedUnit> {
    data.records()
        .iter()
        .map(|r| {
            let s_star = match r.classify() {
                ObservedPattern::KnownNonSwitcher => SwitchStatus::NonSwitcher,
                ObservedPattern::KnownSwitcherDead | ObservedPattern::KnownSwitcherCensored => {
                    SwitchStatus::SwitchAt(r.s_tilde.unwrap_or(r.c))
                }
                ObservedPattern::AmbiguousControl => impute_ambiguous_control(r.c, theta, open01(rng)),
                ObservedPattern::TreatedCensored | ObservedPattern::TreatedUncensored => {
                    draw_treated_status(r, theta, rng)
                }
            };
            AugmentedUnit { s_star, y0_star: None }
        })
        .collect()
}

/// A replicate trial with the observed assignments and censoring times.
/// The replicate statuses follow the augmentation convention: a control
/// switcher whose switch falls after `C` is recorded as switching at `C`.
pub fn replicate_data<R: Rng + ?Sized>(data: &Dataset, theta: &Theta, rng: &mut R) -> Result<(Dataset, Vec<AugmentedUnit>)> {
    let mut records = Vec::with_capacity(data.len());
    let mut aug = Vec::with_capacity(data.len());
    for r in data.records() {
        let (s0, y0, y1) = draw_latent(theta, rng);
        let rec = observe(r.id, r.arm, r.c, s0, y0, y1);
        let s_star = match (r.arm, s0) {
            (Arm::Control, SwitchStatus::SwitchAt(_)) => SwitchStatus::SwitchAt(rec.s_tilde.unwrap_or(r.c)),
            _ => s0,
        };
        records.push(rec);
        aug.push(AugmentedUnit { s_star, y0_star: None });
    }
    Ok((Dataset::new(records, data.c_max())?, aug))
}

/// `-2(L + 12·log n)` with `L` the complete-data log likelihood, exactly as
/// the discrepancy is defined (note the sign of the penalty).
pub fn disc_bic(records: &[PatientRecord], aug: &[AugmentedUnit], theta: &Theta) -> f64 {
    let ll: f64 = records.iter().zip(aug).map(|(r, a)| unit_log_complete(r, a, theta)).sum();
    -2.0 * (ll + N_PARAMS as f64 * log(records.len() as f64))
}

/// `-2[M + δ·log(δ - M)]` with martingale residual `M = δ - Λ`.
pub fn deviance_term(event: bool, cum_hazard: f64) -> f64 {
    if event {
        let m = 1.0 - cum_hazard;
        -2.0 * (m + log(cum_hazard))
    } else {
        2.0 * cum_hazard
    }
}

/// Cumulative hazard of a unit's observed outcome under its latent stratum.
fn outcome_cum_hazard(rec: &PatientRecord, a: &AugmentedUnit, theta: &Theta) -> f64 {
    match (rec.arm, a.s_star) {
        (Arm::Control, SwitchStatus::NonSwitcher) => theta.y0_ns.cumulative_hazard_shifted(rec.y_tilde, 0.0),
        (Arm::Control, SwitchStatus::SwitchAt(s)) => theta.y0_switcher(s).cumulative_hazard_shifted(rec.y_tilde, s),
        (Arm::Treated, SwitchStatus::NonSwitcher) => theta.y1_ns.cumulative_hazard_shifted(rec.y_tilde, 0.0),
        (Arm::Treated, SwitchStatus::SwitchAt(s)) => theta.y1_switcher(s).cumulative_hazard_shifted(rec.y_tilde, 0.0),
    }
}

/// Deviance of the survival outcomes, summed over arms and latent strata.
pub fn disc_deviance_y(records: &[PatientRecord], aug: &[AugmentedUnit], theta: &Theta) -> f64 {
    records
        .iter()
        .zip(aug)
        .map(|(r, a)| deviance_term(r.y_event, outcome_cum_hazard(r, a, theta)))
        .sum()
}

/// Deviance of the switching times of control switchers.
pub fn disc_deviance_s(records: &[PatientRecord], aug: &[AugmentedUnit], theta: &Theta) -> f64 {
    records
        .iter()
        .zip(aug)
        .filter(|(r, a)| r.arm == Arm::Control && a.s_star.is_switcher())
        .map(|(r, _)| {
            let s = r.s_tilde.unwrap_or(r.c);
            deviance_term(r.s_event, theta.sw.cumulative_hazard_shifted(s, 0.0))
        })
        .sum()
}

/// The three groups of the KM and signal/noise discrepancies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Survival of latent non-switchers, both arms.
    NonSwitchers,
    /// Survival of latent switchers, both arms.
    Switchers,
    /// Switching time of control-arm switchers.
    Switching,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::NonSwitchers, Group::Switchers, Group::Switching];

    pub fn name(self) -> &'static str {
        match self {
            Group::NonSwitchers => "non_switchers",
            Group::Switchers => "switchers",
            Group::Switching => "switching_time",
        }
    }
}

/// Kaplan–Meier curves of the three groups evaluated on `t_grid`.
/// An empty group gives a curve of ones.
pub fn disc_km(records: &[PatientRecord], aug: &[AugmentedUnit], t_grid: &[f64]) -> [Vec<f64>; 3] {
    Group::ALL.map(|g| {
        let (times, events): (Vec<f64>, Vec<bool>) = records
            .iter()
            .zip(aug)
            .filter_map(|(r, a)| match g {
                Group::NonSwitchers if !a.s_star.is_switcher() => Some((r.y_tilde, r.y_event)),
                Group::Switchers if a.s_star.is_switcher() => Some((r.y_tilde, r.y_event)),
                Group::Switching if r.arm == Arm::Control && a.s_star.is_switcher() => {
                    Some((r.s_tilde.unwrap_or(r.c), r.s_event))
                }
                _ => None,
            })
            .unzip();
        match km_fit(&times, &events) {
            Ok(curve) => t_grid.iter().map(|&t| curve.eval(t)).collect(),
            Err(_) => alloc::vec![1.0; t_grid.len()],
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalNoise {
    pub signal: f64,
    pub noise: f64,
    pub ratio: f64,
}

/// Signal, noise and their ratio per group. Survival groups use uncensored
/// outcomes and contrast the arms: signal `|Ȳ₁ - Ȳ₀|`, noise
/// `sqrt(s₀²/n₀ + s₁²/n₁)`. The switching group uses observed switching
/// times of control switchers: signal `S̄`, noise `sqrt(s²/n)`. A group with a
/// subset of fewer than two units is undefined.
pub fn disc_signal_noise(records: &[PatientRecord], aug: &[AugmentedUnit]) -> [Option<SignalNoise>; 3] {
    let subset = |switcher: bool, arm: Arm| -> Vec<f64> {
        records
            .iter()
            .zip(aug)
            .filter(|(r, a)| r.y_event && r.arm == arm && a.s_star.is_switcher() == switcher)
            .map(|(r, _)| r.y_tilde)
            .collect()
    };
    let contrast = |switcher: bool| {
        let (y0, y1) = (subset(switcher, Arm::Control), subset(switcher, Arm::Treated));
        let v0 = sample_variance(&y0)?;
        let v1 = sample_variance(&y1)?;
        let signal = (mean(&y1) - mean(&y0)).abs();
        let noise = sqrt(v0 / y0.len() as f64 + v1 / y1.len() as f64);
        Some(SignalNoise { signal, noise, ratio: signal / noise })
    };
    let switching = || {
        let s: Vec<f64> = records
            .iter()
            .zip(aug)
            .filter(|(r, a)| r.arm == Arm::Control && r.s_event && a.s_star.is_switcher())
            .map(|(r, _)| r.s_tilde.unwrap_or(r.c))
            .collect();
        let v = sample_variance(&s)?;
        let signal = mean(&s);
        let noise = sqrt(v / s.len() as f64);
        Some(SignalNoise { signal, noise, ratio: signal / noise })
    };
    [contrast(false), contrast(true), switching()]
}

/// Every discrepancy of one complete dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancies {
    pub bic: f64,
    pub deviance_y: f64,
    pub deviance_s: f64,
    pub signal_noise: [Option<SignalNoise>; 3],
    pub km: [Vec<f64>; 3],
}

pub fn discrepancies(records: &[PatientRecord], aug: &[AugmentedUnit], theta: &Theta, t_grid: &[f64]) -> Discrepancies {
    Discrepancies {
        bic: disc_bic(records, aug, theta),
        deviance_y: disc_deviance_y(records, aug, theta),
        deviance_s: disc_deviance_s(records, aug, theta),
        signal_noise: disc_signal_noise(records, aug),
        km: disc_km(records, aug, t_grid),
    }
}

/// Observed and replicate discrepancies for one posterior draw.
pub fn ppc_draw<R: Rng + ?Sized>(
    data: &Dataset,
    theta: &Theta,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<(Discrepancies, Discrepancies)> {
    if theta.kappa != 0.0 {
        return Err(Error::Config(alloc::format!(
            "posterior predictive checks are defined for kappa = 0 only (got {})",
            theta.kappa
        )));
    }
    let aug = impute_statuses_exact(data, theta, rng);
    let obs = discrepancies(data.records(), &aug, theta, t_grid);
    let (rep_data, rep_aug) = replicate_data(data, theta, rng)?;
    let rep = discrepancies(rep_data.records(), &rep_aug, theta, t_grid);
    Ok((obs, rep))
}

/// Share of pairs with `rep ≥ obs`.
pub fn pppv(obs: &[f64], rep: &[f64]) -> Result<f64> {
    if obs.is_empty() || obs.len() != rep.len() {
        return Err(Error::domain("pppv needs paired, non-empty sequences"));
    }
    let hits = obs.iter().zip(rep).filter(|(o, r)| r >= o).count();
    Ok(hits as f64 / obs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PppvRow {
    /// `bic`, `deviance`, `signal`, `noise` or `ratio`.
    pub discrepancy: String,
    /// `all`, `survival`, or a [`Group`] name.
    pub group: String,
    /// `None` when every draw was undefined.
    pub pppv: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PppvReport {
    pub n_draws: usize,
    pub rows: Vec<PppvRow>,
    pub t_grid: Vec<f64>,
    /// Pointwise KM p-values per group, in [`Group::ALL`] order.
    pub km: Vec<(String, Vec<f64>)>,
}

impl PppvReport {
    pub fn row(&self, discrepancy: &str, group: &str) -> Option<&PppvRow> {
        self.rows.iter().find(|r| r.discrepancy == discrepancy && r.group == group)
    }
}

fn scalar_row(discrepancy: &str, group: &str, pairs: impl Iterator<Item = Option<(f64, f64)>>) -> PppvRow {
    let (mut obs, mut rep, mut excluded) = (Vec::new(), Vec::new(), 0);
    for p in pairs {
        match p {
            Some((o, r)) if o.is_finite() && r.is_finite() => {
                obs.push(o);
                rep.push(r);
            }
            _ => excluded += 1,
        }
    }
    PppvRow {
        discrepancy: discrepancy.into(),
        group: group.into(),
        pppv: pppv(&obs, &rep).ok(),
        n_used: obs.len(),
        n_excluded: excluded,
    }
}

/// Collapses per-draw discrepancy pairs into p-values.
pub fn aggregate(pairs: &[(Discrepancies, Discrepancies)], t_grid: &[f64]) -> Result<PppvReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no posterior draws for the predictive check"));
    }
    let mut rows = Vec::new();
    rows.push(scalar_row("bic", "all", pairs.iter().map(|(o, r)| Some((o.bic, r.bic)))));
    rows.push(scalar_row(
        "deviance",
        "survival",
        pairs.iter().map(|(o, r)| Some((o.deviance_y, r.deviance_y))),
    ));
    rows.push(scalar_row(
        "deviance",
        Group::Switching.name(),
        pairs.iter().map(|(o, r)| Some((o.deviance_s, r.deviance_s))),
    ));
    for (k, g) in Group::ALL.into_iter().enumerate() {
        type Pick = fn(&SignalNoise) -> f64;
        let measures: [(&str, Pick); 3] = [("signal", |x| x.signal), ("noise", |x| x.noise), ("ratio", |x| x.ratio)];
        for (name, pick) in measures {
            rows.push(scalar_row(
                name,
                g.name(),
                pairs.iter().map(|(o, r)| Some((pick(o.signal_noise[k].as_ref()?), pick(r.signal_noise[k].as_ref()?)))),
            ));
        }
    }
    let n = pairs.len() as f64;
    let km = Group::ALL
        .into_iter()
        .enumerate()
        .map(|(k, g)| {
            let curve = (0..t_grid.len())
                .map(|j| pairs.iter().filter(|(o, r)| r.km[k][j] >= o.km[k][j]).count() as f64 / n)
                .collect();
            (String::from(g.name()), curve)
        })
        .collect();
    Ok(PppvReport {
        n_draws: pairs.len(),
        rows,
        t_grid: t_grid.to_vec(),
        km,
    })
}

/// Runs the whole battery sequentially; draw `j` uses stream `j` of `seed`.
pub fn run_ppc(data: &Dataset, thetas: &[Theta], t_grid: &[f64], seed: u64) -> Result<PppvReport> {
    let pairs = thetas
        .iter()
        .enumerate()
        .map(|(j, theta)| ppc_draw(data, theta, t_grid, &mut crate::stream_rng(seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&pairs, t_grid)
}
