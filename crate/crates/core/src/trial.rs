//! Observed trial records, latent augmentations and the synthetic generator.
//!
//! Controls may switch to the active treatment at some time `S(0)`; treated
//! units never switch, so their switching status is always latent. A unit
//! that would switch does so before its control-arm event, `S(0) < Y(0)`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Open01};

use crate::error::{Error, Result};
use crate::model::Theta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    /// The assignment indicator `z`.
    pub fn z(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn from_z(z: u8) -> Option<Arm> {
        match z {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }
}

/// Latent switching status under control: never switch, or switch at a time.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SwitchStatus {
    NonSwitcher,
    SwitchAt(f64),
}

impl SwitchStatus {
    pub fn is_switcher(&self) -> bool {
        matches!(self, SwitchStatus::SwitchAt(_))
    }

    pub fn time(&self) -> Option<f64> {
        match *self {
            SwitchStatus::NonSwitcher => None,
            SwitchStatus::SwitchAt(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatientRecord {
    pub id: u64,
    pub arm: Arm,
    /// Administrative censoring time.
    pub c: f64,
    /// `min(S, C)` for controls; `None` for treated units.
    pub s_tilde: Option<f64>,
    pub s_event: bool,
    /// `min(Y, C)`.
    pub y_tilde: f64,
    pub y_event: bool,
}

/// The six observable configurations of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservedPattern {
    /// Control, no switch, event observed: must be a non-switcher.
    KnownNonSwitcher,
    KnownSwitcherDead,
    KnownSwitcherCensored,
    /// Control with neither switch nor event before `C`: non-switcher, or a
    /// switcher whose switch would come after `C`.
    AmbiguousControl,
    TreatedUncensored,
    TreatedCensored,
}

impl PatientRecord {
    pub fn classify(&self) -> ObservedPattern {
        match (self.arm, self.s_event, self.y_event) {
            (Arm::Control, false, true) => ObservedPattern::KnownNonSwitcher,
            (Arm::Control, true, true) => ObservedPattern::KnownSwitcherDead,
            (Arm::Control, true, false) => ObservedPattern::KnownSwitcherCensored,
            (Arm::Control, false, false) => ObservedPattern::AmbiguousControl,
            (Arm::Treated, _, true) => ObservedPattern::TreatedUncensored,
            (Arm::Treated, _, false) => ObservedPattern::TreatedCensored,
        }
    }

    pub fn is_control(&self) -> bool {
        self.arm == Arm::Control
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::violation(self.id, d));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("censoring time must be positive and finite");
        }
        if !(self.y_tilde > 0.0 && self.y_tilde.is_finite()) {
            return bad("y_tilde must be positive and finite");
        }
        if self.y_tilde > self.c {
            return bad("y_tilde exceeds censoring time");
        }
        if !self.y_event && self.y_tilde != self.c {
            return bad("censored outcome must have y_tilde equal to c");
        }
        match self.arm {
            Arm::Treated => {
                if self.s_event {
                    return bad("treated unit cannot have an observed switch");
                }
                if self.s_tilde.is_some() {
                    return bad("treated unit must leave s_tilde empty");
                }
            }
            Arm::Control => {
                let Some(s) = self.s_tilde else {
                    return bad("control unit needs s_tilde");
                };
                if self.s_event {
                    if !(s > 0.0) || s > self.y_tilde || s > self.c {
                        return bad("observed switch must satisfy 0 < s_tilde <= min(y_tilde, c)");
                    }
                } else if s != self.c {
                    return bad("unobserved switch must have s_tilde equal to c");
                }
            }
        }
        Ok(())
    }
}

/// Imputed latent values for one unit.
///
/// `y0_star` is the control-arm survival time; it is only carried for treated
/// units when the cross-world parameter κ is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedUnit {
    pub s_star: SwitchStatus,
    pub y0_star: Option<f64>,
}

impl AugmentedUnit {
    pub fn non_switcher() -> Self {
        AugmentedUnit {
            s_star: SwitchStatus::NonSwitcher,
            y0_star: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<PatientRecord>,
    c_max: f64,
}

impl Dataset {
    pub fn new(records: Vec<PatientRecord>, c_max: f64) -> Result<Self> {
        if !(c_max > 0.0 && c_max.is_finite()) {
            return Err(Error::invalid(alloc::format!("c_max = {c_max}")));
        }
        let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::violation(w[0], "duplicate id"));
        }
        for r in &records {
            r.validate()?;
            if r.c > c_max {
                return Err(Error::violation(r.id, "censoring time exceeds study duration"));
            }
        }
        Ok(Dataset { records, c_max })
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.records.iter().filter(|r| r.arm == Arm::Treated).count()
    }
}

/// What the generator drew before observation and censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentTruth {
    pub id: u64,
    pub s0: SwitchStatus,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneratorConfig {
    pub n: usize,
    pub p_treat: f64,
    pub theta: Theta,
    pub c_min: f64,
    pub c_max: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    /// 1000 units, 1:1 randomization, entry window giving censoring in [1.5, 3].
    pub fn calibrated(seed: u64) -> Self {
        GeneratorConfig {
            n: 1000,
            p_treat: 0.5,
            theta: Theta::calibration_truth(0.0),
            c_min: 1.5,
            c_max: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(alloc::format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) {
            return Err(Error::Config(alloc::format!("p_treat must be in (0,1), got {}", self.p_treat)));
        }
        if !(self.c_min > 0.0 && self.c_min <= self.c_max && self.c_max.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "entry window [{}, {}] is invalid",
                self.c_min, self.c_max
            )));
        }
        // π may sit on {0, 1} here: the generator only needs a valid mixture.
        if !(self.theta.pi >= 0.0 && self.theta.pi <= 1.0) {
            return Err(Error::Config(alloc::format!("pi must be in [0,1], got {}", self.theta.pi)));
        }
        self.theta
            .validate_components()
            .map_err(|e| Error::Config(alloc::format!("{e}")))
    }
}

/// Draws `(S(0), Y(0), Y(1))` for one unit from the model.
pub fn draw_latent<R: Rng + ?Sized>(theta: &Theta, rng: &mut R) -> (SwitchStatus, f64, f64) {
    let s0 = if rng.random::<f64>() < theta.pi {
        SwitchStatus::NonSwitcher
    } else {
        SwitchStatus::SwitchAt(theta.sw.quantile_survival(open01(rng)))
    };
    let (y0, y1) = draw_outcomes(theta, s0, rng);
    (s0, y0, y1)
}

/// Draws `(Y(0), Y(1))` given the switching status.
pub fn draw_outcomes<R: Rng + ?Sized>(theta: &Theta, s0: SwitchStatus, rng: &mut R) -> (f64, f64) {
    match s0 {
        SwitchStatus::NonSwitcher => {
            let y0 = theta.y0_ns.quantile_survival(open01(rng));
            let y1 = theta.kappa * y0 + theta.y1_ns.quantile_survival(open01(rng));
            (y0, y1)
        }
        SwitchStatus::SwitchAt(s) => {
            let y0 = s + theta.y0_switcher(s).quantile_survival(open01(rng));
            let y1 = theta.kappa * y0 + theta.y1_switcher(s).quantile_survival(open01(rng));
            (y0, y1)
        }
    }
}

/// Applies the observation and censoring rules to latent values.
pub fn observe(id: u64, arm: Arm, c: f64, s0: SwitchStatus, y0: f64, y1: f64) -> PatientRecord {
    let y = match arm {
        Arm::Control => y0,
        Arm::Treated => y1,
    };
    let y_event = y <= c;
    let y_tilde = if y_event { y } else { c };
    let (s_tilde, s_event) = match arm {
        Arm::Treated => (None, false),
        Arm::Control => match s0 {
            SwitchStatus::SwitchAt(s) if s <= c => (Some(s), true),
            _ => (Some(c), false),
        },
    };
    PatientRecord {
        id,
        arm,
        c,
        s_tilde,
        s_event,
        y_tilde,
        y_event,
    }
}

/// Simulates a trial. Deterministic in `config.seed`.
pub fn generate(config: &GeneratorConfig) -> Result<(Dataset, Vec<LatentTruth>)> {
    config.validate()?;
    let mut rng = crate::stream_rng(config.seed, 0);
    let mut records = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let id = (i + 1) as u64;
        let arm = if rng.random::<f64>() < config.p_treat {
            Arm::Treated
        } else {
            Arm::Control
        };
        let c = config.c_min + (config.c_max - config.c_min) * rng.random::<f64>();
        let (s0, y0, y1) = draw_latent(&config.theta, &mut rng);
        records.push(observe(id, arm, c, s0, y0, y1));
        truth.push(LatentTruth { id, s0, y0, y1 });
    }
    Ok((Dataset::new(records, config.c_max)?, truth))
}

/// A uniform variate in the open interval (0, 1).
#[inline]
pub(crate) fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}
