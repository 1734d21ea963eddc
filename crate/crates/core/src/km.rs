//! Kaplan–Meier product-limit estimator for right-censored times.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A right-continuous survival step function.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    times: Vec<f64>,
    survival: Vec<f64>,
    at_risk: Vec<usize>,
    events: Vec<usize>,
}

impl KmCurve {
    /// Distinct event times, strictly increasing.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Survival just after each event time.
    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn at_risk(&self) -> &[usize] {
        &self.at_risk
    }

    pub fn events(&self) -> &[usize] {
        &self.events
    }

    /// `Ŝ(t)`: 1 before the first event, the post-jump value at an event time,
    /// the last value beyond the last event.
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }
}

/// Fits the product-limit estimate. At tied times events are counted before
/// censorings, so units censored at an event time are still at risk there.
pub fn km_fit(times: &[f64], events: &[bool]) -> Result<KmCurve> {
    if times.is_empty() {
        return Err(Error::EmptyInput("Kaplan-Meier needs at least one time"));
    }
    if times.len() != events.len() {
        return Err(Error::domain("times and events differ in length"));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::domain(alloc::format!("survival times must be positive, got {t}")));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut s = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let at_risk = order.len() - i;
        let mut d = 0;
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            d += usize::from(events[order[j]]);
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        i = j;
    }
    Ok(curve)
}
