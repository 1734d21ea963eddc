//! Causal estimands: intention-to-treat effects and principal effects for
//! non-switchers, for switchers at a given time, and for sets of switchers.
//!
//! Distributional effects are survival-probability differences. When κ > 0
//! they need the law of `Y(0)`, which is integrated with deterministic
//! stratified nodes ([`McNodes`]). The integral is split at `Y(0) = y` and each
//! piece uses conditional draws weighted by its exact probability, so the
//! indicator `1{Y(0) > y}` never contributes Monte Carlo noise.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::math::{mean, quantile_sorted, sorted};
use crate::model::Theta;
use crate::trial::open01;
use crate::weibull::WeibullParams;

/// `E[Y(1)] - E[Y(0)]` for two marginal Weibull arms.
pub fn itt_ace(arm0: &WeibullParams, arm1: &WeibullParams) -> f64 {
    arm1.mean() - arm0.mean()
}

/// `P{Y(1) > y} - P{Y(0) > y}` for two marginal Weibull arms.
pub fn itt_dce(y: f64, arm0: &WeibullParams, arm1: &WeibullParams) -> f64 {
    arm1.survival_shifted(y, 0.0) - arm0.survival_shifted(y, 0.0)
}

/// `E[Y(0) | non-switcher]`.
pub fn mean_y0_ns(theta: &Theta) -> f64 {
    theta.y0_ns.mean()
}

/// `E[Y(1) | non-switcher] = κ E[Y(0) | non-switcher] + E[residual]`.
pub fn mean_y1_ns(theta: &Theta) -> f64 {
    theta.kappa * theta.y0_ns.mean() + theta.y1_ns.mean()
}

/// Average causal effect for non-switchers.
pub fn ace_ns(theta: &Theta) -> f64 {
    mean_y1_ns(theta) - mean_y0_ns(theta)
}

/// `E[Y(0) | S(0) = s]`.
pub fn mean_y0_sw(s: f64, theta: &Theta) -> f64 {
    s + theta.y0_switcher(s).mean()
}

/// Average causal effect for units that would switch at `s`.
pub fn ace_sw(s: f64, theta: &Theta) -> f64 {
    let m0 = mean_y0_sw(s, theta);
    theta.kappa * m0 + theta.y1_switcher(s).mean() - m0
}

/// Stratified uniform nodes on (0, 1) for Monte Carlo integration.
///
/// `u[j]` lies in the j-th of `m` equal strata; `v` is a second coordinate
/// stratified the same way but paired through a random permutation, so
/// `(u, v)` is a Latin hypercube. Reusing one set of nodes across posterior
/// draws gives common random numbers and smooth curves.
#[derive(Debug, Clone, PartialEq)]
pub struct McNodes {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl McNodes {
    pub fn new(m: usize, seed: u64) -> Self {
        let m = m.max(1);
        let mut rng = crate::stream_rng(seed, 0x6e6f646573);
        let width = 1.0 / m as f64;
        let u: Vec<f64> = (0..m).map(|j| (j as f64 + open01(&mut rng)) * width).collect();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let v = perm
            .into_iter()
            .map(|j| (j as f64 + open01(&mut rng)) * width)
            .collect();
        McNodes { u, v }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// Law of `Y(0)` within a stratum: `shift + W` with `W ~ w`.
#[derive(Clone, Copy)]
struct Y0Law {
    shift: f64,
    w: WeibullParams,
}

/// The pieces of the `Y(0)` integral split at `Y(0) = y`, using one node.
struct Split {
    /// `P{Y(0) ≤ y}`.
    below_mass: f64,
    /// A draw of `Y(0)` given `Y(0) ≤ y` (meaningless when `below_mass` is 0).
    below: f64,
    /// A draw of `Y(0)` given `Y(0) > y`.
    above: f64,
}

impl Y0Law {
    fn split(&self, y: f64, u: f64) -> Split {
        let cut = y - self.shift;
        if cut <= 0.0 {
            return Split {
                below_mass: 0.0,
                below: y,
                above: self.shift + self.w.quantile_survival(u),
            };
        }
        Split {
            below_mass: self.w.cdf(cut),
            below: self.shift + self.w.sample_below(cut, u),
            above: self.shift + self.w.sample_above(cut, u),
        }
    }
}

/// Per-node pieces of the κ > 0 probabilities for one stratum.
struct NodeProbs {
    /// `P{Y(1) > y}`.
    surv1_y: f64,
    /// `P{Y(1) ≥ s}`.
    surv1_s: f64,
    /// `P{Y(0) > y, Y(1) ≥ s}`.
    joint: f64,
}

fn node_probs(y: f64, s: f64, kappa: f64, law: Y0Law, y1: &WeibullParams, u: f64) -> NodeProbs {
    let sp = law.split(y, u);
    let (fb, ga) = (sp.below_mass, 1.0 - sp.below_mass);
    let g1 = |t: f64, y0: f64| y1.survival_shifted(t, kappa * y0);
    let below_y = if fb > 0.0 { g1(y, sp.below) } else { 0.0 };
    let below_s = if fb > 0.0 { g1(s, sp.below) } else { 0.0 };
    NodeProbs {
        surv1_y: fb * below_y + ga * g1(y, sp.above),
        surv1_s: fb * below_s + ga * g1(s, sp.above),
        joint: ga * g1(s, sp.above),
    }
}

/// `E[G1((y - κY(0))₊)] - P{Y(0) > y}` per node, as the paired difference
/// `F(y)·G1(y - κa) + G(y)·(G1((y - κb)₊) - 1)`. At κ = 1 the second term
/// vanishes and every node contributes a non-negative amount.
fn dce_node(y: f64, kappa: f64, law: Y0Law, y1: &WeibullParams, u: f64) -> f64 {
    let sp = law.split(y, u);
    let fb = sp.below_mass;
    let below = if fb > 0.0 { fb * y1.survival_shifted(y, kappa * sp.below) } else { 0.0 };
    below + (1.0 - fb) * (y1.survival_shifted(y, kappa * sp.above) - 1.0)
}

/// Distributional causal effect for non-switchers at `y`.
pub fn dce_ns(y: f64, theta: &Theta, nodes: &McNodes) -> f64 {
    if theta.kappa == 0.0 {
        return theta.y1_ns.survival_shifted(y, 0.0) - theta.y0_ns.survival_shifted(y, 0.0);
    }
    let law = Y0Law { shift: 0.0, w: theta.y0_ns };
    mean_over(nodes.u(), |u| dce_node(y, theta.kappa, law, &theta.y1_ns, u))
}

/// Distributional causal effect for units that would switch at `s`.
///
/// For `y ≤ s` this is `P{Y(1) > y | s} - 1`, non-positive by construction.
pub fn dce_sw(y: f64, s: f64, theta: &Theta, nodes: &McNodes) -> f64 {
    let y0 = theta.y0_switcher(s);
    let y1 = theta.y1_switcher(s);
    if theta.kappa == 0.0 {
        return y1.survival_shifted(y, 0.0) - y0.survival_shifted(y, s);
    }
    let law = Y0Law { shift: s, w: y0 };
    mean_over(nodes.u(), |u| dce_node(y, theta.kappa, law, &y1, u))
}

/// Distributional effect for switchers at `s`, conditional on `Y(1) ≥ s`.
///
/// Exactly 0 for `y ≤ s`. `None` when the conditioning event has no mass
/// under the nodes.
pub fn cdce_sw(y: f64, s: f64, theta: &Theta, nodes: &McNodes) -> Option<f64> {
    if y <= s {
        return Some(0.0);
    }
    let y0 = theta.y0_switcher(s);
    let y1 = theta.y1_switcher(s);
    if theta.kappa == 0.0 {
        // Y(0) and Y(1) are independent given s.
        let ls = y1.log_survival_shifted(s, 0.0);
        if ls == f64::NEG_INFINITY {
            return None;
        }
        let cond1 = libm::exp(y1.log_survival_shifted(y, 0.0) - ls);
        return Some(cond1 - y0.survival_shifted(y, s));
    }
    let law = Y0Law { shift: s, w: y0 };
    let (mut num1, mut num0, mut den) = (0.0, 0.0, 0.0);
    for &u in nodes.u() {
        let p = node_probs(y, s, theta.kappa, law, &y1, u);
        num1 += p.surv1_y;
        num0 += p.joint;
        den += p.surv1_s;
    }
    (den > 0.0).then(|| (num1 - num0) / den)
}

/// A set of switching times.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "bound", rename_all = "snake_case"))]
pub enum Region {
    /// `(0, ∞)`: all switchers.
    All,
    /// `[0, s]`: switchers at or before `s`.
    UpTo(f64),
    /// `(s, ∞)`: switchers after `s`.
    Beyond(f64),
}

impl Region {
    /// `P{S(0) ∈ region | switcher}`.
    pub fn mass(&self, sw: &WeibullParams) -> f64 {
        match *self {
            Region::All => 1.0,
            Region::UpTo(b) => sw.cdf(b),
            Region::Beyond(b) => sw.survival_shifted(b, 0.0),
        }
    }

    /// A switching time drawn from the restricted law.
    fn draw(&self, sw: &WeibullParams, u: f64) -> f64 {
        match *self {
            Region::All => sw.quantile_survival(u),
            Region::UpTo(b) => sw.sample_below(b, u),
            Region::Beyond(b) => sw.sample_above(b, u),
        }
    }

    fn check(&self, sw: &WeibullParams) -> Result<()> {
        let ok = match *self {
            Region::All => true,
            Region::UpTo(b) => b > 0.0 && sw.cdf(b) > 0.0,
            Region::Beyond(b) => b.is_finite() && sw.log_survival_shifted(b, 0.0) > f64::NEG_INFINITY,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ZeroMassRegion)
        }
    }

    fn switch_times(&self, theta: &Theta, nodes: &McNodes) -> Result<Vec<f64>> {
        self.check(&theta.sw)?;
        Ok(nodes.u().iter().map(|&u| self.draw(&theta.sw, u)).collect())
    }
}

/// `ACE(A) = E[Y(1) - Y(0) | S(0) ∈ A]`, averaging the closed-form `ACE(s)`.
pub fn coarse_ace(region: Region, theta: &Theta, nodes: &McNodes) -> Result<f64> {
    let s = region.switch_times(theta, nodes)?;
    Ok(mean_over(&s, |s| ace_sw(s, theta)))
}

/// `DCE(y | A)`. Each switching-time node is paired with one `Y(0)` node.
pub fn coarse_dce(region: Region, y: f64, theta: &Theta, nodes: &McNodes) -> Result<f64> {
    let s = region.switch_times(theta, nodes)?;
    Ok(mean_over_pairs(&s, nodes.v(), |s, v| {
        let y1 = theta.y1_switcher(s);
        let y0 = theta.y0_switcher(s);
        if theta.kappa == 0.0 {
            y1.survival_shifted(y, 0.0) - y0.survival_shifted(y, s)
        } else {
            dce_node(y, theta.kappa, Y0Law { shift: s, w: y0 }, &y1, v)
        }
    }))
}

/// `cDCE(y | A)`, the effect among switchers in `A` with `Y(1) ≥ S(0)`.
/// `None` if the conditioning event has no mass under the nodes.
pub fn coarse_cdce(region: Region, y: f64, theta: &Theta, nodes: &McNodes) -> Result<Option<f64>> {
    let s = region.switch_times(theta, nodes)?;
    let (mut num1, mut num0, mut den) = (0.0, 0.0, 0.0);
    for (&s, &v) in s.iter().zip(nodes.v()) {
        let y1 = theta.y1_switcher(s);
        let y0 = theta.y0_switcher(s);
        // P{Y(1) > max(y, s)}, P{Y(0) > y, Y(1) ≥ s}, P{Y(1) ≥ s}
        let (a, b, d) = if theta.kappa == 0.0 {
            let g1s = y1.survival_shifted(s, 0.0);
            (y1.survival_shifted(y.max(s), 0.0), y0.survival_shifted(y, s) * g1s, g1s)
        } else {
            let p = node_probs(y.max(s), s, theta.kappa, Y0Law { shift: s, w: y0 }, &y1, v);
            let joint = if y <= s { p.surv1_s } else { p.joint };
            (p.surv1_y, joint, p.surv1_s)
        };
        num1 += a;
        num0 += b;
        den += d;
    }
    Ok((den > 0.0).then(|| (num1 - num0) / den))
}

fn mean_over(xs: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64
}

fn mean_over_pairs(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).sum::<f64>() / a.len() as f64
}

/// Posterior summary of one scalar estimand.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimandSummary {
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Median and central 95% interval with type-7 quantiles.
pub fn summarize(values: &[f64]) -> Result<EstimandSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no draws to summarize"));
    }
    let v = sorted(values);
    Ok(EstimandSummary {
        mean: mean(&v),
        median: quantile_sorted(&v, 0.5),
        q025: quantile_sorted(&v, 0.025),
        q975: quantile_sorted(&v, 0.975),
    })
}
