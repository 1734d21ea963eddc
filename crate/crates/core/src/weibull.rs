//! Weibull primitives in the `(shape α, log-rate β = log η)` parameterization:
//!
//! ```text
//! f(t) = α t^{α-1} exp{β - e^β t^α}     G(t) = exp{-e^β t^α}
//! h(t) = α t^{α-1} e^β                  H(t) = e^β t^α
//! ```
//!
//! All arithmetic happens in the log domain and `t^α` is always evaluated as
//! `exp(α ln t)`. Location-shifted sub-models evaluate the distribution at a
//! residual `t - shift`; the `*_shifted` variants are total functions that
//! encode the support conventions (density `-inf`, survival `1` below the
//! shift) and are what the likelihood code uses.

use crate::error::{Error, Result};
use libm::{exp, log, pow, tgamma};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeibullParams {
    /// α > 0.
    pub shape: f64,
    /// β = log η.
    pub log_rate: f64,
}

impl WeibullParams {
    pub fn new(shape: f64, log_rate: f64) -> Result<Self> {
        let p = WeibullParams { shape, log_rate };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::invalid(alloc::format!(
                "Weibull(shape={shape}, log_rate={log_rate})"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.shape > 0.0 && self.shape.is_finite() && self.log_rate.is_finite()
    }

    /// Same shape, log-rate shifted by `delta` (used for `β + λ log s`).
    pub fn with_log_rate_offset(self, delta: f64) -> Self {
        WeibullParams {
            shape: self.shape,
            log_rate: self.log_rate + delta,
        }
    }

    /// `ln H(t) = β + α ln t` for `t > 0`.
    #[inline]
    fn log_cum_hazard(&self, t: f64) -> f64 {
        self.log_rate + self.shape * log(t)
    }

    pub fn log_pdf(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(alloc::format!("log_pdf needs t > 0, got {t}")));
        }
        Ok(self.log_pdf_shifted(t, 0.0))
    }

    pub fn log_survival(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(alloc::format!("log_survival needs t >= 0, got {t}")));
        }
        Ok(self.log_survival_shifted(t, 0.0))
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain(alloc::format!("hazard needs t > 0, got {t}")));
        }
        Ok(self.shape * exp(self.log_rate + (self.shape - 1.0) * log(t)))
    }

    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        Ok(-self.log_survival(t)?)
    }

    /// `exp{-β/α} Γ(1 + 1/α)`.
    pub fn mean(&self) -> f64 {
        exp(-self.log_rate / self.shape) * tgamma(1.0 + 1.0 / self.shape)
    }

    /// Inverse-CDF draw from a uniform variate `u ∈ (0, 1)`.
    ///
    /// Uses `G(t) = u`, so `log_survival(sample(u)) = ln u`.
    pub fn sample(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(alloc::format!("sample needs u in (0,1), got {u}")));
        }
        Ok(self.quantile_survival(u))
    }

    /// The `t` with `G(t) = u`; total for `u ∈ (0, 1]`.
    #[inline]
    pub fn quantile_survival(&self, u: f64) -> f64 {
        // t = (-ln u · e^{-β})^{1/α}, computed as exp((ln(-ln u) - β)/α)
        exp((log(-log(u)) - self.log_rate) / self.shape)
    }

    /// The `t` with `ln G(t) = log_surv` (`log_surv < 0`).
    #[inline]
    pub fn quantile_log_survival(&self, log_surv: f64) -> f64 {
        exp((log(-log_surv) - self.log_rate) / self.shape)
    }

    /// Draw from the law restricted to `(0, b]`: the `t` with `F(t) = u·F(b)`.
    #[inline]
    pub fn sample_below(&self, b: f64, u: f64) -> f64 {
        let mass = self.cdf(b);
        self.quantile_log_survival(libm::log1p(-u * mass))
    }

    /// Draw from the law restricted to `(b, ∞)`: the `t` with `G(t) = u·G(b)`.
    #[inline]
    pub fn sample_above(&self, b: f64, u: f64) -> f64 {
        self.quantile_log_survival(self.log_survival_shifted(b, 0.0) + log(u))
    }

    /// Log density at the residual `t - shift`; `-inf` when the residual is not positive.
    #[inline]
    pub fn log_pdf_shifted(&self, t: f64, shift: f64) -> f64 {
        let r = t - shift;
        if !(r > 0.0) {
            return f64::NEG_INFINITY;
        }
        let lr = log(r);
        log(self.shape) + (self.shape - 1.0) * lr + self.log_rate - exp(self.log_rate + self.shape * lr)
    }

    /// Log survival at the residual `t - shift`; `0` (survival 1) when the residual is not positive.
    #[inline]
    pub fn log_survival_shifted(&self, t: f64, shift: f64) -> f64 {
        let r = t - shift;
        if !(r > 0.0) {
            return 0.0;
        }
        -exp(self.log_cum_hazard(r))
    }

    /// Survival at the residual `t - shift`.
    #[inline]
    pub fn survival_shifted(&self, t: f64, shift: f64) -> f64 {
        exp(self.log_survival_shifted(t, shift))
    }

    /// Cumulative hazard at the residual `t - shift` (0 below the shift).
    #[inline]
    pub fn cumulative_hazard_shifted(&self, t: f64, shift: f64) -> f64 {
        -self.log_survival_shifted(t, shift)
    }

    /// `P(T ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        -libm::expm1(-exp(self.log_cum_hazard(t)))
    }

    /// Density (not log) at `t`; zero outside the support.
    pub fn pdf(&self, t: f64) -> f64 {
        exp(self.log_pdf_shifted(t, 0.0))
    }

    /// `t^α` the way every routine here computes it.
    pub fn power(&self, t: f64) -> f64 {
        pow(t, self.shape)
    }
}
