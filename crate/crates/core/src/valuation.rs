//! Customer lifetime value from a survival path.
//!
//! `CLV = sum_{t=1..L} p_t * M_t * (1 + r)^-t`, where `p_t` is the survival
//! path element `t - 1`. Discounting is end-of-period.

use crate::error::{Error, Result};
use crate::survival::SurvivalCurve;

/// Monthly discount rate `r`; zero disables discounting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscountSpec {
    monthly_rate: f64,
}

impl DiscountSpec {
    pub const NONE: DiscountSpec = DiscountSpec { monthly_rate: 0.0 };

    pub fn monthly(rate: f64) -> Result<Self> {
        if rate.is_finite() && rate >= 0.0 {
            Ok(Self { monthly_rate: rate })
        } else {
            Err(Error::InvalidRate(rate))
        }
    }

    pub fn annual(rate: f64) -> Result<Self> {
        Self::monthly(annual_to_monthly_rate(rate)?)
    }

    pub fn monthly_rate(&self) -> f64 {
        self.monthly_rate
    }
}

/// Per-period margin. Negative margins are allowed.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginSpec {
    Constant(f64),
    /// Tenure-aligned: element `t - 1` is the margin for projected month `t`.
    Series(Vec<f64>),
}

pub fn clv(survival_path: &SurvivalCurve, margins: &MarginSpec, discount: DiscountSpec) -> Result<f64> {
    let p = survival_path.as_slice();
    if let MarginSpec::Series(series) = margins {
        if series.len() < p.len() {
            return Err(Error::MarginSeriesTooShort {
                needed: p.len(),
                got: series.len(),
            });
        }
    }
    let base = 1.0 + discount.monthly_rate;
    let mut total = 0.0;
    for (i, &pt) in p.iter().enumerate() {
        let margin = match margins {
            MarginSpec::Constant(m) => *m,
            MarginSpec::Series(series) => series[i],
        };
        let discounted = if discount.monthly_rate == 0.0 {
            pt * margin
        } else {
            pt * margin / base.powi(i as i32 + 1)
        };
        total += discounted;
    }
    Ok(total)
}

/// Undiscounted constant-margin CLV: `M * E(RT)`.
pub fn clv_constant(ert_months: f64, margin: f64) -> f64 {
    margin * ert_months
}

/// `(1 + annual)^(1/12) - 1`.
pub fn annual_to_monthly_rate(annual_rate: f64) -> Result<f64> {
    if !(annual_rate.is_finite() && annual_rate >= 0.0) {
        return Err(Error::InvalidRate(annual_rate));
    }
    Ok((annual_rate.ln_1p() / 12.0).exp_m1())
}
