//! Per-customer survival projection and lifetime value.
//!
//! A baseline hazard by tenure is estimated from a one-month cohort snapshot.
//! Each customer's next-month churn score fixes a proportionality constant
//! against that baseline, which yields a full projected hazard path, a
//! survival curve, expected remaining tenure and lifetime value.

pub mod dataio;
pub mod error;
pub mod odds;
pub mod proportional;
pub mod simulate;
pub mod survival;
pub mod valuation;

pub use error::{Error, Result};
pub use odds::{fit_odds_model, OddsFitConfig, OddsModel, OddsPredictor, PersonPeriodRow};
pub use proportional::{
    compute_alpha, expected_remaining_tenure, project_competing, project_hazard, Alpha, ChurnScore,
    CompetingProjector, CustomerProjection, ProjectionConfig, Projector,
};
pub use survival::{
    estimate_cause_hazards, estimate_hazard_by_tenure, hazard_to_survival, kaplan_meier, survival_to_hazard,
    BaselineHazard, CauseBaselines, PoolingConfig, Smoothing, SurvivalCurve, TenureMonth,
};
pub use valuation::{clv, DiscountSpec, MarginSpec};
