//! Score-scaled proportional hazards.
//!
//! A customer at tenure `t0` with churn-model score `s` gets the coefficient
//! `alpha = s / h0(t0)` and the hazard path `h(t) = min(1, alpha * h0(t))` for
//! every `t >= t0`. Expected remaining tenure is the sum of the resulting
//! survival path, cut off once survival falls below `eps` or the horizon cap
//! is reached.

use crate::error::{Error, Result};
use crate::survival::{BaselineHazard, CauseBaselines, HazardLookup, PoolingConfig, PooledRate, SurvivalCurve, TenureMonth};

/// Probability that the customer churns in the next month, from an external
/// churn model.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChurnScore(f64);

impl ChurnScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidScore(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Coefficient of proportionality between a customer's hazard and the
/// baseline.
///
/// When derived from a score the ratio `score / h0(t0)` is kept unreduced, so
/// scaling `h0(t0)` returns the score bit-for-bit and `alpha = 1` leaves the
/// baseline untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    numerator: f64,
    reference: f64,
}

impl Alpha {
    pub const ZERO: Alpha = Alpha {
        numerator: 0.0,
        reference: 1.0,
    };
    pub const ONE: Alpha = Alpha {
        numerator: 1.0,
        reference: 1.0,
    };

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self {
                numerator: value,
                reference: 1.0,
            })
        } else {
            Err(Error::InvalidAlpha(value))
        }
    }

    pub fn value(&self) -> f64 {
        if self.reference == 1.0 {
            self.numerator
        } else {
            self.numerator / self.reference
        }
    }

    pub fn is_zero(&self) -> bool {
        self.numerator == 0.0
    }

    /// `alpha * x`, unclipped.
    #[inline]
    pub fn scale(&self, x: f64) -> f64 {
        if self.reference == 1.0 {
            self.numerator * x
        } else {
            self.numerator * (x / self.reference)
        }
    }
}

/// Survival truncation settings for remaining-tenure sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Stop once survival drops below this.
    pub eps: f64,
    /// Hard cap on projected months.
    pub max_horizon: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_horizon: 1200,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidConfig(format!("eps must be in (0, 1), got {}", self.eps)));
        }
        if self.max_horizon == 0 {
            return Err(Error::InvalidConfig("max_horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Projected hazard and survival for one customer from their current tenure.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerProjection {
    pub alpha: Alpha,
    /// Hazard for months `t0, t0+1, ...`; always within `[0, 1]`.
    pub hazard_path: Vec<f64>,
    /// `survival_path[j]`: probability of staying at least `j + 1` more months.
    pub survival_path: SurvivalCurve,
    pub ert_months: f64,
    /// Index of the last survival term included in `ert_months`.
    pub truncated_at: usize,
}

/// Accumulate survival over a hazard path until it is negligible.
pub(crate) fn accumulate<F>(alpha: Alpha, config: &ProjectionConfig, mut hazard: F) -> CustomerProjection
where
    F: FnMut(usize) -> f64,
{
    let mut hazard_path = Vec::new();
    let mut survival = Vec::new();
    let mut s = 1.0;
    let mut ert = 0.0;
    let mut truncated_at = 0;
    for j in 0..config.max_horizon {
        let h = hazard(j).min(1.0);
        s *= 1.0 - h;
        hazard_path.push(h);
        survival.push(s);
        ert += s;
        if s < config.eps || j + 1 == config.max_horizon {
            truncated_at = j;
            break;
        }
    }
    CustomerProjection {
        alpha,
        hazard_path,
        survival_path: SurvivalCurve::from_trusted(survival),
        ert_months: ert,
        truncated_at,
    }
}

/// `alpha = score / h0(t0)`.
///
/// A zero score yields `alpha = 0` without consulting the baseline.
pub fn compute_alpha(
    score: ChurnScore,
    baseline: &BaselineHazard,
    t0: TenureMonth,
    pooling: PoolingConfig,
) -> Result<Alpha> {
    alpha_from_reference(score, baseline.hazard_at(t0, pooling), t0)
}

fn alpha_from_reference(score: ChurnScore, reference: f64, t0: TenureMonth) -> Result<Alpha> {
    if score.value() == 0.0 {
        return Ok(Alpha::ZERO);
    }
    if reference <= 0.0 {
        return Err(Error::DegenerateBaseline { tenure: t0 });
    }
    Ok(Alpha {
        numerator: score.value(),
        reference,
    })
}

/// `min(1, alpha * h0(t0 + j))` for `j in 0..horizon`.
pub fn project_hazard(
    alpha: Alpha,
    baseline: &BaselineHazard,
    t0: TenureMonth,
    horizon: usize,
    pooling: PoolingConfig,
) -> Vec<f64> {
    (0..horizon)
        .map(|j| alpha.scale(baseline.hazard_at(t0 + j, pooling)).min(1.0))
        .collect()
}

/// Expected remaining tenure for a customer with coefficient `alpha`.
pub fn expected_remaining_tenure(
    alpha: Alpha,
    baseline: &BaselineHazard,
    t0: TenureMonth,
    pooling: PoolingConfig,
    config: &ProjectionConfig,
) -> Result<CustomerProjection> {
    config.validate()?;
    Ok(accumulate(alpha, config, |j| alpha.scale(baseline.hazard_at(t0 + j, pooling))))
}

/// Scores customers against one baseline, with the pooling rule resolved once.
#[derive(Debug, Clone)]
pub struct Projector {
    lookup: HazardLookup,
    config: ProjectionConfig,
}

impl Projector {
    pub fn new(baseline: &BaselineHazard, pooling: PoolingConfig, config: ProjectionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            lookup: baseline.lookup(pooling),
            config,
        })
    }

    pub fn alpha(&self, score: ChurnScore, t0: TenureMonth) -> Result<Alpha> {
        alpha_from_reference(score, self.lookup.hazard(t0), t0)
    }

    pub fn project_alpha(&self, alpha: Alpha, t0: TenureMonth) -> CustomerProjection {
        accumulate(alpha, &self.config, |j| alpha.scale(self.lookup.hazard(t0 + j)))
    }

    pub fn project(&self, score: ChurnScore, t0: TenureMonth) -> Result<CustomerProjection> {
        let alpha = self.alpha(score, t0)?;
        Ok(self.project_alpha(alpha, t0))
    }
}

/// Sum of two scaled sub-hazards. Over a shared exposure the sum is formed
/// on the event counts, so unit coefficients reproduce the all-cause rate
/// exactly.
#[inline]
fn combine(alpha_v: Alpha, rate_v: PooledRate, alpha_inv: Alpha, rate_inv: PooledRate) -> f64 {
    if alpha_inv.is_zero() {
        alpha_v.scale(rate_v.rate())
    } else if alpha_v.is_zero() {
        alpha_inv.scale(rate_inv.rate())
    } else if rate_v.exposure == rate_inv.exposure && rate_v.exposure > 0.0 {
        (alpha_v.scale(rate_v.events) + alpha_inv.scale(rate_inv.events)) / rate_v.exposure
    } else {
        alpha_v.scale(rate_v.rate()) + alpha_inv.scale(rate_inv.rate())
    }
}

/// Competing-risks projection for a pair of cause-specific baselines.
#[derive(Debug, Clone)]
pub struct CompetingProjector {
    voluntary: HazardLookup,
    involuntary: HazardLookup,
    config: ProjectionConfig,
}

impl CompetingProjector {
    pub fn new(baselines: &CauseBaselines, pooling: PoolingConfig, config: ProjectionConfig) -> Result<Self> {
        config.validate()?;
        let (voluntary, involuntary) = baselines.lookups(pooling);
        Ok(Self {
            voluntary,
            involuntary,
            config,
        })
    }

    pub fn alphas(&self, score_v: ChurnScore, score_inv: ChurnScore, t0: TenureMonth) -> Result<(Alpha, Alpha)> {
        Ok((
            alpha_from_reference(score_v, self.voluntary.hazard(t0), t0)?,
            alpha_from_reference(score_inv, self.involuntary.hazard(t0), t0)?,
        ))
    }

    /// Each sub-hazard is scaled by its own coefficient, then the sum is
    /// clipped at 1. The reported `alpha` is the voluntary one.
    pub fn project_alphas(&self, alpha_v: Alpha, alpha_inv: Alpha, t0: TenureMonth) -> CustomerProjection {
        accumulate(alpha_v, &self.config, |j| {
            combine(
                alpha_v,
                self.voluntary.rate(t0 + j),
                alpha_inv,
                self.involuntary.rate(t0 + j),
            )
        })
    }

    pub fn project(&self, score_v: ChurnScore, score_inv: ChurnScore, t0: TenureMonth) -> Result<(CustomerProjection, Alpha)> {
        let (alpha_v, alpha_inv) = self.alphas(score_v, score_inv, t0)?;
        Ok((self.project_alphas(alpha_v, alpha_inv, t0), alpha_inv))
    }
}

/// Competing-risks projection with `h = alpha_v * h_v + alpha_inv * h_inv`.
pub fn project_competing(
    score_v: ChurnScore,
    score_inv: ChurnScore,
    baselines: &CauseBaselines,
    t0: TenureMonth,
    pooling: PoolingConfig,
    config: &ProjectionConfig,
) -> Result<CustomerProjection> {
    let (projection, _) = CompetingProjector::new(baselines, pooling, *config)?.project(score_v, score_inv, t0)?;
    Ok(projection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{extrapolate_tail, Smoothing};
    use approx::assert_abs_diff_eq;

    fn flat(h: f64) -> BaselineHazard {
        BaselineHazard::from_rates(vec![h], Some((0, h))).unwrap()
    }

    fn score(v: f64) -> ChurnScore {
        ChurnScore::new(v).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let b = flat(0.01);
        let a = compute_alpha(score(0.013), &b, 18, PoolingConfig::OFF).unwrap();
        assert_abs_diff_eq!(a.value(), 1.3, epsilon = 1e-12);
        assert_eq!(compute_alpha(score(0.01), &b, 3, PoolingConfig::OFF).unwrap().value(), 1.0);
        assert_eq!(compute_alpha(score(0.0), &b, 3, PoolingConfig::OFF).unwrap().value(), 0.0);
        assert!(matches!(
            compute_alpha(score(0.1), &flat(0.0), 4, PoolingConfig::OFF),
            Err(Error::DegenerateBaseline { tenure: 4 })
        ));
    }

    #[test]
    fn invalid_inputs() {
        assert!(ChurnScore::new(1.5).is_err());
        assert!(ChurnScore::new(f64::NAN).is_err());
        assert!(Alpha::new(-0.1).is_err());
        assert!(Alpha::new(f64::INFINITY).is_err());
        let bad = ProjectionConfig { eps: 0.0, max_horizon: 10 };
        assert!(expected_remaining_tenure(Alpha::ONE, &flat(0.1), 0, PoolingConfig::OFF, &bad).is_err());
    }

    #[test]
    fn unit_alpha_is_baseline_continuation() {
        let b = BaselineHazard::from_rates(vec![0.3, 0.2, 0.1, 0.05], Some((3, 0.05))).unwrap();
        let path = project_hazard(Alpha::ONE, &b, 1, 6, PoolingConfig::OFF);
        assert_eq!(path, vec![0.2, 0.1, 0.05, 0.05, 0.05, 0.05]);
    }

    #[test]
    fn clipping_at_one() {
        let b = BaselineHazard::from_rates(vec![0.1, 0.3, 0.1], None).unwrap();
        let path = project_hazard(Alpha::new(5.0).unwrap(), &b, 0, 3, PoolingConfig::OFF);
        assert_eq!(path[1], 1.0);
        let proj = expected_remaining_tenure(
            Alpha::new(5.0).unwrap(),
            &b,
            0,
            PoolingConfig::OFF,
            &ProjectionConfig::default(),
        )
        .unwrap();
        assert_eq!(proj.survival_path.as_slice()[1], 0.0);
        assert_eq!(proj.truncated_at, 1);
    }

    #[test]
    fn geometric_closed_forms() {
        let cfg = ProjectionConfig::default();
        let half = expected_remaining_tenure(Alpha::ONE, &flat(0.5), 0, PoolingConfig::OFF, &cfg).unwrap();
        assert_abs_diff_eq!(half.ert_months, 1.0, epsilon = 1e-4);
        let tenth = expected_remaining_tenure(Alpha::ONE, &flat(0.1), 0, PoolingConfig::OFF, &cfg).unwrap();
        assert_abs_diff_eq!(tenth.ert_months, 9.0, epsilon = 1e-3);
        let immortal = expected_remaining_tenure(Alpha::ZERO, &flat(0.1), 0, PoolingConfig::OFF, &cfg).unwrap();
        assert_eq!(immortal.ert_months, 1200.0);
        assert_eq!(immortal.truncated_at, 1199);
    }

    #[test]
    fn score_passthrough_at_t0() {
        let b = BaselineHazard::from_counts(vec![7, 13, 11], vec![97, 131, 89], Smoothing::None).unwrap();
        let b = extrapolate_tail(&b, 2).unwrap();
        let p = Projector::new(&b, PoolingConfig::OFF, ProjectionConfig::default()).unwrap();
        for s in [0.0123, 0.07, 0.3333, 0.9] {
            for t0 in 0..4 {
                let proj = p.project(score(s), t0).unwrap();
                assert_eq!(proj.hazard_path[0], s);
            }
        }
    }

    #[test]
    fn projector_matches_free_functions() {
        let b = BaselineHazard::from_counts(vec![2, 9, 1, 6, 4], vec![40, 90, 30, 70, 50], Smoothing::None).unwrap();
        let b = extrapolate_tail(&b, 3).unwrap();
        let pool = PoolingConfig::default();
        let cfg = ProjectionConfig::default();
        let p = Projector::new(&b, pool, cfg).unwrap();
        let alpha = compute_alpha(score(0.08), &b, 1, pool).unwrap();
        let direct = expected_remaining_tenure(alpha, &b, 1, pool, &cfg).unwrap();
        assert_eq!(p.project(score(0.08), 1).unwrap(), direct);
    }

    #[test]
    fn competing_reductions() {
        let v = BaselineHazard::from_counts(vec![3, 5, 2], vec![100, 80, 60], Smoothing::None).unwrap();
        let inv = BaselineHazard::from_counts(vec![0, 0, 0], vec![100, 80, 60], Smoothing::None).unwrap();
        let both = CauseBaselines::new(v.clone(), inv).unwrap().with_tail(1).unwrap();
        let cfg = ProjectionConfig::default();
        let comp = project_competing(score(0.05), score(0.0), &both, 0, PoolingConfig::OFF, &cfg).unwrap();
        let single = expected_remaining_tenure(
            compute_alpha(score(0.05), &both.voluntary, 0, PoolingConfig::OFF).unwrap(),
            &both.voluntary,
            0,
            PoolingConfig::OFF,
            &cfg,
        )
        .unwrap();
        assert_eq!(comp, single);
    }

    #[test]
    fn mismatched_exposures_rejected() {
        let v = BaselineHazard::from_counts(vec![1, 1], vec![10, 10], Smoothing::None).unwrap();
        let inv = BaselineHazard::from_counts(vec![1, 1], vec![10, 11], Smoothing::None).unwrap();
        assert!(matches!(CauseBaselines::new(v, inv), Err(Error::MismatchedExposures { tenure: 1 })));
    }
}
