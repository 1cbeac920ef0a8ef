//! Discrete-time hazard model with proportional hazard *odds*:
//!
//! ```text
//! log(h / (1 - h)) = log(h0(t) / (1 - h0(t))) + beta . x
//! ```
//!
//! The baseline log-odds enter as a fixed offset, so only `beta` is
//! estimated. Fitting maximises the (optionally ridge-penalised) Bernoulli
//! log-likelihood of person-period rows by Newton's method with step-halving.
//! The offset always comes from the Jeffreys-smoothed baseline, which keeps
//! it finite for bins with zero or all events.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::proportional::{accumulate, Alpha, CustomerProjection, ProjectionConfig};
use crate::survival::{BaselineHazard, HazardLookup, PoolingConfig, Smoothing, TenureMonth};

const MAX_HALVINGS: usize = 30;

/// One customer-month with its outcome and static covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonPeriodRow {
    pub tenure: TenureMonth,
    pub outcome: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddsFitConfig {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub pooling: PoolingConfig,
}

impl Default for OddsFitConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            tol: 1e-8,
            max_iter: 50,
            pooling: PoolingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OddsModel {
    pub beta: Vec<f64>,
    pub ridge: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Content hash of the smoothed baseline used for the offset.
    pub baseline_sha: String,
    /// Penalised log-likelihood after each accepted step, starting at `beta = 0`.
    pub trace: Vec<f64>,
}

#[inline]
fn logit(h: f64) -> f64 {
    (h / (1.0 - h)).ln()
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function and its complement, both computed without cancellation.
#[inline]
fn logistic_pair(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e / (1.0 + e);
    if z >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

/// Logistic response kept inside the open unit interval.
#[inline]
fn logistic_open(z: f64) -> f64 {
    logistic_pair(z).0.clamp(f64::MIN_POSITIVE, 1.0f64.next_down())
}

fn smoothed(baseline: &BaselineHazard) -> BaselineHazard {
    baseline.with_smoothing(Smoothing::Jeffreys)
}

fn offset_hazard(lookup: &HazardLookup, tenure: TenureMonth) -> Result<f64> {
    let h = lookup.hazard(tenure);
    if h > 0.0 && h < 1.0 {
        Ok(h)
    } else {
        Err(Error::OffsetUndefined { tenure })
    }
}

/// Person-period rows with their baseline log-odds offsets resolved.
#[derive(Debug, Clone)]
pub struct OddsDesign {
    offsets: Vec<f64>,
    x: Vec<f64>,
    y: Vec<bool>,
    m: usize,
}

impl OddsDesign {
    pub fn new(rows: &[PersonPeriodRow], baseline: &BaselineHazard, pooling: PoolingConfig) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyCalibration)?;
        let m = first.covariates.len();
        if m == 0 {
            return Err(Error::CovariateLength { expected: 1, got: 0 });
        }
        let lookup = smoothed(baseline).lookup(pooling);
        let mut offsets = Vec::with_capacity(rows.len());
        let mut x = Vec::with_capacity(rows.len() * m);
        let mut y = Vec::with_capacity(rows.len());
        for row in rows {
            if row.covariates.len() != m {
                return Err(Error::CovariateLength {
                    expected: m,
                    got: row.covariates.len(),
                });
            }
            offsets.push(logit(offset_hazard(&lookup, row.tenure)?));
            x.extend_from_slice(&row.covariates);
            y.push(row.outcome);
        }
        Ok(Self { offsets, x, y, m })
    }

    pub fn n_covariates(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        let xi = &self.x[i * self.m..(i + 1) * self.m];
        self.offsets[i] + xi.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `sum [y log h + (1-y) log(1-h)] - ridge/2 * |beta|^2`.
    pub fn log_likelihood(&self, beta: &[f64], ridge: f64) -> f64 {
        let ll: f64 = (0..self.len())
            .map(|i| {
                let eta = self.eta(i, beta);
                let y = if self.y[i] { eta } else { 0.0 };
                y - softplus(eta)
            })
            .sum();
        ll - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
    }

    /// Gradient of [`log_likelihood`](Self::log_likelihood).
    pub fn score(&self, beta: &[f64], ridge: f64) -> Vec<f64> {
        self.score_and_information(beta, ridge).0
    }

    /// Gradient and negative Hessian (`X'WX + ridge I`).
    fn score_and_information(&self, beta: &[f64], ridge: f64) -> (Vec<f64>, DMatrix<f64>) {
        let m = self.m;
        let mut g = vec![0.0; m];
        let mut info = DMatrix::<f64>::zeros(m, m);
        for i in 0..self.len() {
            let eta = self.eta(i, beta);
            let (h, one_minus_h) = logistic_pair(eta);
            let resid = if self.y[i] { one_minus_h } else { -h };
            let w = h * one_minus_h;
            let xi = &self.x[i * m..(i + 1) * m];
            for a in 0..m {
                g[a] += resid * xi[a];
                for b in 0..=a {
                    info[(a, b)] += w * xi[a] * xi[b];
                }
            }
        }
        for a in 0..m {
            g[a] -= ridge * beta[a];
            info[(a, a)] += ridge;
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        (g, info)
    }
}

/// Fit `beta` by penalised maximum likelihood.
///
/// Convergence is declared when the relative change in log-likelihood,
/// `|dl| / (|l| + 0.1)`, drops below `tol`. A fit that only "converges"
/// because the likelihood flattens out while `beta` keeps marching off
/// (separation) is reported as [`Error::FitDiverged`].
pub fn fit_odds_model(rows: &[PersonPeriodRow], baseline: &BaselineHazard, config: &OddsFitConfig) -> Result<OddsModel> {
    if !(config.ridge >= 0.0 && config.ridge.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge must be non-negative, got {}", config.ridge)));
    }
    if config.tol.is_nan() || config.tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tol must be positive, got {}", config.tol)));
    }
    let design = OddsDesign::new(rows, baseline, config.pooling)?;
    let digest = crate::dataio::baseline_digest(&smoothed(baseline), config.pooling);
    let ridge = config.ridge;
    let m = design.n_covariates();

    let mut beta = vec![0.0; m];
    let mut ll = design.log_likelihood(&beta, ridge);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = 0.0f64;

    while iterations < config.max_iter {
        iterations += 1;
        let (g, info) = design.score_and_information(&beta, ridge);
        if g.iter().all(|&v| v == 0.0) {
            converged = true;
            last_step = 0.0;
            break;
        }
        let direction = match info.cholesky() {
            Some(chol) => chol.solve(&DVector::from_vec(g)),
            None => return Err(Error::FitDiverged { iterations, beta }),
        };
        if direction.iter().any(|d| !d.is_finite()) {
            return Err(Error::FitDiverged { iterations, beta });
        }

        let mut scale = 1.0;
        let mut accepted = None;
        let mut any_finite = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = beta.iter().zip(direction.iter()).map(|(b, d)| b + scale * d).collect();
            let cand_ll = design.log_likelihood(&candidate, ridge);
            if cand_ll.is_finite() {
                any_finite = true;
                if cand_ll >= ll {
                    accepted = Some((candidate, cand_ll));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((candidate, cand_ll)) = accepted else {
            if any_finite {
                // no representable improvement left
                converged = true;
                break;
            }
            return Err(Error::FitDiverged { iterations, beta });
        };

        last_step = candidate
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let change = cand_ll - ll;
        beta = candidate;
        ll = cand_ll;
        trace.push(ll);
        if change / (ll.abs() + 0.1) < config.tol {
            converged = true;
            break;
        }
    }

    let beta_scale = 1.0 + beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let separated = last_step > 1e-3 * beta_scale;
    if beta.iter().any(|b| !b.is_finite()) || (separated && (converged || extreme_fit(&design, &beta))) {
        return Err(Error::FitDiverged { iterations, beta });
    }

    Ok(OddsModel {
        beta,
        ridge,
        log_likelihood: ll,
        iterations,
        converged,
        baseline_sha: digest,
        trace,
    })
}

/// Fitted probabilities numerically 0 or 1 for some row.
fn extreme_fit(design: &OddsDesign, beta: &[f64]) -> bool {
    (0..design.len()).any(|i| {
        let (h, c) = logistic_pair(design.eta(i, beta));
        h.min(c) < 10.0 * f64::EPSILON
    })
}

fn linear_predictor(model: &OddsModel, covariates: &[f64]) -> Result<f64> {
    if covariates.len() != model.beta.len() {
        return Err(Error::CovariateLength {
            expected: model.beta.len(),
            got: covariates.len(),
        });
    }
    Ok(model.beta.iter().zip(covariates).map(|(b, x)| b * x).sum())
}

#[inline]
fn apply_odds(h0: f64, linear: f64) -> f64 {
    if linear == 0.0 {
        h0
    } else {
        logistic_open(logit(h0) + linear)
    }
}

/// Prediction against a fixed baseline, with the smoothed lookup built once.
#[derive(Debug, Clone)]
pub struct OddsPredictor<'a> {
    model: &'a OddsModel,
    lookup: HazardLookup,
}

impl<'a> OddsPredictor<'a> {
    pub fn new(model: &'a OddsModel, baseline: &BaselineHazard, pooling: PoolingConfig) -> Self {
        Self {
            model,
            lookup: smoothed(baseline).lookup(pooling),
        }
    }

    /// `logistic(logit(h0(t)) + beta . x)`; with `beta . x = 0` this is
    /// `h0(t)` itself.
    pub fn predict(&self, covariates: &[f64], t: TenureMonth) -> Result<f64> {
        let linear = linear_predictor(self.model, covariates)?;
        Ok(apply_odds(offset_hazard(&self.lookup, t)?, linear))
    }

    /// Survival projection with the covariates held fixed at every future
    /// tenure. The projection's `alpha` carries the odds ratio `exp(beta . x)`.
    pub fn project(&self, covariates: &[f64], t0: TenureMonth, config: &ProjectionConfig) -> Result<CustomerProjection> {
        config.validate()?;
        let linear = linear_predictor(self.model, covariates)?;
        let alpha = Alpha::new(linear.exp().min(f64::MAX))?;
        let mut failure = None;
        let projection = accumulate(alpha, config, |j| match offset_hazard(&self.lookup, t0 + j) {
            Ok(h0) => apply_odds(h0, linear),
            Err(e) => {
                failure.get_or_insert(e);
                1.0
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(projection),
        }
    }
}

pub fn predict_hazard_odds(
    model: &OddsModel,
    covariates: &[f64],
    baseline: &BaselineHazard,
    t: TenureMonth,
    pooling: PoolingConfig,
) -> Result<f64> {
    let linear = linear_predictor(model, covariates)?;
    let h0 = smoothed(baseline).hazard_at(t, pooling);
    if !(h0 > 0.0 && h0 < 1.0) {
        return Err(Error::OffsetUndefined { tenure: t });
    }
    Ok(apply_odds(h0, linear))
}

pub fn project_with_odds_model(
    model: &OddsModel,
    covariates: &[f64],
    baseline: &BaselineHazard,
    t0: TenureMonth,
    pooling: PoolingConfig,
    config: &ProjectionConfig,
) -> Result<CustomerProjection> {
    OddsPredictor::new(model, baseline, pooling).project(covariates, t0, config)
}
