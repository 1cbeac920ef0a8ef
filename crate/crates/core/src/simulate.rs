//! Synthetic cohorts with known ground truth.
//!
//! Every customer draws a coefficient `alpha` and churns each month with
//! probability `min(1, alpha * h0(t))`. The calibration snapshot puts each
//! customer at a uniformly drawn tenure `t_c` (conditioned on still being a
//! customer there) and records whether they churn during the next month.
//! Survivors become scoring rows at tenure `t_c + 1`, scored with their true
//! next-month hazard, i.e. a perfect churn model unless `score_noise` is set.
//!
//! Each customer uses its own ChaCha8 stream `(seed, customer index)`, so
//! output is identical whether customers are generated in parallel or not.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{self, CalibrationRecord, Cause, Mode, ScoringRecord, Scores};
use crate::error::{Error, Result};
use crate::odds::PersonPeriodRow;
use crate::proportional::ChurnScore;
use crate::survival::{BaselineHazard, TenureMonth};

/// Give up on a customer after this many rejected draws.
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineShape {
    Flat { h: f64 },
    /// `h1` before `change_t`, `h2` from `change_t` on.
    Step { h1: f64, h2: f64, change_t: TenureMonth },
    /// `a / (1 + b t)`.
    Decaying { a: f64, b: f64 },
}

impl BaselineShape {
    pub fn hazard(&self, t: TenureMonth) -> f64 {
        match *self {
            BaselineShape::Flat { h } => h,
            BaselineShape::Step { h1, h2, change_t } => {
                if t < change_t {
                    h1
                } else {
                    h2
                }
            }
            BaselineShape::Decaying { a, b } => a / (1.0 + b * t as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let ok = match *self {
            BaselineShape::Flat { h } => in_unit(h),
            BaselineShape::Step { h1, h2, .. } => in_unit(h1) && in_unit(h2),
            BaselineShape::Decaying { a, b } => in_unit(a) && b.is_finite() && b >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("baseline shape {self:?} produces hazards outside [0, 1]")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaDist {
    Fixed { a: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

impl AlphaDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            AlphaDist::Fixed { a } => a.is_finite() && a >= 0.0,
            AlphaDist::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid alpha distribution {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            AlphaDist::Fixed { a } => a,
            AlphaDist::Lognormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
        }
    }
}

fn default_margin() -> f64 {
    10.0
}

fn default_eps() -> f64 {
    1e-6
}

fn default_max_horizon() -> usize {
    1200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub baseline_shape: BaselineShape,
    pub alpha_dist: AlphaDist,
    /// Involuntary-cause coefficient; when absent a competing-risks customer
    /// uses the same coefficient for both causes.
    #[serde(default)]
    pub alpha_inv_dist: Option<AlphaDist>,
    pub n_customers: usize,
    /// Snapshot tenures are drawn uniformly from `0..=max_tenure`.
    pub max_tenure: TenureMonth,
    /// Voluntary share `f_v` of the baseline hazard; enables competing risks.
    #[serde(default)]
    pub competing: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Log-scale standard deviation of multiplicative score noise.
    #[serde(default)]
    pub score_noise: Option<f64>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub discount_monthly: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_horizon")]
    pub max_horizon: usize,
}

impl SimSpec {
    pub fn new(baseline_shape: BaselineShape, alpha_dist: AlphaDist, n_customers: usize, max_tenure: TenureMonth, seed: u64) -> Self {
        Self {
            baseline_shape,
            alpha_dist,
            alpha_inv_dist: None,
            n_customers,
            max_tenure,
            competing: None,
            seed,
            score_noise: None,
            margin: default_margin(),
            discount_monthly: 0.0,
            eps: default_eps(),
            max_horizon: default_max_horizon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline_shape.validate()?;
        self.alpha_dist.validate()?;
        if let Some(d) = &self.alpha_inv_dist {
            d.validate()?;
        }
        if self.n_customers == 0 {
            return Err(Error::InvalidSpec("n_customers must be at least 1".into()));
        }
        if let Some(f) = self.competing {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidSpec(format!("competing split {f} is outside [0, 1]")));
            }
        }
        if let Some(s) = self.score_noise {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidSpec(format!("score_noise {s} must be non-negative")));
            }
        }
        if !(self.discount_monthly.is_finite() && self.discount_monthly >= 0.0) {
            return Err(Error::InvalidSpec("discount_monthly must be non-negative".into()));
        }
        if !self.margin.is_finite() {
            return Err(Error::InvalidSpec("margin must be finite".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) || self.max_horizon == 0 {
            return Err(Error::InvalidSpec("eps must be in (0, 1) and max_horizon at least 1".into()));
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        if self.competing.is_some() {
            Mode::Competing
        } else {
            Mode::Single
        }
    }

    /// Baseline sub-hazards `(h_v, h_inv)`; all of `h0` is voluntary in
    /// single-risk mode.
    pub fn sub_hazards(&self, t: TenureMonth) -> (f64, f64) {
        let h = self.baseline_shape.hazard(t);
        match self.competing {
            Some(f) => (f * h, (1.0 - f) * h),
            None => (h, 0.0),
        }
    }

    /// Unclipped true hazard of a customer with the given coefficients.
    pub fn raw_hazard(&self, alpha: f64, alpha_inv: f64, t: TenureMonth) -> f64 {
        let (hv, hi) = self.sub_hazards(t);
        if self.competing.is_some() {
            alpha * hv + alpha_inv * hi
        } else {
            alpha * hv
        }
    }

    pub fn true_hazard(&self, alpha: f64, alpha_inv: f64, t: TenureMonth) -> f64 {
        self.raw_hazard(alpha, alpha_inv, t).min(1.0)
    }
}

/// Ground truth for one scored customer.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub customer_id: String,
    pub tenure: TenureMonth,
    pub true_alpha: f64,
    pub true_alpha_inv: Option<f64>,
    pub true_ert: f64,
    pub true_clv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub calibration: Vec<CalibrationRecord>,
    pub scoring: Vec<ScoringRecord>,
    pub truth: Vec<TruthRecord>,
    /// Snapshot draws plus truth paths where `alpha * h0` exceeded 1 and was clipped.
    pub clipped: usize,
    /// Customers that could not be placed at their snapshot tenure.
    pub unreachable: usize,
}

/// Expected remaining tenure evaluated directly on a hazard path.
pub fn true_ert<F: FnMut(usize) -> f64>(mut hazard: F, eps: f64, max_horizon: usize) -> f64 {
    let mut survival = 1.0;
    let mut total = 0.0;
    for j in 0..max_horizon {
        survival *= 1.0 - hazard(j).clamp(0.0, 1.0);
        total += survival;
        if survival < eps {
            break;
        }
    }
    total
}

/// Walks the true path once: `(ert, clv, any month clipped)`.
fn truth_path(spec: &SimSpec, alpha: f64, alpha_inv: f64, t0: TenureMonth) -> (f64, f64, bool) {
    let mut survival = 1.0;
    let mut discount = 1.0;
    let mut ert = 0.0;
    let mut clv = 0.0;
    let mut clipped = false;
    for j in 0..spec.max_horizon {
        let raw = spec.raw_hazard(alpha, alpha_inv, t0 + j);
        clipped |= raw > 1.0;
        survival *= 1.0 - raw.min(1.0);
        discount /= 1.0 + spec.discount_monthly;
        ert += survival;
        clv += survival * spec.margin * discount;
        if survival < spec.eps {
            break;
        }
    }
    (ert, clv, clipped)
}

fn customer_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Customer {
    calibration: CalibrationRecord,
    scoring: Option<(ScoringRecord, TruthRecord)>,
    clipped: usize,
}

fn simulate_customer(spec: &SimSpec, index: usize) -> Option<Customer> {
    let mut rng = customer_rng(spec.seed, index);
    let snapshot: TenureMonth = rng.random_range(0..=spec.max_tenure);
    let competing = spec.competing.is_some();
    let mut clipped = 0;

    // with fixed coefficients every attempt has the same reach probability
    let fixed = matches!(spec.alpha_dist, AlphaDist::Fixed { .. })
        && !matches!(spec.alpha_inv_dist, Some(AlphaDist::Lognormal { .. }));
    let mut cached_reach = None;
    let mut placed = None;
    for _ in 0..MAX_ATTEMPTS {
        let alpha = spec.alpha_dist.sample(&mut rng);
        let alpha_inv = match (&spec.alpha_inv_dist, competing) {
            (Some(d), true) => d.sample(&mut rng),
            _ => alpha,
        };
        let reach = match cached_reach {
            Some(r) if fixed => r,
            _ => {
                let r: f64 = (0..snapshot)
                    .map(|u| 1.0 - spec.true_hazard(alpha, alpha_inv, u))
                    .product();
                cached_reach = Some(r);
                r
            }
        };
        if rng.random::<f64>() < reach {
            placed = Some((alpha, alpha_inv));
            break;
        }
    }
    let (alpha, alpha_inv) = placed?;

    let raw = spec.raw_hazard(alpha, alpha_inv, snapshot);
    if raw > 1.0 {
        clipped += 1;
    }
    let churned = rng.random::<f64>() < raw.min(1.0);
    let cause = if churned && competing {
        let (hv, _) = spec.sub_hazards(snapshot);
        let share_v = alpha * hv / raw;
        Some(if rng.random::<f64>() < share_v {
            Cause::Voluntary
        } else {
            Cause::Involuntary
        })
    } else {
        None
    };
    let customer_id = format!("c{index}");
    let calibration = CalibrationRecord {
        customer_id: customer_id.clone(),
        tenure: snapshot,
        churned,
        cause,
        covariates: Vec::new(),
    };
    if churned {
        return Some(Customer {
            calibration,
            scoring: None,
            clipped,
        });
    }

    let t0 = snapshot + 1;
    let noise = match spec.score_noise {
        Some(sigma) if sigma > 0.0 => {
            let z: f64 = rng.sample(StandardNormal);
            (sigma * z).exp()
        }
        _ => 1.0,
    };
    let scores = if competing {
        let (hv, hi) = spec.sub_hazards(t0);
        let mut sv = alpha * hv * noise;
        let mut si = alpha_inv * hi * noise;
        let total = sv + si;
        if total > 1.0 {
            sv /= total;
            si /= total;
        }
        Scores::Competing {
            voluntary: ChurnScore::new(sv.min(1.0)).expect("score in range"),
            involuntary: ChurnScore::new(si.min(1.0)).expect("score in range"),
        }
    } else {
        Scores::Single(ChurnScore::new((spec.true_hazard(alpha, alpha_inv, t0) * noise).min(1.0)).expect("score in range"))
    };
    let (true_ert, true_clv, path_clipped) = truth_path(spec, alpha, alpha_inv, t0);
    clipped += usize::from(path_clipped);
    let truth = TruthRecord {
        customer_id: customer_id.clone(),
        tenure: t0,
        true_alpha: alpha,
        true_alpha_inv: competing.then_some(alpha_inv),
        true_ert,
        true_clv,
    };
    let scoring = ScoringRecord {
        customer_id,
        tenure: t0,
        scores,
        margin: spec.margin,
    };
    Some(Customer {
        calibration,
        scoring: Some((scoring, truth)),
        clipped,
    })
}

fn assemble(customers: Vec<Option<Customer>>) -> SimOutput {
    let mut out = SimOutput {
        calibration: Vec::with_capacity(customers.len()),
        scoring: Vec::new(),
        truth: Vec::new(),
        clipped: 0,
        unreachable: 0,
    };
    for c in customers {
        let Some(c) = c else {
            out.unreachable += 1;
            continue;
        };
        out.clipped += c.clipped;
        out.calibration.push(c.calibration);
        if let Some((s, t)) = c.scoring {
            out.scoring.push(s);
            out.truth.push(t);
        }
    }
    out
}

/// Generate a cohort; customers are simulated in parallel.
pub fn generate_cohort(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let customers = (0..spec.n_customers)
        .into_par_iter()
        .map(|i| simulate_customer(spec, i))
        .collect();
    Ok(assemble(customers))
}

/// Same as [`generate_cohort`] on the calling thread only.
pub fn generate_cohort_serial(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let customers = (0..spec.n_customers).map(|i| simulate_customer(spec, i)).collect();
    Ok(assemble(customers))
}

pub fn write_truth<W: Write>(mut out: W, truth: &[TruthRecord], mode: Mode) -> Result<W> {
    match mode {
        Mode::Single => writeln!(out, "customer_id,true_alpha,true_ert,true_clv")?,
        Mode::Competing => writeln!(out, "customer_id,true_alpha,true_alpha_inv,true_ert,true_clv")?,
    }
    for t in truth {
        match (mode, t.true_alpha_inv) {
            (Mode::Competing, Some(inv)) => writeln!(
                out,
                "{},{},{},{},{}",
                t.customer_id, t.true_alpha, inv, t.true_ert, t.true_clv
            )?,
            _ => writeln!(out, "{},{},{},{}", t.customer_id, t.true_alpha, t.true_ert, t.true_clv)?,
        }
    }
    out.flush()?;
    Ok(out)
}

/// Writes `calibration.csv`, `scoring.csv` and `truth.csv` into `dir`.
pub fn write_outputs(dir: &Path, spec: &SimSpec, output: &SimOutput) -> Result<()> {
    use std::fs::File;
    use std::io::BufWriter;
    std::fs::create_dir_all(dir)?;
    let mode = spec.mode();
    dataio::write_calibration(BufWriter::new(File::create(dir.join("calibration.csv"))?), mode, &[], &output.calibration)?;
    dataio::write_scoring(BufWriter::new(File::create(dir.join("scoring.csv"))?), mode, &output.scoring)?;
    write_truth(BufWriter::new(File::create(dir.join("truth.csv"))?), &output.truth, mode)?;
    Ok(())
}

/// Person-period data generated from the odds-proportional model
/// `logit h = logit h0(t) + beta . x`, with standard normal covariates held
/// fixed per customer.
#[derive(Debug, Clone, PartialEq)]
pub struct OddsSimSpec {
    /// `h0` by tenure; the last value continues indefinitely.
    pub baseline: Vec<f64>,
    pub beta: Vec<f64>,
    pub n_customers: usize,
    /// Entry tenures are uniform on `0..=max_entry_tenure`.
    pub max_entry_tenure: TenureMonth,
    /// Months each customer is followed (stopping at churn).
    pub follow_up: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OddsCustomer {
    pub entry_tenure: TenureMonth,
    pub covariates: Vec<f64>,
    /// Months survived during follow-up.
    pub survived_months: usize,
    pub churned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OddsCohort {
    pub rows: Vec<PersonPeriodRow>,
    pub customers: Vec<OddsCustomer>,
}

impl OddsSimSpec {
    pub fn baseline_hazard(&self, t: TenureMonth) -> f64 {
        self.baseline[t.min(self.baseline.len() - 1)]
    }

    /// The generating baseline as a rate table.
    pub fn true_baseline(&self) -> Result<BaselineHazard> {
        let last = self.baseline.len().saturating_sub(1);
        let tail = self.baseline.last().map(|&h| (last, h));
        BaselineHazard::from_rates(self.baseline.clone(), tail)
    }

    pub fn true_hazard(&self, covariates: &[f64], t: TenureMonth) -> f64 {
        let h0 = self.baseline_hazard(t);
        let eta = (h0 / (1.0 - h0)).ln() + self.beta.iter().zip(covariates).map(|(b, x)| b * x).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

pub fn generate_odds_cohort(spec: &OddsSimSpec) -> Result<OddsCohort> {
    if spec.baseline.is_empty() || spec.baseline.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
        return Err(Error::InvalidSpec("odds baseline hazards must lie strictly inside (0, 1)".into()));
    }
    if spec.beta.is_empty() {
        return Err(Error::InvalidSpec("at least one coefficient is required".into()));
    }
    let simulated: Vec<(Vec<PersonPeriodRow>, OddsCustomer)> = (0..spec.n_customers)
        .into_par_iter()
        .map(|i| {
            let mut rng = customer_rng(spec.seed, i);
            let entry_tenure = rng.random_range(0..=spec.max_entry_tenure);
            let covariates: Vec<f64> = spec.beta.iter().map(|_| rng.sample(StandardNormal)).collect();
            let mut rows = Vec::new();
            let mut churned = false;
            for k in 0..spec.follow_up {
                let t = entry_tenure + k;
                let event = rng.random::<f64>() < spec.true_hazard(&covariates, t);
                rows.push(PersonPeriodRow {
                    tenure: t,
                    outcome: event,
                    covariates: covariates.clone(),
                });
                if event {
                    churned = true;
                    break;
                }
            }
            let survived_months = if churned { rows.len() - 1 } else { rows.len() };
            (
                rows,
                OddsCustomer {
                    entry_tenure,
                    covariates,
                    survived_months,
                    churned,
                },
            )
        })
        .collect();
    let mut cohort = OddsCohort {
        rows: Vec::new(),
        customers: Vec::with_capacity(simulated.len()),
    };
    for (rows, customer) in simulated {
        cohort.rows.extend(rows);
        cohort.customers.push(customer);
    }
    Ok(cohort)
}
