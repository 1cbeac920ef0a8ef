//! Baseline hazard estimation over discrete tenure months.
//!
//! Tenure `t` counts completed months. The hazard at `t` is the probability of
//! churning during the month that follows reaching tenure `t`, so `t = 0` is a
//! brand-new customer and a churn-model score for a customer at tenure `t0` is
//! directly comparable with `h0(t0)`.
//!
//! Two estimators produce the same baseline from different data:
//!
//! - [`estimate_hazard_by_tenure`] works from a one-month snapshot: customer
//!   tenures at some date plus whether each churned in the following month.
//! - [`kaplan_meier`] works from full event histories with right-censoring.
//!
//! Beyond the stable part of the curve a single pooled rate is used
//! ([`detect_tail_start`], [`extrapolate_tail`]), and sparse bins are pooled
//! with their neighbours at lookup time ([`BaselineHazard::hazard_at`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{CalibrationRecord, Cause};
use crate::error::{Error, Result};

/// Completed months of tenure.
pub type TenureMonth = usize;

/// Default window length for [`detect_tail_start`].
pub const DEFAULT_TAIL_WINDOW: usize = 6;
/// Default relative tolerance for [`detect_tail_start`].
pub const DEFAULT_TAIL_REL_TOL: f64 = 0.10;

/// Per-bin smoothing applied to event/exposure ratios.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    #[default]
    None,
    /// Jeffreys prior: `(events + 0.5) / (exposure + 1)`.
    Jeffreys,
}

impl Smoothing {
    fn apply(self, events: f64, exposure: f64) -> PooledRate {
        match self {
            Smoothing::None => PooledRate { events, exposure },
            Smoothing::Jeffreys => PooledRate {
                events: events + 0.5,
                exposure: exposure + 1.0,
            },
        }
    }
}

/// Sparse-bin pooling rule used by [`BaselineHazard::hazard_at`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingConfig {
    /// A bin with fewer events than this borrows from symmetric neighbours.
    pub min_events: u64,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self { min_events: 5 }
    }
}

impl PoolingConfig {
    /// Never pool bins that have exposure.
    pub const OFF: PoolingConfig = PoolingConfig { min_events: 0 };
}

/// A hazard expressed as (possibly smoothed) events over exposure.
///
/// Keeping the ratio lets sub-hazards over a shared denominator be summed at
/// the count level, which is exact in floating point for integer counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledRate {
    pub events: f64,
    pub exposure: f64,
}

impl PooledRate {
    pub fn from_rate(rate: f64) -> Self {
        Self {
            events: rate,
            exposure: 1.0,
        }
    }

    pub fn rate(&self) -> f64 {
        if self.exposure > 0.0 {
            self.events / self.exposure
        } else {
            0.0
        }
    }
}

/// Per-tenure event and exposure counts.
///
/// Counts from disjoint partitions of the data can be merged in any order;
/// the result is identical to a single sequential pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TenureCounts {
    events: Vec<u64>,
    exposures: Vec<u64>,
}

impl TenureCounts {
    pub fn new() -> Self {
        Self::default()
    }

    fn grow(&mut self, len: usize) {
        if self.exposures.len() < len {
            self.exposures.resize(len, 0);
            self.events.resize(len, 0);
        }
    }

    pub fn add(&mut self, tenure: TenureMonth, churned: bool) {
        self.grow(tenure + 1);
        self.exposures[tenure] += 1;
        if churned {
            self.events[tenure] += 1;
        }
    }

    pub fn merge(mut self, other: TenureCounts) -> TenureCounts {
        self.grow(other.exposures.len());
        for (t, (&n, &d)) in other.exposures.iter().zip(&other.events).enumerate() {
            self.exposures[t] += n;
            self.events[t] += d;
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.exposures.iter().all(|&n| n == 0)
    }

    pub fn events(&self) -> &[u64] {
        &self.events
    }

    pub fn exposures(&self) -> &[u64] {
        &self.exposures
    }

    pub fn into_baseline(self, smoothing: Smoothing) -> Result<BaselineHazard> {
        if self.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        BaselineHazard::from_counts(self.events, self.exposures, smoothing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tail {
    start: TenureMonth,
    rate: PooledRate,
}

/// Baseline hazard `h0(t)` over tenure months `0..=T_max`, with an optional
/// extrapolated tail for `t >= tail_start`.
///
/// A baseline is either count-backed (built from calibration data, the usual
/// case) or a plain rate table ([`BaselineHazard::from_rates`]) with empty
/// count vectors. Pooling only applies to count-backed baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHazard {
    hazards: Vec<Option<f64>>,
    exposures: Vec<u64>,
    events: Vec<u64>,
    smoothing: Smoothing,
    tail: Option<Tail>,
}

impl BaselineHazard {
    pub fn from_counts(events: Vec<u64>, exposures: Vec<u64>, smoothing: Smoothing) -> Result<Self> {
        if exposures.is_empty() || exposures.iter().all(|&n| n == 0) {
            return Err(Error::EmptyCalibration);
        }
        if events.len() != exposures.len() {
            return Err(Error::InvalidBaseline(format!(
                "events has {} entries but exposures has {}",
                events.len(),
                exposures.len()
            )));
        }
        if let Some(t) = (0..events.len()).find(|&t| events[t] > exposures[t]) {
            return Err(Error::InvalidBaseline(format!(
                "events exceed exposures at tenure {t}"
            )));
        }
        let hazards = bin_hazards(&events, &exposures, smoothing);
        Ok(Self {
            hazards,
            exposures,
            events,
            smoothing,
            tail: None,
        })
    }

    /// A count-free baseline from known hazard values, e.g. a generating
    /// curve. `tail` is `(tail_start, tail_rate)`.
    pub fn from_rates(rates: Vec<f64>, tail: Option<(TenureMonth, f64)>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        for (index, &value) in rates.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidHazard { index, value });
            }
        }
        let tail = match tail {
            Some((start, rate)) => {
                if start > rates.len() {
                    return Err(Error::TailOutOfRange {
                        tail_start: start,
                        max_tenure: rates.len() - 1,
                    });
                }
                if !(0.0..=1.0).contains(&rate) {
                    return Err(Error::InvalidHazard { index: start, value: rate });
                }
                Some(Tail {
                    start,
                    rate: PooledRate::from_rate(rate),
                })
            }
            None => None,
        };
        Ok(Self {
            hazards: rates.into_iter().map(Some).collect(),
            exposures: Vec::new(),
            events: Vec::new(),
            smoothing: Smoothing::None,
            tail,
        })
    }

    pub fn hazards(&self) -> &[Option<f64>] {
        &self.hazards
    }

    pub fn exposures(&self) -> &[u64] {
        &self.exposures
    }

    pub fn events(&self) -> &[u64] {
        &self.events
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn has_counts(&self) -> bool {
        !self.exposures.is_empty()
    }

    /// Last tenure present in the data (`T_max`).
    pub fn max_tenure(&self) -> TenureMonth {
        self.hazards.len() - 1
    }

    pub fn tail_start(&self) -> Option<TenureMonth> {
        self.tail.map(|t| t.start)
    }

    pub fn tail_rate(&self) -> Option<f64> {
        self.tail.map(|t| t.rate.rate())
    }

    /// Re-derive hazards (and the tail rate) under a different smoothing.
    /// Rate tables carry no counts and are returned unchanged.
    pub fn with_smoothing(&self, smoothing: Smoothing) -> Self {
        if !self.has_counts() || smoothing == self.smoothing {
            return self.clone();
        }
        let mut out = self.clone();
        out.smoothing = smoothing;
        out.hazards = bin_hazards(&self.events, &self.exposures, smoothing);
        if let Some(tail) = self.tail {
            let (d, n) = self.tail_counts(tail.start);
            out.tail = Some(Tail {
                start: tail.start,
                rate: smoothing.apply(d as f64, n as f64),
            });
        }
        out
    }

    /// Weighted (events, exposure) for a tenure, before smoothing. Rate
    /// tables weight every tenure equally.
    fn raw(&self, t: TenureMonth) -> (f64, f64) {
        if self.has_counts() {
            (self.events[t] as f64, self.exposures[t] as f64)
        } else {
            (self.hazards[t].unwrap_or(0.0), 1.0)
        }
    }

    fn observed(&self, t: TenureMonth) -> bool {
        if self.has_counts() {
            self.exposures[t] > 0
        } else {
            self.hazards[t].is_some()
        }
    }

    fn tail_counts(&self, start: TenureMonth) -> (u64, u64) {
        let d = self.events[start..].iter().sum();
        let n = self.exposures[start..].iter().sum();
        (d, n)
    }

    /// Hazard at any tenure as an events/exposure ratio. See [`hazard_at`].
    ///
    /// [`hazard_at`]: BaselineHazard::hazard_at
    pub fn rate_at(&self, t: TenureMonth, pooling: PoolingConfig) -> PooledRate {
        self.rate_pooled_on(t, pooling, &self.events)
    }

    /// Like [`rate_at`](Self::rate_at), but the pooling window is chosen on
    /// `window_events` (same length as this baseline's counts).
    fn rate_pooled_on(&self, t: TenureMonth, pooling: PoolingConfig, window_events: &[u64]) -> PooledRate {
        if let Some(tail) = self.tail {
            if t >= tail.start {
                return tail.rate;
            }
        }
        let t = t.min(self.max_tenure());
        if !self.has_counts() {
            return PooledRate::from_rate(self.hazards[t].unwrap_or(0.0));
        }
        let (lo, hi) = pooling_window(window_events, &self.exposures, t, pooling.min_events);
        let d: u64 = self.events[lo..=hi].iter().sum();
        let n: u64 = self.exposures[lo..=hi].iter().sum();
        self.smoothing.apply(d as f64, n as f64)
    }

    /// Baseline hazard at tenure `t`. Total over all `t`:
    ///
    /// - `t >= tail_start` returns the tail rate;
    /// - an observed bin with at least `min_events` events returns its own rate;
    /// - otherwise the bin is widened symmetrically (clamped to `0..=T_max`)
    ///   until the pooled events reach `min_events` or the range is exhausted;
    /// - without a tail, tenures past `T_max` reuse the lookup at `T_max`.
    pub fn hazard_at(&self, t: TenureMonth, pooling: PoolingConfig) -> f64 {
        self.rate_at(t, pooling).rate()
    }

    /// Precomputed O(1) lookup with the pooling rule resolved.
    pub fn lookup(&self, pooling: PoolingConfig) -> HazardLookup {
        self.lookup_pooled_on(pooling, &self.events)
    }

    fn lookup_pooled_on(&self, pooling: PoolingConfig, window_events: &[u64]) -> HazardLookup {
        let cutoff = self.tail.map_or(self.hazards.len(), |t| t.start);
        let rates: Vec<PooledRate> = (0..cutoff)
            .map(|t| self.rate_pooled_on(t, pooling, window_events))
            .collect();
        let beyond = self.rate_pooled_on(cutoff.max(self.hazards.len()), pooling, window_events);
        HazardLookup { rates, beyond }
    }
}

/// Symmetric window `lo..=hi` around `t`, clamped to the observed range,
/// widened until it holds `min_events` events or covers everything.
fn pooling_window(events: &[u64], exposures: &[u64], t: TenureMonth, min_events: u64) -> (usize, usize) {
    let enough = |d: u64, n: u64| n > 0 && d >= min_events;
    let last = events.len() - 1;
    let (mut d, mut n) = (events[t], exposures[t]);
    let (mut lo, mut hi) = (t, t);
    while !enough(d, n) && (lo > 0 || hi < last) {
        if lo > 0 {
            lo -= 1;
            d += events[lo];
            n += exposures[lo];
        }
        if hi < last {
            hi += 1;
            d += events[hi];
            n += exposures[hi];
        }
    }
    (lo, hi)
}

fn bin_hazards(events: &[u64], exposures: &[u64], smoothing: Smoothing) -> Vec<Option<f64>> {
    events
        .iter()
        .zip(exposures)
        .map(|(&d, &n)| (n > 0).then(|| smoothing.apply(d as f64, n as f64).rate()))
        .collect()
}

/// [`BaselineHazard::hazard_at`] resolved into a flat table.
#[derive(Debug, Clone)]
pub struct HazardLookup {
    rates: Vec<PooledRate>,
    beyond: PooledRate,
}

impl HazardLookup {
    #[inline]
    pub fn rate(&self, t: TenureMonth) -> PooledRate {
        self.rates.get(t).copied().unwrap_or(self.beyond)
    }

    #[inline]
    pub fn hazard(&self, t: TenureMonth) -> f64 {
        self.rate(t).rate()
    }
}

const PARALLEL_CHUNK: usize = 1 << 15;

fn validate_record(row: usize, record: &CalibrationRecord, competing: bool) -> Result<()> {
    match (record.churned, record.cause, competing) {
        (false, Some(_), _) => Err(Error::InvalidRecord {
            row,
            reason: "cause given for a customer who did not churn".into(),
        }),
        (true, None, true) => Err(Error::InvalidRecord {
            row,
            reason: "churned customer has no cause".into(),
        }),
        _ => Ok(()),
    }
}

/// Monthly churn rate by tenure from a one-month snapshot.
///
/// Tenures inside the observed range with no customers are left absent in
/// `hazards`; [`BaselineHazard::hazard_at`] fills them by pooling.
pub fn estimate_hazard_by_tenure(
    records: &[CalibrationRecord],
    smoothing: Smoothing,
) -> Result<BaselineHazard> {
    if records.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    for (row, r) in records.iter().enumerate() {
        validate_record(row, r, false)?;
    }
    count_by_tenure(records, |r| Some(r.churned)).into_baseline(smoothing)
}

fn count_by_tenure<F>(records: &[CalibrationRecord], outcome: F) -> TenureCounts
where
    F: Fn(&CalibrationRecord) -> Option<bool> + Sync,
{
    records
        .par_chunks(PARALLEL_CHUNK)
        .map(|chunk| {
            let mut counts = TenureCounts::new();
            for r in chunk {
                if let Some(event) = outcome(r) {
                    counts.add(r.tenure, event);
                }
            }
            counts
        })
        .reduce(TenureCounts::new, TenureCounts::merge)
}

/// Voluntary and involuntary sub-baselines over common exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct CauseBaselines {
    pub voluntary: BaselineHazard,
    pub involuntary: BaselineHazard,
}

/// Cause-specific hazards: events of each cause over the exposure of the
/// whole snapshot, so the two sub-hazards sum to the all-cause hazard.
pub fn estimate_cause_hazards(
    records: &[CalibrationRecord],
    smoothing: Smoothing,
) -> Result<CauseBaselines> {
    if records.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    for (row, r) in records.iter().enumerate() {
        validate_record(row, r, true)?;
    }
    let voluntary = count_by_tenure(records, |r| Some(r.cause == Some(Cause::Voluntary)));
    let involuntary = count_by_tenure(records, |r| Some(r.cause == Some(Cause::Involuntary)));
    Ok(CauseBaselines {
        voluntary: voluntary.into_baseline(smoothing)?,
        involuntary: involuntary.into_baseline(smoothing)?,
    })
}

impl CauseBaselines {
    /// Build from per-cause counts, checking the shared-exposure contract.
    pub fn new(voluntary: BaselineHazard, involuntary: BaselineHazard) -> Result<Self> {
        if voluntary.has_counts() && involuntary.has_counts() {
            let (a, b) = (voluntary.exposures(), involuntary.exposures());
            if let Some(t) = (0..a.len().max(b.len())).find(|&t| a.get(t) != b.get(t)) {
                return Err(Error::MismatchedExposures { tenure: t });
            }
        }
        Ok(Self {
            voluntary,
            involuntary,
        })
    }

    /// Lookups for both causes. Pooling windows are chosen on the all-cause
    /// event counts, so the two sub-hazards always pool over the same
    /// tenures and still sum to the all-cause hazard.
    pub fn lookups(&self, pooling: PoolingConfig) -> (HazardLookup, HazardLookup) {
        if !(self.voluntary.has_counts() && self.involuntary.has_counts()) {
            return (self.voluntary.lookup(pooling), self.involuntary.lookup(pooling));
        }
        let total: Vec<u64> = self
            .voluntary
            .events
            .iter()
            .zip(&self.involuntary.events)
            .map(|(a, b)| a + b)
            .collect();
        (
            self.voluntary.lookup_pooled_on(pooling, &total),
            self.involuntary.lookup_pooled_on(pooling, &total),
        )
    }

    pub fn with_tail(&self, tail_start: TenureMonth) -> Result<Self> {
        Ok(Self {
            voluntary: extrapolate_tail(&self.voluntary, tail_start)?,
            involuntary: extrapolate_tail(&self.involuntary, tail_start)?,
        })
    }
}

/// Smallest `t*` such that for every start `s >= t*` the exposure-weighted
/// mean hazards over `[s, s+window)` and `[s+window, s+2*window)` differ by
/// less than `rel_tol` relative to the larger of the two. Falls back to the
/// exposure-weighted 90th percentile of observed tenures.
pub fn detect_tail_start(
    baseline: &BaselineHazard,
    window: usize,
    rel_tol: f64,
) -> Result<TenureMonth> {
    if window == 0 {
        return Err(Error::InvalidConfig("tail window must be at least 1".into()));
    }
    let observed = (0..baseline.hazards.len())
        .filter(|&t| baseline.observed(t))
        .count();
    if observed < 2 * window {
        return Err(Error::InsufficientData {
            needed: 2 * window,
            found: observed,
        });
    }
    let mean = |from: usize, to: usize| {
        let (d, n) = (from..to).fold((0.0, 0.0), |(d, n), t| {
            let (dt, nt) = baseline.raw(t);
            (d + dt, n + nt)
        });
        (n > 0.0).then(|| d / n)
    };
    let len = baseline.hazards.len();
    let last = len - 2 * window;
    // earliest start after which every window pair stays within tolerance
    let mut candidate = Some(0);
    for start in 0..=last {
        let (Some(a), Some(b)) = (
            mean(start, start + window),
            mean(start + window, start + 2 * window),
        ) else {
            continue;
        };
        let scale = a.max(b);
        let rel = if scale > 0.0 { (a - b).abs() / scale } else { 0.0 };
        if rel >= rel_tol {
            candidate = (start < last).then_some(start + 1);
        }
    }
    if let Some(start) = candidate {
        return Ok(start);
    }
    Ok(weighted_percentile_tenure(baseline, 0.9))
}

fn weighted_percentile_tenure(baseline: &BaselineHazard, q: f64) -> TenureMonth {
    let weights: Vec<f64> = (0..baseline.hazards.len())
        .map(|t| if baseline.observed(t) { baseline.raw(t).1 } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    for (t, w) in weights.iter().enumerate() {
        cum += w;
        if *w > 0.0 && cum >= q * total {
            return t;
        }
    }
    baseline.max_tenure()
}

/// Replace hazards from `tail_start` on by the pooled rate over that region.
pub fn extrapolate_tail(baseline: &BaselineHazard, tail_start: TenureMonth) -> Result<BaselineHazard> {
    let max_tenure = baseline.max_tenure();
    if tail_start > max_tenure {
        return Err(Error::TailOutOfRange {
            tail_start,
            max_tenure,
        });
    }
    let rate = if baseline.has_counts() {
        let (d, n) = baseline.tail_counts(tail_start);
        if n == 0 {
            return Err(Error::EmptyTail { tail_start });
        }
        baseline.smoothing.apply(d as f64, n as f64)
    } else {
        let observed: Vec<f64> = baseline.hazards[tail_start..].iter().flatten().copied().collect();
        if observed.is_empty() {
            return Err(Error::EmptyTail { tail_start });
        }
        PooledRate {
            events: observed.iter().sum(),
            exposure: observed.len() as f64,
        }
    };
    let mut out = baseline.clone();
    out.tail = Some(Tail {
        start: tail_start,
        rate,
    });
    Ok(out)
}

/// Survival probabilities `S(0), S(1), ...`, non-increasing within `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurvivalCurve(Vec<f64>);

impl SurvivalCurve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_survival(&values)?;
        Ok(Self(values))
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

fn validate_survival(values: &[f64]) -> Result<()> {
    let mut prev = 1.0;
    for (index, &value) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidSurvival { index, value });
        }
        if value > prev {
            return Err(Error::NotMonotone { index });
        }
        prev = value;
    }
    Ok(())
}

/// `S(t) = S(t-1) * (1 - h(t))`, starting from 1.
pub fn hazard_to_survival(hazards: &[f64]) -> Result<SurvivalCurve> {
    let mut s = 1.0;
    let mut out = Vec::with_capacity(hazards.len());
    for (index, &h) in hazards.iter().enumerate() {
        if !(0.0..=1.0).contains(&h) {
            return Err(Error::InvalidHazard { index, value: h });
        }
        s *= 1.0 - h;
        out.push(s);
    }
    Ok(SurvivalCurve(out))
}

/// `h(t) = 1 - S(t)/S(t-1)` with an implicit `S(-1) = 1`. Once survival hits
/// zero every later hazard is 1.
pub fn survival_to_hazard(survival: &[f64]) -> Result<Vec<f64>> {
    validate_survival(survival)?;
    let mut prev = 1.0;
    Ok(survival
        .iter()
        .map(|&s| {
            let h = if prev == 0.0 { 1.0 } else { 1.0 - s / prev };
            prev = s;
            h
        })
        .collect())
}

/// Observed total tenure and whether it ended in churn (otherwise censored).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventHistory {
    pub duration: TenureMonth,
    pub churned: bool,
}

/// Discrete product-limit estimate indexed by duration `0..=max_duration`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLimit {
    /// `n_u`: histories with duration `>= u`.
    pub at_risk: Vec<u64>,
    /// `d_u`: churn events at duration `u`.
    pub events: Vec<u64>,
    pub survival: SurvivalCurve,
}

impl ProductLimit {
    /// The factor hazards `d_u / n_u`, exact integer ratios.
    pub fn hazards(&self) -> Vec<f64> {
        self.events
            .iter()
            .zip(&self.at_risk)
            .map(|(&d, &n)| if n > 0 { d as f64 / n as f64 } else { 0.0 })
            .collect()
    }
}

/// Kaplan-Meier estimate `S(t) = prod_{u<=t} (1 - d_u/n_u)`.
///
/// A history censored at `u` is still at risk at `u` and leaves afterwards.
pub fn kaplan_meier(histories: &[EventHistory]) -> Result<ProductLimit> {
    let max_duration = histories
        .iter()
        .map(|h| h.duration)
        .max()
        .ok_or(Error::EmptyCalibration)?;
    let mut ended = vec![0u64; max_duration + 1];
    let mut events = vec![0u64; max_duration + 1];
    for h in histories {
        ended[h.duration] += 1;
        if h.churned {
            events[h.duration] += 1;
        }
    }
    let mut at_risk = vec![0u64; max_duration + 1];
    let mut remaining = 0u64;
    for u in (0..=max_duration).rev() {
        remaining += ended[u];
        at_risk[u] = remaining;
    }
    let mut s = 1.0;
    let survival = events
        .iter()
        .zip(&at_risk)
        .map(|(&d, &n)| {
            if d > 0 {
                s *= 1.0 - d as f64 / n as f64;
            }
            s
        })
        .collect();
    Ok(ProductLimit {
        at_risk,
        events,
        survival: SurvivalCurve(survival),
    })
}
