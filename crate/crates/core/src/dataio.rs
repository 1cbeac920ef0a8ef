//! File formats.
//!
//! CSV files have a header row, comma separators and `.` decimals; LF and
//! CRLF line endings are both accepted. Required columns must appear first,
//! in order, with exact (case-sensitive) names:
//!
//! | file        | mode      | columns                                               |
//! |-------------|-----------|-------------------------------------------------------|
//! | calibration | single    | `customer_id,tenure,churned[,covariate...]`           |
//! | calibration | competing | `customer_id,tenure,churned,cause[,covariate...]`     |
//! | scoring     | single    | `customer_id,tenure,churn_score,margin`               |
//! | scoring     | competing | `customer_id,tenure,score_v,score_inv,margin`         |
//! | projections | -         | `customer_id,alpha,ert_months,clv,truncated_at`       |
//!
//! `cause` is `V` (voluntary) or `I` (involuntary) for churned rows and empty
//! otherwise. Row numbers in errors are file line numbers, the header being
//! row 1. Projection values are written with 6 decimal places.
//!
//! Baselines and fitted odds models are versioned JSON documents.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::odds::OddsModel;
use crate::proportional::ChurnScore;
use crate::survival::{BaselineHazard, PoolingConfig, Smoothing, TenureMonth};

pub const PROJECTION_HEADER: [&str; 5] = ["customer_id", "alpha", "ert_months", "clv", "truncated_at"];
const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Single,
    Competing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    Voluntary,
    Involuntary,
}

impl Cause {
    pub fn code(self) -> &'static str {
        match self {
            Cause::Voluntary => "V",
            Cause::Involuntary => "I",
        }
    }
}

/// One customer in the calibration snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub customer_id: String,
    pub tenure: TenureMonth,
    /// Churned during the month after the snapshot.
    pub churned: bool,
    pub cause: Option<Cause>,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scores {
    Single(ChurnScore),
    Competing {
        voluntary: ChurnScore,
        involuntary: ChurnScore,
    },
}

/// A live customer to be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringRecord {
    pub customer_id: String,
    pub tenure: TenureMonth,
    pub scores: Scores,
    pub margin: f64,
}

/// One output row of the scoring command.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub customer_id: String,
    pub alpha: f64,
    pub ert_months: f64,
    pub clv: f64,
    pub truncated_at: usize,
}

fn invalid(row: usize, column: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        row,
        column: column.to_string(),
        reason: reason.into(),
    }
}

fn check_header(header: &csv::StringRecord, required: &[&str]) -> Result<()> {
    for (i, name) in required.iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    Ok(())
}

fn field<'r>(record: &'r csv::StringRecord, row: usize, index: usize, column: &str) -> Result<&'r str> {
    record.get(index).ok_or_else(|| invalid(row, column, "missing field"))
}

fn parse_tenure(s: &str, row: usize) -> Result<TenureMonth> {
    s.parse::<TenureMonth>()
        .map_err(|_| invalid(row, "tenure", format!("`{s}` is not a non-negative integer")))
}

fn parse_finite(s: &str, row: usize, column: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(invalid(row, column, format!("`{s}` is not a finite number"))),
    }
}

fn parse_score(s: &str, row: usize, column: &str) -> Result<ChurnScore> {
    let v = parse_finite(s, row, column)?;
    ChurnScore::new(v).map_err(|_| invalid(row, column, format!("{v} is outside [0, 1]")))
}

fn open_csv<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

struct RowStream<R: Read> {
    csv: csv::Reader<R>,
    record: csv::StringRecord,
    width: usize,
    seen: HashSet<String>,
}

impl<R: Read> RowStream<R> {
    fn new(reader: R, required: &[&str]) -> Result<(Self, csv::StringRecord)> {
        let mut csv = open_csv(reader);
        let header = csv.headers()?.clone();
        check_header(&header, required)?;
        let width = header.len();
        Ok((
            Self {
                csv,
                record: csv::StringRecord::new(),
                width,
                seen: HashSet::new(),
            },
            header,
        ))
    }

    /// Next raw row with its line number, checked for width and duplicate id.
    fn next_row(&mut self) -> Option<Result<usize>> {
        match self.csv.read_record(&mut self.record) {
            Ok(false) => None,
            Err(e) => Some(Err(e.into())),
            Ok(true) => {
                let row = self.record.position().map_or(0, |p| p.line() as usize);
                if self.record.len() != self.width {
                    return Some(Err(invalid(
                        row,
                        "*",
                        format!("expected {} fields, found {}", self.width, self.record.len()),
                    )));
                }
                let id = &self.record[0];
                if id.is_empty() {
                    return Some(Err(invalid(row, "customer_id", "empty id")));
                }
                if !self.seen.insert(id.to_string()) {
                    return Some(Err(Error::DuplicateCustomerId(id.to_string())));
                }
                Some(Ok(row))
            }
        }
    }
}

/// Streaming reader over a calibration CSV.
pub struct CalibrationReader<R: Read> {
    rows: RowStream<R>,
    mode: Mode,
    covariate_names: Vec<String>,
}

impl<R: Read> CalibrationReader<R> {
    pub fn new(reader: R, mode: Mode) -> Result<Self> {
        let required: &[&str] = match mode {
            Mode::Single => &["customer_id", "tenure", "churned"],
            Mode::Competing => &["customer_id", "tenure", "churned", "cause"],
        };
        let (rows, header) = RowStream::new(reader, required)?;
        let covariate_names: Vec<String> = header.iter().skip(required.len()).map(str::to_string).collect();
        for name in &covariate_names {
            if name == "cause" {
                return Err(invalid(1, "cause", "a cause column requires competing mode"));
            }
            if name.is_empty() {
                return Err(invalid(1, "*", "empty covariate column name"));
            }
        }
        Ok(Self {
            rows,
            mode,
            covariate_names,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    fn parse(&self, row: usize) -> Result<CalibrationRecord> {
        let r = &self.rows.record;
        let tenure = parse_tenure(field(r, row, 1, "tenure")?, row)?;
        let churned = match field(r, row, 2, "churned")? {
            "0" => false,
            "1" => true,
            other => return Err(invalid(row, "churned", format!("`{other}` is not 0 or 1"))),
        };
        let (cause, first_covariate) = match self.mode {
            Mode::Single => (None, 3),
            Mode::Competing => {
                let cause = match (field(r, row, 3, "cause")?, churned) {
                    ("", false) => None,
                    ("V", true) => Some(Cause::Voluntary),
                    ("I", true) => Some(Cause::Involuntary),
                    ("", true) => return Err(invalid(row, "cause", "churned row needs cause V or I")),
                    (other, true) => return Err(invalid(row, "cause", format!("`{other}` is not V or I"))),
                    (_, false) => return Err(invalid(row, "cause", "cause given for a row that did not churn")),
                };
                (cause, 4)
            }
        };
        let covariates = self
            .covariate_names
            .iter()
            .enumerate()
            .map(|(j, name)| parse_finite(&r[first_covariate + j], row, name))
            .collect::<Result<Vec<f64>>>()?;
        Ok(CalibrationRecord {
            customer_id: r[0].to_string(),
            tenure,
            churned,
            cause,
            covariates,
        })
    }
}

impl<R: Read> Iterator for CalibrationReader<R> {
    type Item = Result<CalibrationRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = self.rows.next_row()?;
        Some(row.and_then(|row| self.parse(row)))
    }
}

/// Streaming reader over a scoring CSV.
pub struct ScoringReader<R: Read> {
    rows: RowStream<R>,
    mode: Mode,
}

impl<R: Read> ScoringReader<R> {
    pub fn new(reader: R, mode: Mode) -> Result<Self> {
        let required: &[&str] = match mode {
            Mode::Single => &["customer_id", "tenure", "churn_score", "margin"],
            Mode::Competing => &["customer_id", "tenure", "score_v", "score_inv", "margin"],
        };
        let (rows, header) = RowStream::new(reader, required)?;
        if let Some(extra) = header.get(required.len()) {
            return Err(invalid(1, extra, "unexpected column"));
        }
        Ok(Self { rows, mode })
    }

    fn parse(&self, row: usize) -> Result<ScoringRecord> {
        let r = &self.rows.record;
        let tenure = parse_tenure(field(r, row, 1, "tenure")?, row)?;
        let (scores, margin_col) = match self.mode {
            Mode::Single => (Scores::Single(parse_score(&r[2], row, "churn_score")?), 3),
            Mode::Competing => {
                let voluntary = parse_score(&r[2], row, "score_v")?;
                let involuntary = parse_score(&r[3], row, "score_inv")?;
                let total = voluntary.value() + involuntary.value();
                if total > 1.0 + 1e-12 {
                    return Err(invalid(row, "score_inv", format!("score_v + score_inv = {total} exceeds 1")));
                }
                (Scores::Competing { voluntary, involuntary }, 4)
            }
        };
        Ok(ScoringRecord {
            customer_id: r[0].to_string(),
            tenure,
            scores,
            margin: parse_finite(&r[margin_col], row, "margin")?,
        })
    }
}

impl<R: Read> Iterator for ScoringReader<R> {
    type Item = Result<ScoringRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = self.rows.next_row()?;
        Some(row.and_then(|row| self.parse(row)))
    }
}

pub fn read_calibration(path: &Path, mode: Mode) -> Result<CalibrationReader<BufReader<File>>> {
    CalibrationReader::new(BufReader::new(File::open(path)?), mode)
}

pub fn read_scoring(path: &Path, mode: Mode) -> Result<ScoringReader<BufReader<File>>> {
    ScoringReader::new(BufReader::new(File::open(path)?), mode)
}

/// Writes projection rows in the fixed column order.
pub struct ProjectionWriter<W: Write> {
    out: W,
}

impl<W: Write> ProjectionWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{}", PROJECTION_HEADER.join(","))?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &ProjectionRow) -> Result<()> {
        writeln!(
            self.out,
            "{},{:.6},{:.6},{:.6},{}",
            row.customer_id, row.alpha, row.ert_months, row.clv, row.truncated_at
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_projections<'a, I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = &'a ProjectionRow>,
{
    let mut w = ProjectionWriter::new(BufWriter::new(File::create(path)?))?;
    for row in rows {
        w.write(row)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_projections<R: Read>(reader: R) -> Result<Vec<ProjectionRow>> {
    let (mut rows, _) = RowStream::new(reader, &PROJECTION_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let row = row?;
        let r = &rows.record;
        out.push(ProjectionRow {
            customer_id: r[0].to_string(),
            alpha: parse_finite(&r[1], row, "alpha")?,
            ert_months: parse_finite(&r[2], row, "ert_months")?,
            clv: parse_finite(&r[3], row, "clv")?,
            truncated_at: r[4]
                .parse()
                .map_err(|_| invalid(row, "truncated_at", "not a non-negative integer"))?,
        });
    }
    Ok(out)
}

/// Writes calibration rows in the schema [`CalibrationReader`] accepts.
/// Numbers use the shortest representation that round-trips.
pub fn write_calibration<W: Write>(out: W, mode: Mode, covariate_names: &[String], records: &[CalibrationRecord]) -> Result<W> {
    let mut out = out;
    let mut header = vec!["customer_id", "tenure", "churned"];
    if mode == Mode::Competing {
        header.push("cause");
    }
    header.extend(covariate_names.iter().map(String::as_str));
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        write!(out, "{},{},{}", r.customer_id, r.tenure, u8::from(r.churned))?;
        if mode == Mode::Competing {
            write!(out, ",{}", r.cause.map_or("", Cause::code))?;
        }
        for x in &r.covariates {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(out)
}

pub fn write_scoring<W: Write>(out: W, mode: Mode, records: &[ScoringRecord]) -> Result<W> {
    let mut out = out;
    match mode {
        Mode::Single => writeln!(out, "customer_id,tenure,churn_score,margin")?,
        Mode::Competing => writeln!(out, "customer_id,tenure,score_v,score_inv,margin")?,
    }
    for r in records {
        match r.scores {
            Scores::Single(s) => writeln!(out, "{},{},{},{}", r.customer_id, r.tenure, s.value(), r.margin)?,
            Scores::Competing { voluntary, involuntary } => writeln!(
                out,
                "{},{},{},{},{}",
                r.customer_id,
                r.tenure,
                voluntary.value(),
                involuntary.value(),
                r.margin
            )?,
        }
    }
    out.flush()?;
    Ok(out)
}

/// JSON form of a [`BaselineHazard`]. Arrays are indexed from tenure 0;
/// tenures without exposure have a `null` hazard. `min_events` carries the
/// pooling rule from the estimating step to the scoring step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineDocument {
    pub version: u32,
    pub hazards: Vec<Option<f64>>,
    pub exposures: Vec<u64>,
    pub events: Vec<u64>,
    pub tail_start: Option<TenureMonth>,
    pub tail_rate: Option<f64>,
    pub smoothing: Smoothing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_events: Option<u64>,
}

impl BaselineDocument {
    pub fn new(baseline: &BaselineHazard, pooling: PoolingConfig) -> Self {
        Self {
            version: DOCUMENT_VERSION,
            hazards: baseline.hazards().to_vec(),
            exposures: baseline.exposures().to_vec(),
            events: baseline.events().to_vec(),
            tail_start: baseline.tail_start(),
            tail_rate: baseline.tail_rate(),
            smoothing: baseline.smoothing(),
            min_events: Some(pooling.min_events),
        }
    }

    /// Rebuild the baseline, checking the stored hazards and tail rate
    /// against the counts.
    pub fn into_baseline(self) -> Result<(BaselineHazard, PoolingConfig)> {
        if self.version != DOCUMENT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        let pooling = self
            .min_events
            .map_or_else(PoolingConfig::default, |min_events| PoolingConfig { min_events });
        let bad = |msg: String| Error::InvalidBaseline(msg);
        let tail = match (self.tail_start, self.tail_rate) {
            (Some(s), Some(r)) => Some((s, r)),
            (None, None) => None,
            _ => return Err(bad("tail_start and tail_rate must both be set or both be null".into())),
        };
        if self.exposures.is_empty() && self.events.is_empty() {
            let rates = self
                .hazards
                .iter()
                .enumerate()
                .map(|(t, h)| h.ok_or_else(|| bad(format!("rate table has no hazard at tenure {t}"))))
                .collect::<Result<Vec<f64>>>()?;
            return Ok((BaselineHazard::from_rates(rates, tail)?, pooling));
        }
        if self.exposures.len() != self.hazards.len() {
            return Err(bad(format!(
                "hazards has {} entries but exposures has {}",
                self.hazards.len(),
                self.exposures.len()
            )));
        }
        let mut baseline = BaselineHazard::from_counts(self.events, self.exposures, self.smoothing)?;
        for (t, (stored, derived)) in self.hazards.iter().zip(baseline.hazards()).enumerate() {
            let consistent = match (stored, derived) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            };
            if !consistent {
                return Err(bad(format!("hazard at tenure {t} does not match its counts")));
            }
        }
        if let Some((start, rate)) = tail {
            baseline = crate::survival::extrapolate_tail(&baseline, start)?;
            let derived = baseline.tail_rate().unwrap_or(f64::NAN);
            if (derived - rate).abs() > 1e-12 {
                return Err(bad(format!("tail_rate {rate} does not match the pooled tail counts ({derived})")));
            }
        }
        Ok((baseline, pooling))
    }
}

pub fn baseline_to_json(baseline: &BaselineHazard, pooling: PoolingConfig) -> String {
    serde_json::to_string(&BaselineDocument::new(baseline, pooling)).expect("baseline document serializes")
}

pub fn baseline_from_json(text: &str) -> Result<(BaselineHazard, PoolingConfig)> {
    serde_json::from_str::<BaselineDocument>(text)?.into_baseline()
}

pub fn write_baseline(path: &Path, baseline: &BaselineHazard, pooling: PoolingConfig) -> Result<()> {
    let mut text = baseline_to_json(baseline, pooling);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_baseline(path: &Path) -> Result<(BaselineHazard, PoolingConfig)> {
    baseline_from_json(&std::fs::read_to_string(path)?)
}

/// SHA-256 of the canonical baseline document, hex encoded.
pub fn baseline_digest(baseline: &BaselineHazard, pooling: PoolingConfig) -> String {
    hex::encode(Sha256::digest(baseline_to_json(baseline, pooling).as_bytes()))
}

/// JSON form of a fitted [`OddsModel`]. The likelihood trace is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OddsModelDocument {
    pub version: u32,
    pub beta: Vec<f64>,
    pub ridge: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub baseline_sha: String,
}

impl From<&OddsModel> for OddsModelDocument {
    fn from(m: &OddsModel) -> Self {
        Self {
            version: DOCUMENT_VERSION,
            beta: m.beta.clone(),
            ridge: m.ridge,
            log_likelihood: m.log_likelihood,
            iterations: m.iterations,
            converged: m.converged,
            baseline_sha: m.baseline_sha.clone(),
        }
    }
}

impl OddsModelDocument {
    pub fn into_model(self) -> Result<OddsModel> {
        if self.version != DOCUMENT_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        Ok(OddsModel {
            beta: self.beta,
            ridge: self.ridge,
            log_likelihood: self.log_likelihood,
            iterations: self.iterations,
            converged: self.converged,
            baseline_sha: self.baseline_sha,
            trace: Vec::new(),
        })
    }
}

pub fn write_odds_model(path: &Path, model: &OddsModel) -> Result<()> {
    let mut text = serde_json::to_string(&OddsModelDocument::from(model))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_odds_model(path: &Path) -> Result<OddsModel> {
    serde_json::from_str::<OddsModelDocument>(&std::fs::read_to_string(path)?)?.into_model()
}
