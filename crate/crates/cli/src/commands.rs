use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clv_core::dataio::{
    read_baseline, read_calibration, read_scoring, write_baseline, write_odds_model, Cause, Mode, ProjectionRow,
    ProjectionWriter, ScoringRecord, Scores,
};
use clv_core::simulate::{generate_cohort, write_outputs, SimSpec};
use clv_core::survival::{
    detect_tail_start, extrapolate_tail, TenureCounts, DEFAULT_TAIL_REL_TOL, DEFAULT_TAIL_WINDOW,
};
use clv_core::valuation::{clv, DiscountSpec, MarginSpec};
use clv_core::{
    fit_odds_model, Alpha, BaselineHazard, CauseBaselines, CompetingProjector, OddsFitConfig, PersonPeriodRow,
    PoolingConfig, ProjectionConfig, Projector, Smoothing,
};
use log::{info, warn};
use rayon::prelude::*;

use crate::args::{required, BaselineArgs, CurveArgs, FitOddsArgs, ScoreArgs, SimulateArgs};
use crate::error::{CliError, WithPath};

/// Scoring rows buffered per parallel batch.
const SCORE_CHUNK: usize = 16_384;

fn usage(e: clv_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).at(path)?))
}

/// `dir/stem_suffix.ext` next to `path`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

fn resolve_tail(total: &BaselineHazard, explicit: Option<usize>, auto_requested: bool) -> Result<usize, CliError> {
    if let Some(t) = explicit {
        return Ok(t);
    }
    match detect_tail_start(total, DEFAULT_TAIL_WINDOW, DEFAULT_TAIL_REL_TOL) {
        Ok(t) => {
            info!("detected tail start at tenure {t}");
            Ok(t)
        }
        Err(clv_core::Error::InsufficientData { needed, found }) if !auto_requested => {
            let t = total.max_tenure();
            warn!("only {found} observed tenures (tail detection needs {needed}); using the last tenure {t} as tail start");
            Ok(t)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn baseline(args: BaselineArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let calibration = required(args.calibration, "calibration")?;
    let out = required(args.out, "out")?;
    let smoothing: Smoothing = args.smoothing.map(Into::into).unwrap_or_default();
    let pooling = args.min_events.map_or_else(PoolingConfig::default, |min_events| PoolingConfig { min_events });
    let mode = if args.competing { Mode::Competing } else { Mode::Single };

    // only per-tenure counts are kept, never the records
    let mut total = TenureCounts::new();
    let mut voluntary = TenureCounts::new();
    let mut involuntary = TenureCounts::new();
    let mut rows = 0usize;
    for record in read_calibration(&calibration, mode).at(&calibration)? {
        let r = record.at(&calibration)?;
        total.add(r.tenure, r.churned);
        if args.competing {
            voluntary.add(r.tenure, r.cause == Some(Cause::Voluntary));
            involuntary.add(r.tenure, r.cause == Some(Cause::Involuntary));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::File {
            path: calibration,
            source: clv_core::Error::EmptyCalibration,
        });
    }
    info!("read {rows} calibration rows");

    let total = total.into_baseline(smoothing)?;
    let tail_start = resolve_tail(&total, args.tail_start, args.auto_tail)?;
    if args.competing {
        let causes = CauseBaselines::new(voluntary.into_baseline(smoothing)?, involuntary.into_baseline(smoothing)?)?
            .with_tail(tail_start)?;
        for (suffix, b) in [("v", &causes.voluntary), ("inv", &causes.involuntary)] {
            let path = suffixed(&out, suffix);
            write_baseline(&path, b, pooling).at(&path)?;
            info!("wrote {}", path.display());
        }
    } else {
        let b = extrapolate_tail(&total, tail_start)?;
        write_baseline(&out, &b, pooling).at(&out)?;
        info!("wrote {} (tail rate {:?})", out.display(), b.tail_rate());
    }
    Ok(())
}

fn discount(args: &ScoreArgs) -> Result<DiscountSpec, CliError> {
    match (args.discount_annual, args.discount_monthly) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "--discount-annual and --discount-monthly are mutually exclusive".into(),
        )),
        (Some(r), None) => DiscountSpec::annual(r).map_err(usage),
        (None, Some(r)) => DiscountSpec::monthly(r).map_err(usage),
        (None, None) => Ok(DiscountSpec::NONE),
    }
}

enum Scorer {
    Single(Projector),
    Competing(CompetingProjector),
}

impl Scorer {
    fn row(&self, r: &ScoringRecord, discount: DiscountSpec) -> Result<ProjectionRow, CliError> {
        let at_customer = |source| CliError::Customer {
            id: r.customer_id.clone(),
            source,
        };
        let projection = match (self, r.scores) {
            (Scorer::Single(p), Scores::Single(s)) => p.project(s, r.tenure),
            (Scorer::Competing(p), Scores::Competing { voluntary, involuntary }) => {
                p.project(voluntary, involuntary, r.tenure).map(|(proj, _)| proj)
            }
            _ => unreachable!("reader mode matches scorer mode"),
        }
        .map_err(at_customer)?;
        let value = clv(&projection.survival_path, &MarginSpec::Constant(r.margin), discount).map_err(at_customer)?;
        Ok(ProjectionRow {
            customer_id: r.customer_id.clone(),
            alpha: projection.alpha.value(),
            ert_months: projection.ert_months,
            clv: value,
            truncated_at: projection.truncated_at,
        })
    }
}

pub fn score(args: ScoreArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let discount = discount(&args)?;
    let mut config = ProjectionConfig::default();
    if let Some(eps) = args.eps {
        config.eps = eps;
    }
    if let Some(h) = args.max_horizon {
        config.max_horizon = h;
    }
    config.validate().map_err(usage)?;
    let baseline_path = required(args.baseline, "baseline")?;
    let scoring = required(args.scoring, "scoring")?;
    let out = required(args.out, "out")?;

    let (baseline, pooling) = read_baseline(&baseline_path).at(&baseline_path)?;
    let (scorer, mode) = if args.competing {
        let inv_path = required(args.baseline_inv, "baseline-inv")?;
        let (inv, inv_pooling) = read_baseline(&inv_path).at(&inv_path)?;
        if inv_pooling != pooling {
            return Err(CliError::File {
                path: inv_path,
                source: clv_core::Error::InvalidBaseline("pooling differs from the voluntary baseline".into()),
            });
        }
        let causes = CauseBaselines::new(baseline, inv)?;
        (Scorer::Competing(CompetingProjector::new(&causes, pooling, config)?), Mode::Competing)
    } else {
        if args.baseline_inv.is_some() {
            return Err(CliError::Usage("--baseline-inv requires --competing".into()));
        }
        (Scorer::Single(Projector::new(&baseline, pooling, config)?), Mode::Single)
    };

    let mut reader = read_scoring(&scoring, mode).at(&scoring)?;
    let mut writer = ProjectionWriter::new(create(&out)?).at(&out)?;
    let mut chunk: Vec<ScoringRecord> = Vec::with_capacity(SCORE_CHUNK);
    let mut scored = 0usize;
    loop {
        chunk.clear();
        for record in reader.by_ref().take(SCORE_CHUNK) {
            chunk.push(record.at(&scoring)?);
        }
        if chunk.is_empty() {
            break;
        }
        let rows = chunk
            .par_iter()
            .map(|r| scorer.row(r, discount))
            .collect::<Result<Vec<_>, _>>()?;
        for row in &rows {
            writer.write(row).at(&out)?;
        }
        scored += rows.len();
    }
    writer.finish().at(&out)?;
    info!("scored {scored} customers into {}", out.display());
    Ok(())
}

pub fn curve(args: CurveArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let baseline_path = required(args.baseline, "baseline")?;
    let alpha = Alpha::new(required(args.alpha, "alpha")?).map_err(usage)?;
    let t0 = required(args.t0, "t0")?;
    let horizon = required(args.horizon, "horizon")?;
    let (baseline, pooling) = read_baseline(&baseline_path).at(&baseline_path)?;
    let lookup = baseline.lookup(pooling);

    let mut text = String::from("tenure,baseline_hazard,scaled_hazard,survival\n");
    let mut survival = 1.0;
    for t in t0..t0 + horizon {
        let h0 = lookup.hazard(t);
        let scaled = alpha.scale(h0).min(1.0);
        survival *= 1.0 - scaled;
        text.push_str(&format!("{t},{h0},{scaled},{survival}\n"));
    }
    match args.out {
        Some(path) => {
            let mut w = create(&path)?;
            w.write_all(text.as_bytes()).at(&path)?;
            w.flush().at(&path)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes()).map_err(clv_core::Error::from)?;
        }
    }
    Ok(())
}

pub fn fit_odds(args: FitOddsArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let calibration = required(args.calibration, "calibration")?;
    let baseline_path = required(args.baseline, "baseline")?;
    let out = required(args.out, "out")?;
    let (baseline, pooling) = read_baseline(&baseline_path).at(&baseline_path)?;
    let defaults = OddsFitConfig::default();
    let config = OddsFitConfig {
        ridge: args.ridge.unwrap_or(defaults.ridge),
        tol: args.tol.unwrap_or(defaults.tol),
        max_iter: args.max_iter.unwrap_or(defaults.max_iter),
        pooling,
    };

    let reader = read_calibration(&calibration, Mode::Single).at(&calibration)?;
    if reader.covariate_names().is_empty() {
        return Err(CliError::File {
            path: calibration,
            source: clv_core::Error::MissingColumn("covariate columns after `churned`".into()),
        });
    }
    let names = reader.covariate_names().to_vec();
    let rows = reader
        .map(|r| {
            r.map(|r| PersonPeriodRow {
                tenure: r.tenure,
                outcome: r.churned,
                covariates: r.covariates,
            })
        })
        .collect::<clv_core::Result<Vec<_>>>()
        .at(&calibration)?;
    let model = fit_odds_model(&rows, &baseline, &config)?;
    if !model.converged {
        warn!("fit stopped after {} iterations without converging", model.iterations);
    }
    for (name, b) in names.iter().zip(&model.beta) {
        info!("beta[{name}] = {b}");
    }
    write_odds_model(&out, &model).at(&out)?;
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let spec_path = required(args.spec, "spec")?;
    let out_dir = required(args.out_dir, "out-dir")?;
    let text = std::fs::read_to_string(&spec_path).at(&spec_path)?;
    let mut spec: SimSpec = serde_json::from_str(&text)
        .map_err(clv_core::Error::from)
        .at(&spec_path)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let output = generate_cohort(&spec).at(&spec_path)?;
    if output.clipped > 0 {
        warn!("{} hazards exceeded 1 and were clipped", output.clipped);
    }
    if output.unreachable > 0 {
        warn!("{} customers could not reach their snapshot tenure and were dropped", output.unreachable);
    }
    write_outputs(&out_dir, &spec, &output).at(&out_dir)?;
    info!(
        "wrote {} calibration and {} scoring rows to {}",
        output.calibration.len(),
        output.scoring.len(),
        out_dir.display()
    );
    Ok(())
}
