//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::fmt::Write as _;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clv_core::dataio::{read_baseline, read_odds_model, write_baseline};
use clv_core::odds::{OddsDesign, OddsModel, OddsPredictor};
use clv_core::simulate::{generate_odds_cohort, OddsSimSpec};
use clv_core::survival::{hazard_to_survival, kaplan_meier, survival_to_hazard, EventHistory};
use clv_core::valuation::{clv, clv_constant, DiscountSpec, MarginSpec};
use clv_core::{
    estimate_hazard_by_tenure, Alpha, BaselineHazard, CauseBaselines, CompetingProjector, PoolingConfig,
    ProjectionConfig, Projector, Smoothing,
};
use common::{clv_ok, column, p, write_spec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/figure_baseline.json")
}

fn simulate(dir: &Path, spec: &str) -> PathBuf {
    let spec_path = dir.join("spec.json");
    write_spec(&spec_path, spec);
    let out = dir.join("sim");
    clv_ok(&["simulate", "--spec", p(&spec_path), "--out-dir", p(&out)]);
    out
}

fn geometric_oracle() -> Outcome {
    let dir = TempDir::new().unwrap();
    let sim = simulate(
        dir.path(),
        r#"{"baseline_shape":{"kind":"flat","h":0.1},"alpha_dist":{"kind":"fixed","a":1.0},
            "n_customers":100000,"max_tenure":36,"seed":2024}"#,
    );
    let base = dir.path().join("base.json");
    let proj = dir.path().join("proj.csv");
    clv_ok(&["baseline", "--calibration", p(&sim.join("calibration.csv")), "--out", p(&base)]);
    clv_ok(&["score", "--baseline", p(&base), "--scoring", p(&sim.join("scoring.csv")), "--out", p(&proj)]);
    let est = column(&proj, "ert_months");
    let truth = column(&sim.join("truth.csv"), "true_ert");
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let mae = est.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / est.len() as f64;
    outcome(
        est.len() == truth.len() && (mean - 9.0).abs() <= 0.1 && mae < 0.15,
        format!("{} customers, mean ert {mean:.4} (9.0 ± 0.1), mae vs truth {mae:.4} (< 0.15)", est.len()),
    )
}

fn figure_reproduction() -> Outcome {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("curve.csv");
    clv_ok(&[
        "curve", "--baseline", p(&fixture()), "--alpha", "1.3", "--t0", "18", "--horizon", "60", "--out", p(&out),
    ]);
    let (baseline, pooling) = read_baseline(&fixture()).unwrap();
    let tenure = column(&out, "tenure");
    let h0 = column(&out, "baseline_hazard");
    let scaled = column(&out, "scaled_hazard");
    let mut worst = 0.0f64;
    let mut clipped = 0;
    let mut baseline_matches = true;
    for ((t, b), s) in tenure.iter().zip(&h0).zip(&scaled) {
        baseline_matches &= *b == baseline.hazard_at(*t as usize, pooling);
        let expected = (1.3 * b).min(1.0);
        if expected == 1.0 {
            clipped += 1;
        }
        worst = worst.max((s - expected).abs());
    }
    outcome(
        tenure.len() == 60 && baseline_matches && worst <= 1e-12 && clipped > 0,
        format!("60 rows from t0 = 18, max |scaled - 1.3 h0| = {worst:.1e}, {clipped} clipped at 1"),
    )
}

fn estimator_equivalence() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let histories: Vec<EventHistory> = (0..5000)
        .map(|_| EventHistory {
            duration: rng.random_range(0..40),
            churned: rng.random_bool(0.7),
        })
        .collect();
    // every customer appears at each tenure it was at risk for
    let mut csv = String::from("customer_id,tenure,churned\n");
    let mut records = Vec::new();
    for (i, h) in histories.iter().enumerate() {
        for u in 0..=h.duration {
            let churned = h.churned && u == h.duration;
            writeln!(csv, "c{i}_{u},{u},{}", u8::from(churned)).unwrap();
            records.push(clv_core::dataio::CalibrationRecord {
                customer_id: format!("c{i}_{u}"),
                tenure: u,
                churned,
                cause: None,
                covariates: Vec::new(),
            });
        }
    }
    let km = kaplan_meier(&histories).unwrap();
    let km_hazards = km.hazards();
    let snapshot = estimate_hazard_by_tenure(&records, Smoothing::None).unwrap();

    let cal = dir.path().join("cal.csv");
    fs::write(&cal, csv).unwrap();
    let base = dir.path().join("base.json");
    clv_ok(&["baseline", "--calibration", p(&cal), "--out", p(&base), "--tail-start", "39"]);
    let (from_cli, _) = read_baseline(&base).unwrap();

    let mut compared = 0;
    let mut mismatches = 0;
    for (t, &n) in km.at_risk.iter().enumerate() {
        if n > 0 {
            compared += 1;
            let km_h = Some(km_hazards[t]);
            if snapshot.hazards()[t] != km_h || from_cli.hazards()[t] != km_h || snapshot.exposures()[t] != n {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && compared > 0,
        format!("{compared} tenures compared bit-for-bit (library and CLI), {mismatches} mismatches"),
    )
}

fn round_trip_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..120);
        let mut s = 1.0;
        let curve: Vec<f64> = (0..len)
            .map(|_| {
                // occasional exact zeros and ones exercise the edges
                let f = match rng.random_range(0..20) {
                    0 => 1.0,
                    1 => 0.0,
                    _ => rng.random::<f64>(),
                };
                s *= f;
                s
            })
            .collect();
        let h = survival_to_hazard(&curve).unwrap();
        let back = hazard_to_survival(&h).unwrap();
        for (a, b) in curve.iter().zip(back.as_slice()) {
            worst = worst.max((a - b).abs());
        }
        let h_back = survival_to_hazard(back.as_slice()).unwrap();
        let s2 = hazard_to_survival(&h_back).unwrap();
        for (a, b) in back.as_slice().iter().zip(s2.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-12, format!("1000 random curves, max element error {worst:.1e} (<= 1e-12)"))
}

fn odds_recovery() -> Outcome {
    let dir = TempDir::new().unwrap();
    let spec = OddsSimSpec {
        baseline: vec![0.12, 0.1, 0.09, 0.08, 0.07, 0.065, 0.06, 0.055, 0.05],
        beta: vec![0.7, -0.3],
        n_customers: 10_000,
        max_entry_tenure: 24,
        follow_up: 12,
        seed: 2,
    };
    let mut cohort = generate_odds_cohort(&spec).unwrap();
    cohort.rows.truncate(50_000);
    let mut csv = String::from("customer_id,tenure,churned,x1,x2\n");
    for (i, r) in cohort.rows.iter().enumerate() {
        writeln!(csv, "r{i},{},{},{},{}", r.tenure, u8::from(r.outcome), r.covariates[0], r.covariates[1]).unwrap();
    }
    let cal = dir.path().join("person_periods.csv");
    fs::write(&cal, csv).unwrap();
    let truth = spec.true_baseline().unwrap();
    let base = dir.path().join("true_baseline.json");
    write_baseline(&base, &truth, PoolingConfig::default()).unwrap();
    let model_path = dir.path().join("model.json");
    clv_ok(&[
        "fit-odds", "--calibration", p(&cal), "--baseline", p(&base), "--out", p(&model_path), "--ridge", "0",
    ]);
    let model = read_odds_model(&model_path).unwrap();
    let recovered = model.beta.iter().zip(&spec.beta).all(|(b, t)| (b - t).abs() <= 0.05);

    let design = OddsDesign::new(&cohort.rows, &truth, PoolingConfig::default()).unwrap();
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let beta: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = design.score(&beta, 0.0);
        for k in 0..2 {
            let step = 1e-5 * beta[k].abs().max(1.0);
            let (mut up, mut down) = (beta.clone(), beta.clone());
            up[k] += step;
            down[k] -= step;
            let fd = (design.log_likelihood(&up, 0.0) - design.log_likelihood(&down, 0.0)) / (2.0 * step);
            worst = worst.max((g[k] - fd).abs() / g[k].abs().max(1.0));
        }
    }
    outcome(
        recovered && model.converged && worst <= 1e-6,
        format!(
            "{} rows, beta = ({:.4}, {:.4}) vs (0.7, -0.3) ± 0.05; gradient vs finite differences max rel {worst:.1e}",
            cohort.rows.len(),
            model.beta[0],
            model.beta[1]
        ),
    )
}

fn reduction_checks() -> Outcome {
    let dir = TempDir::new().unwrap();
    let sim = simulate(
        dir.path(),
        r#"{"baseline_shape":{"kind":"decaying","a":0.15,"b":0.05},"alpha_dist":{"kind":"fixed","a":1.0},
            "n_customers":20000,"max_tenure":48,"seed":6}"#,
    );
    let base_path = dir.path().join("base.json");
    clv_ok(&["baseline", "--calibration", p(&sim.join("calibration.csv")), "--out", p(&base_path)]);
    let (baseline, pooling) = read_baseline(&base_path).unwrap();

    // beta = 0 returns the smoothed baseline
    let zero = OddsModel {
        beta: vec![0.0, 0.0],
        ridge: 0.0,
        log_likelihood: 0.0,
        iterations: 0,
        converged: true,
        baseline_sha: String::new(),
        trace: Vec::new(),
    };
    let smoothed = baseline.with_smoothing(Smoothing::Jeffreys);
    let predictor = OddsPredictor::new(&zero, &baseline, pooling);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let odds_exact = (0..300).all(|t| {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        predictor.predict(&x, t).unwrap() == smoothed.hazard_at(t, pooling)
    });

    // alpha = 1 continues the baseline
    let cfg = ProjectionConfig::default();
    let projector = Projector::new(&baseline, pooling, cfg).unwrap();
    let mut continuation_exact = true;
    let mut worst_clv = 0.0f64;
    for t0 in 0..60 {
        let proj = projector.project_alpha(Alpha::ONE, t0);
        continuation_exact &= proj
            .hazard_path
            .iter()
            .enumerate()
            .all(|(j, h)| *h == baseline.hazard_at(t0 + j, pooling));
        for m in [1.0, 17.25, 250.0] {
            let value = clv(&proj.survival_path, &MarginSpec::Constant(m), DiscountSpec::NONE).unwrap();
            let reference = clv_constant(proj.ert_months, m);
            worst_clv = worst_clv.max((value - reference).abs() / reference.abs());
        }
    }
    outcome(
        odds_exact && continuation_exact && worst_clv <= 1e-9,
        format!(
            "beta = 0 exact: {odds_exact}; alpha = 1 continuation exact: {continuation_exact}; r = 0 clv vs M x ert max rel {worst_clv:.1e}"
        ),
    )
}

fn clipping() -> Outcome {
    let baseline = BaselineHazard::from_rates(vec![0.05, 0.1, 0.3, 0.1, 0.05], Some((5, 0.05))).unwrap();
    let projector = Projector::new(&baseline, PoolingConfig::OFF, ProjectionConfig::default()).unwrap();
    let proj = projector.project_alpha(Alpha::new(5.0).unwrap(), 0);
    let path_ok = proj.hazard_path.len() == 3
        && proj.hazard_path[0] == 0.25
        && proj.hazard_path[1] == 0.5
        && proj.hazard_path[2] == 1.0;
    let s = proj.survival_path.as_slice();
    let survival_ok = s[2] == 0.0 && s[2..].iter().all(|&v| v == 0.0);
    // later tenures through the CLI curve stay at zero survival
    let dir = TempDir::new().unwrap();
    let base = dir.path().join("b.json");
    write_baseline(&base, &baseline, PoolingConfig::OFF).unwrap();
    let out = dir.path().join("curve.csv");
    clv_ok(&["curve", "--baseline", p(&base), "--alpha", "5", "--t0", "0", "--horizon", "12", "--out", p(&out)]);
    let scaled = column(&out, "scaled_hazard");
    let survival = column(&out, "survival");
    let cli_ok = scaled[2] == 1.0 && survival[2..].iter().all(|&v| v == 0.0);
    outcome(
        path_ok && survival_ok && cli_ok,
        format!("alpha 5 on h0 = 0.3: path {:?}, survival {:?}", proj.hazard_path, s),
    )
}

fn competing_additivity() -> Outcome {
    let dir = TempDir::new().unwrap();
    // few involuntary churners, so several sub-hazard bins need pooling
    let sim = simulate(
        dir.path(),
        r#"{"baseline_shape":{"kind":"decaying","a":0.12,"b":0.05},"alpha_dist":{"kind":"lognormal","mu":0.0,"sigma":0.4},
            "n_customers":8000,"max_tenure":40,"seed":8,"competing":0.93}"#,
    );
    let cal = sim.join("calibration.csv");
    // the same snapshot without the cause column
    let single = dir.path().join("single.csv");
    let stripped: String = fs::read_to_string(&cal)
        .unwrap()
        .lines()
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            format!("{},{},{}\n", f[0], f[1], f[2])
        })
        .collect();
    fs::write(&single, stripped).unwrap();
    let total_path = dir.path().join("total.json");
    let cause_path = dir.path().join("cause.json");
    clv_ok(&["baseline", "--calibration", p(&single), "--out", p(&total_path)]);
    clv_ok(&["baseline", "--competing", "--calibration", p(&cal), "--out", p(&cause_path)]);
    let (total, pooling) = read_baseline(&total_path).unwrap();
    let (voluntary, _) = read_baseline(&dir.path().join("cause_v.json")).unwrap();
    let (involuntary, _) = read_baseline(&dir.path().join("cause_inv.json")).unwrap();
    let pooled_bins = involuntary.events().iter().filter(|&&e| e < pooling.min_events).count();
    let causes = CauseBaselines::new(voluntary, involuntary).unwrap();

    let cfg = ProjectionConfig::default();
    let single_projector = Projector::new(&total, pooling, cfg).unwrap();
    let competing_projector = CompetingProjector::new(&causes, pooling, cfg).unwrap();
    let mut compared = 0;
    let mut mismatches = 0;
    for t0 in 0..=total.max_tenure() + 12 {
        let a = single_projector.project_alpha(Alpha::ONE, t0);
        let b = competing_projector.project_alphas(Alpha::ONE, Alpha::ONE, t0);
        compared += a.hazard_path.len();
        if a.hazard_path != b.hazard_path || a.ert_months != b.ert_months {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0 && pooled_bins > 0,
        format!(
            "{compared} projected months from every start tenure, {mismatches} starts differ; {pooled_bins} involuntary bins below {} events",
            pooling.min_events
        ),
    )
}

fn throughput() -> Outcome {
    let dir = TempDir::new().unwrap();
    let scoring = dir.path().join("scoring.csv");
    let mut csv = String::from("customer_id,tenure,churn_score,margin\n");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100_000 {
        let tenure = rng.random_range(0..60);
        // low scores keep many projections running to the horizon cap
        let score = rng.random_range(0.00001..0.2);
        writeln!(csv, "c{i},{tenure},{score},{}", rng.random_range(5.0..50.0)).unwrap();
    }
    fs::write(&scoring, csv).unwrap();
    let out = dir.path().join("proj.csv");
    let start = Instant::now();
    clv_ok(&[
        "score",
        "--baseline",
        p(&fixture()),
        "--scoring",
        p(&scoring),
        "--out",
        p(&out),
        "--max-horizon",
        "600",
        "--discount-annual",
        "0.08",
    ]);
    let elapsed = start.elapsed().as_secs_f64();
    let capped = column(&out, "truncated_at").iter().filter(|&&t| t == 599.0).count();
    outcome(
        elapsed < 10.0,
        format!("100000 customers scored in {elapsed:.2} s (< 10 s), {capped} hit the 600-month cap"),
    )
}

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let spec = r#"{"baseline_shape":{"kind":"step","h1":0.1,"h2":0.04,"change_t":12},
        "alpha_dist":{"kind":"lognormal","mu":0.0,"sigma":0.5},"n_customers":50000,"max_tenure":36,
        "competing":0.7,"score_noise":0.1}"#;
    let spec_path = dir.path().join("spec.json");
    write_spec(&spec_path, spec);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    clv_ok(&["simulate", "--spec", p(&spec_path), "--out-dir", p(&a), "--seed", "99"]);
    clv_ok(&["--threads", "1", "simulate", "--spec", p(&spec_path), "--out-dir", p(&b), "--seed", "99"]);
    let files = ["calibration.csv", "scoring.csv", "truth.csv"];
    let sim_same = files.iter().all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap());

    let base = dir.path().join("base.json");
    clv_ok(&["baseline", "--competing", "--calibration", p(&a.join("calibration.csv")), "--out", p(&base)]);
    let score = |threads: &str, out: &Path| {
        clv_ok(&[
            "--threads",
            threads,
            "score",
            "--competing",
            "--baseline",
            p(&dir.path().join("base_v.json")),
            "--baseline-inv",
            p(&dir.path().join("base_inv.json")),
            "--scoring",
            p(&a.join("scoring.csv")),
            "--out",
            p(out),
        ]);
    };
    let serial = dir.path().join("serial.csv");
    let parallel = dir.path().join("parallel.csv");
    score("1", &serial);
    score("8", &parallel);
    let score_same = fs::read(&serial).unwrap() == fs::read(&parallel).unwrap();
    outcome(
        sim_same && score_same,
        format!("simulate seed 99 twice identical: {sim_same}; score 1 vs 8 threads identical: {score_same}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("geometric oracle", geometric_oracle),
        ("figure reproduction", figure_reproduction),
        ("estimator equivalence", estimator_equivalence),
        ("round-trip identity", round_trip_identity),
        ("odds-model recovery", odds_recovery),
        ("reduction checks", reduction_checks),
        ("clipping", clipping),
        ("competing-risks additivity", competing_additivity),
        ("throughput", throughput),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check));
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {}  {detail}  [{:.1} s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
