//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcr_core::check::{equivalence_sweep, CheckConfig, CheckReport};
use rcr_core::criteria::{self, CriterionKind};
use rcr_core::model::{self, ApproxDesign, ExactDesign, ModelParams};
use rcr_core::sim::{self, SimulationSpec};

const ENDPOINT_TOL: f64 = 0.005;
const ENDPOINT_BUDGET: Duration = Duration::from_secs(1);
const Q1_W_TOL: f64 = 1e-6;
const Q1_EFF_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-10;
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const DET_OFFSET_SPREAD: f64 = 1e-8;
const MC_REPLICATIONS: usize = 100_000;
const MC_Z: f64 = 4.0;
const MC_BUDGET: Duration = Duration::from_secs(60);
const CLOSED_FORM_TOL: f64 = 1e-7;
const STATIONARITY_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const DRAWS: usize = 50;
const OPT_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn figure_params(q: f64) -> ModelParams {
    let u = 0.999 / (1.0 - 0.999);
    ModelParams::new(1.0, 1.0, u, u / q, 5, 60).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, equal_sigma: bool) -> ModelParams {
    let s1 = rng.random_range(0.2..5.0);
    let s2 = if equal_sigma { s1 } else { rng.random_range(0.2..5.0) };
    ModelParams::new(
        s1,
        s2,
        rng.random_range(0.1..10.0),
        rng.random_range(0.1..10.0),
        rng.random_range(1..=10),
        rng.random_range(2..=100),
    )
    .unwrap()
}

fn within(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol
}

fn endpoints() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (q, kind, expected) in [
        (3.0, CriterionKind::PredictionA, 0.910),
        (3.0, CriterionKind::PredictionD, 0.985),
        (0.3, CriterionKind::PredictionA, 0.083),
        (0.3, CriterionKind::PredictionD, 0.014),
    ] {
        let w = criteria::minimize_criterion(kind, &figure_params(q), OPT_TOL)
            .unwrap()
            .w_star;
        pass &= within(w, expected, ENDPOINT_TOL);
        detail.push(format!("q={q} {kind}: {w:.5}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < ENDPOINT_BUDGET;
    Outcome {
        pass,
        detail: format!("{} ({elapsed:.2?})", detail.join(", ")),
    }
}

fn efficiency_endpoints() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let balanced = ApproxDesign::new(0.5).unwrap();
    for (q, kind, expected) in [
        (3.0, CriterionKind::PredictionA, 0.655),
        (3.0, CriterionKind::PredictionD, 0.615),
        (0.3, CriterionKind::PredictionA, 0.618),
        (0.3, CriterionKind::PredictionD, 0.585),
    ] {
        let eff = criteria::efficiency(kind, balanced, &figure_params(q)).unwrap();
        pass &= within(eff, expected, ENDPOINT_TOL);
        detail.push(format!("q={q} {kind}: {eff:.5}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < ENDPOINT_BUDGET;
    Outcome {
        pass,
        detail: format!("{} ({elapsed:.2?})", detail.join(", ")),
    }
}

fn equal_dispersion_identity() -> Outcome {
    let balanced = ApproxDesign::new(0.5).unwrap();
    let (mut w_dev, mut eff_dev) = (0.0f64, 0.0f64);
    for u in [0.01, 0.1, 1.0, 10.0, 100.0] {
        let p = ModelParams::new(1.0, 1.0, u, u, 5, 60).unwrap();
        for kind in [CriterionKind::PredictionA, CriterionKind::PredictionD] {
            let w = criteria::minimize_criterion(kind, &p, OPT_TOL).unwrap().w_star;
            w_dev = w_dev.max((w - 0.5).abs());
            eff_dev = eff_dev.max((criteria::efficiency(kind, balanced, &p).unwrap() - 1.0).abs());
        }
    }
    Outcome {
        pass: w_dev <= Q1_W_TOL && eff_dev <= Q1_EFF_TOL,
        detail: format!("max |w* - 0.5| = {w_dev:.2e}, max |eff - 1| = {eff_dev:.2e}"),
    }
}

fn oracle_equivalence(report: &CheckReport, elapsed: Duration) -> Outcome {
    let worst = [report.mse_matrix, report.blue, report.blup, report.joint_mse]
        .into_iter()
        .fold(0.0, f64::max);
    Outcome {
        pass: report.instances == 4 * 4 * 4 * 20 && worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET,
        detail: format!(
            "{} instances, mse {:.1e}, blue {:.1e}, blup {:.1e}, joint {:.1e}, henderson residual {:.1e} ({elapsed:.2?})",
            report.instances, report.mse_matrix, report.blue, report.blup, report.joint_mse, report.henderson_residual
        ),
    }
}

fn trace_identity(report: &CheckReport) -> Outcome {
    Outcome {
        pass: report.trace_identity <= ORACLE_TOL,
        detail: format!("max relative deviation {:.2e}", report.trace_identity),
    }
}

fn determinant_consistency(report: &CheckReport) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut cases = 0;
    for n in 2..=12usize {
        for _ in 0..20 {
            let s1 = rng.random_range(0.2..5.0);
            let s2 = rng.random_range(0.2..5.0);
            let p = ModelParams::new(
                s1,
                s2,
                rng.random_range(0.1..10.0),
                rng.random_range(0.1..10.0),
                rng.random_range(1..=10),
                n,
            )
            .unwrap();
            let det = |n1: usize| {
                model::mse_matrix_alpha(&p, &ExactDesign::new(n1, n - n1).unwrap())
                    .unwrap()
                    .to_dense()
                    .determinant()
            };
            let best = (1..n).min_by(|&a, &b| det(a).total_cmp(&det(b))).unwrap();
            let w = criteria::minimize_criterion(CriterionKind::PredictionD, &p, OPT_TOL)
                .unwrap()
                .w_star;
            let rounded = criteria::round_to_exact(w, n, Some((CriterionKind::PredictionD, &p)))
                .unwrap()
                .n1();
            if best.abs_diff(rounded) > 1 {
                mismatches += 1;
            }
            cases += 1;
        }
    }
    let offset = report.det_offset.expect("sweep ran with include_det");
    Outcome {
        pass: mismatches == 0 && offset.spread <= DET_OFFSET_SPREAD,
        detail: format!(
            "{mismatches}/{cases} argmin mismatches, offset in [{:.2e}, {:.2e}], spread {:.2e}",
            offset.min, offset.max, offset.spread
        ),
    }
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let params = ModelParams::new(1.0, 1.0, 1.0, 1.0, 5, 10).unwrap();
    let spec = SimulationSpec::new(
        params,
        ExactDesign::new(5, 5).unwrap(),
        (0.0, 0.0),
        MC_REPLICATIONS,
        20_240_601,
    )
    .unwrap();
    let report = sim::validate(&spec, MC_Z).unwrap();
    let elapsed = start.elapsed();
    let worst_z = report
        .mse_diagonal
        .iter()
        .chain(std::iter::once(&report.alpha0_variance))
        .map(|c| (c.empirical - c.theoretical).abs() / c.standard_error)
        .fold(0.0, f64::max);
    let pass = report.alpha0_variance.pass && report.mse_diagonal.iter().all(|c| c.pass) && elapsed < MC_BUDGET;
    Outcome {
        pass,
        detail: format!(
            "var(alpha0) {:.5} vs {:.5}, worst |z| = {worst_z:.2} ({elapsed:.2?})",
            report.alpha0_variance.empirical, report.alpha0_variance.theoretical
        ),
    }
}

fn closed_form_cross_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut est, mut det) = (0.0f64, 0.0f64);
    for _ in 0..DRAWS {
        let p = random_params(&mut rng, false);
        let numeric = criteria::minimize_numeric(CriterionKind::EstimationA, &p, OPT_TOL)
            .unwrap()
            .w_star;
        est = est.max((numeric - criteria::w_star_est(&p)).abs());
    }
    for _ in 0..DRAWS {
        let p = random_params(&mut rng, true);
        let numeric = criteria::minimize_numeric(CriterionKind::PredictionD, &p, OPT_TOL)
            .unwrap()
            .w_star;
        det = det.max((numeric - criteria::w_star_d_closed(&p).unwrap()).abs());
    }
    Outcome {
        pass: est <= CLOSED_FORM_TOL && det <= CLOSED_FORM_TOL,
        detail: format!("est {est:.2e}, pred-d {det:.2e}"),
    }
}

fn stationarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..DRAWS {
        let p = random_params(&mut rng, false);
        for kind in CriterionKind::ALL {
            let w = criteria::minimize_criterion(kind, &p, OPT_TOL).unwrap().w_star;
            let f = |x: f64| criteria::evaluate(kind, ApproxDesign::new(x).unwrap(), &p).unwrap();
            let d1 = (f(w + FD_STEP) - f(w - FD_STEP)) / (2.0 * FD_STEP);
            // wider step for the curvature, where cancellation is worse
            let h2 = 1e-4 * w.min(1.0 - w);
            let d2 = (f(w + h2) - 2.0 * f(w) + f(w - h2)) / (h2 * h2);
            worst = worst.max((d1 / d2).abs());
        }
    }
    Outcome {
        pass: worst <= STATIONARITY_TOL,
        detail: format!("max |f'/f''| = {worst:.2e}"),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let check = CheckConfig {
        include_det: true,
        ..CheckConfig::default()
    };
    let report = equivalence_sweep(&check).expect("equivalence sweep");
    let sweep_time = start.elapsed();

    let results = [
        ("AC1 figure endpoints", endpoints()),
        ("AC2 efficiency endpoints", efficiency_endpoints()),
        ("AC3 q=1 identity", equal_dispersion_identity()),
        ("AC4 oracle equivalence", oracle_equivalence(&report, sweep_time)),
        ("AC5 trace identity", trace_identity(&report)),
        ("AC6 determinant consistency", determinant_consistency(&report)),
        ("AC7 monte carlo", monte_carlo()),
        ("AC8 closed-form cross-checks", closed_form_cross_checks()),
        ("AC9 finite-difference stationarity", stationarity()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
