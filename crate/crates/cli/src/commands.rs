use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rcr_core::check::{self, CheckConfig, PinnedParams};
use rcr_core::criteria::{self, CriterionKind, DEFAULT_TOL};
use rcr_core::model::{self, ApproxDesign, ExactDesign, ModelParams};
use rcr_core::sim::{self, SimulationSpec, DEFAULT_Z};
use rcr_core::sweep::{self, SweepConfig, SweepRow};
use rcr_core::{oracle, ObservationSet};
use serde_json::json;

use crate::args::{
    CriterionArgs, OptimizeArgs, OracleCheckArgs, SimulateArgs, SimulationArgs, SweepArgs, ValidateArgs,
};
use crate::config::RunConfig;
use crate::error::CliError;

/// Largest closed-form vs oracle deviation accepted by the checks.
pub const ORACLE_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_REPLICATIONS: usize = 100_000;

/// Error variance, `K` and `N` used by `sweep` when not given.
const SWEEP_DEFAULTS: (f64, usize, usize) = (1.0, 5, 60);
const FIGURE_QS: [f64; 3] = [3.0, 1.0, 0.3];
const FIGURE_TABLES: [(&str, CriterionKind); 4] = [
    ("a_rate.csv", CriterionKind::PredictionA),
    ("d_rate.csv", CriterionKind::PredictionD),
    ("a_efficiency.csv", CriterionKind::PredictionA),
    ("d_efficiency.csv", CriterionKind::PredictionD),
];

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_err(path: &Path) -> impl Fn(rcr_core::RcrError) -> CliError + '_ {
    move |e| {
        if e.is_io() {
            CliError::Io(format!("cannot write {}: {e}", path.display()))
        } else {
            e.into()
        }
    }
}

fn exact_design_for(w: f64, n: usize) -> Result<ExactDesign, CliError> {
    let n1 = (w * n as f64).round();
    if (n1 - w * n as f64).abs() > 1e-9 || n1 < 1.0 || n1 > (n - 1) as f64 {
        return Err(CliError::Validation(format!(
            "invalid w: --check-oracle needs w = n1/N with 1 <= n1 < N, got w = {w}, N = {n}"
        )));
    }
    Ok(ExactDesign::new(n1 as usize, n - n1 as usize)?)
}

/// The criterion value at `n1/N` recomputed from the dense mixed-model equations.
fn oracle_value(kind: CriterionKind, params: &ModelParams, design: &ExactDesign) -> Result<f64, CliError> {
    let mm = oracle::assemble(params, design)?;
    let joint = oracle::joint_mse(&mm)?;
    let kn = (params.k() * params.n()) as f64;
    Ok(match kind {
        CriterionKind::EstimationA => {
            let c = joint.c11();
            kn * (c[(0, 0)] - 2.0 * c[(0, 1)] + c[(1, 1)])
        }
        CriterionKind::PredictionA => {
            let alpha = oracle::alpha_mse_from_theta(&oracle::theta_mse(&joint, design)?);
            params.k() as f64 * alpha.trace()
        }
        CriterionKind::PredictionD => {
            oracle::log_det_spd(&oracle::alpha_mse_from_theta(&oracle::theta_mse(&joint, design)?))?
        }
    })
}

pub fn criterion(args: &CriterionArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_flags(&args.model)?;
    let params = cfg.params()?;
    let kind = RunConfig::required(args.kind.or(cfg.kind), "kind")?;
    let w = RunConfig::required(args.w.or(cfg.w), "w")?;
    let value = criteria::evaluate(kind, ApproxDesign::new(w)?, &params)?;
    let mut out = json!({ "criterion": kind, "w": w, "value": value });
    if args.check_oracle {
        let design = exact_design_for(w, params.n())?;
        let reference = oracle_value(kind, &params, &design)?;
        let deviation = (value - reference).abs() / reference.abs().max(1.0);
        out["oracle_value"] = json!(reference);
        out["oracle_deviation"] = json!(deviation);
        println!("{out}");
        if deviation.is_nan() || deviation > ORACLE_THRESHOLD {
            return Err(CliError::Check(format!(
                "oracle deviation {deviation:e} exceeds {ORACLE_THRESHOLD:e}"
            )));
        }
        return Ok(());
    }
    println!("{out}");
    Ok(())
}

pub fn optimize(args: &OptimizeArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_flags(&args.model)?;
    let params = cfg.params()?;
    let kind = RunConfig::required(args.kind.or(cfg.kind), "kind")?;
    let tol = args.tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    let opt = criteria::minimize_criterion(kind, &params, tol)?;
    let exact = criteria::round_to_exact(opt.w_star, params.n(), Some((kind, &params)))?;
    let eff_balanced = criteria::efficiency(kind, ApproxDesign::new(0.5)?, &params)?;
    println!(
        "{}",
        json!({
            "criterion": kind,
            "w_star": opt.w_star,
            "n1": exact.n1(),
            "n2": exact.n2(),
            "method": opt.method,
            "criterion_value": opt.criterion_value,
            "eff_balanced": eff_balanced,
            "iterations": opt.iterations,
            "achieved_tol": opt.achieved_tol,
        })
    );
    Ok(())
}

fn sweep_base(cfg: &RunConfig, figures: bool) -> Result<ModelParams, CliError> {
    let (sigma, k, n) = SWEEP_DEFAULTS;
    let (s1, s2) = (cfg.sigma1_sq.unwrap_or(sigma), cfg.sigma2_sq.unwrap_or(sigma));
    if figures && s1 != s2 {
        return Err(CliError::Validation(format!(
            "invalid sigma1_sq/sigma2_sq: figure tables need equal error variances, got {s1} and {s2}"
        )));
    }
    // Dispersions are replaced at every grid point.
    Ok(ModelParams::new(
        s1,
        s2,
        1.0,
        1.0,
        cfg.k.unwrap_or(k),
        cfg.n.unwrap_or(n),
    )?)
}

fn report_row_errors(rows: &[SweepRow]) {
    for row in rows {
        if let Err(e) = &row.outcome {
            eprintln!("warning: rho = {} ({}): {e}", row.rho, row.criterion);
        }
    }
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_flags(&args.model)?;
    if cfg.u.is_some() || cfg.v.is_some() || cfg.rho.is_some() {
        return Err(CliError::Validation(
            "invalid dispersions: sweep takes --q and --rho-grid, not --u, --v or --rho".into(),
        ));
    }
    let base = sweep_base(&cfg, args.figures)?;
    let grid = match &args.rho_grid {
        Some(g) => g.clone(),
        None if args.figures => SweepConfig::figure_grid(),
        None => SweepConfig::default_grid(),
    };

    if args.figures {
        let dir: &PathBuf = args.out_dir.as_ref().expect("clap enforces --out-dir");
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        for (name, kind) in FIGURE_TABLES {
            let mut rows = Vec::new();
            for q in FIGURE_QS {
                rows.extend(sweep::sweep(&SweepConfig::new(q, grid.clone(), base)?, kind));
            }
            report_row_errors(&rows);
            let path = dir.join(name);
            let mut w = create(&path)?;
            sweep::write_sweep_csv(&rows, &mut w).map_err(write_err(&path))?;
            w.flush()
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        return Ok(());
    }

    let q = RunConfig::required(cfg.q, "q")?;
    let config = SweepConfig::new(q, grid, base)?;
    let kinds = if args.kind.is_empty() {
        vec![CriterionKind::PredictionA, CriterionKind::PredictionD]
    } else {
        args.kind.clone()
    };
    let rows: Vec<SweepRow> = kinds.iter().flat_map(|&kind| sweep::sweep(&config, kind)).collect();
    report_row_errors(&rows);
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            sweep::write_sweep_csv(&rows, &mut w).map_err(write_err(path))?;
            w.flush()
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        None => sweep::write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

pub fn oracle_check(args: &OracleCheckArgs) -> Result<(), CliError> {
    let defaults = CheckConfig::default();
    let config = CheckConfig {
        max_group: args.max_group.unwrap_or(defaults.max_group),
        max_k: args.max_k.unwrap_or(defaults.max_k),
        draws: args.draws.unwrap_or(defaults.draws),
        seed: args.seed.unwrap_or(defaults.seed),
        include_det: args.include_det,
        pinned: PinnedParams {
            sigma1_sq: args.sigma.or(args.sigma1_sq),
            sigma2_sq: args.sigma.or(args.sigma2_sq),
            u: args.u,
            v: args.v,
        },
    };
    for (field, value) in [
        ("max_group", config.max_group),
        ("max_k", config.max_k),
        ("draws", config.draws),
    ] {
        if value == 0 {
            return Err(CliError::Validation(format!("invalid {field}: must be >= 1")));
        }
    }
    let report = check::equivalence_sweep(&config)?;
    let pass = report.passes(ORACLE_THRESHOLD);
    let mut out = serde_json::to_value(&report).expect("report serializes");
    out["max_deviation"] = json!(report.max_deviation());
    out["threshold"] = json!(ORACLE_THRESHOLD);
    out["pass"] = json!(pass);
    println!("{out}");
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "closed forms deviate from the oracle by {:e} (threshold {ORACLE_THRESHOLD:e})",
            report.max_deviation()
        )))
    }
}

fn simulation_spec(args: &SimulationArgs, replications: Option<usize>) -> Result<SimulationSpec, CliError> {
    let cfg = RunConfig::from_flags(&args.model)?;
    let params = cfg.params()?;
    let n = params.n();
    let n1 = args.n1.or(cfg.n1).unwrap_or(n / 2);
    if n1 == 0 || n1 >= n {
        return Err(CliError::Validation(format!(
            "invalid n1: must lie in 1..N-1, got {n1} with N = {n}"
        )));
    }
    let theta0 = args.theta0.or(cfg.theta0).unwrap_or((0.0, 0.0));
    let replications = replications.or(cfg.replications).unwrap_or(DEFAULT_REPLICATIONS);
    Ok(SimulationSpec::new(
        params,
        ExactDesign::new(n1, n - n1)?,
        theta0,
        replications,
        args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
    )?)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let spec = simulation_spec(&args.sim, Some(1))?;
    let (data, alpha) = sim::simulate_dataset(&spec, args.replicate);
    let mut w = create(&args.out)?;
    data.write_csv(&mut w).map_err(write_err(&args.out))?;
    w.flush()
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", args.out.display())))?;

    let sidecar = args.sidecar.clone().unwrap_or_else(|| args.out.with_extension("json"));
    let p = &spec.params;
    let meta = json!({
        "seed": spec.seed,
        "replicate": args.replicate,
        "sigma1_sq": p.sigma1_sq(),
        "sigma2_sq": p.sigma2_sq(),
        "u": p.u(),
        "v": p.v(),
        "K": p.k(),
        "N": p.n(),
        "n1": spec.design.n1(),
        "n2": spec.design.n2(),
        "theta0": [spec.theta0.0, spec.theta0.1],
        "alpha0": spec.alpha0(),
        "alpha": alpha,
    });
    let mut w = create(&sidecar)?;
    serde_json::to_writer_pretty(&mut w, &meta)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", sidecar.display())))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", sidecar.display())))?;
    Ok(())
}

fn estimate(args: &ValidateArgs, path: &Path) -> Result<(), CliError> {
    let data = ObservationSet::read_csv(open(path)?).map_err(|e| {
        if e.is_io() {
            CliError::Io(format!("cannot read {}: {e}", path.display()))
        } else {
            CliError::Validation(format!("invalid estimate file {}: {e}", path.display()))
        }
    })?;
    let mut cfg = RunConfig::from_flags(&args.sim.model)?;
    for (field, given, actual) in [("K", cfg.k, data.k()), ("N", cfg.n, data.n())] {
        if given.is_some_and(|g| g != actual) {
            return Err(CliError::Validation(format!(
                "invalid {field}: {} given but the data have {actual}",
                given.unwrap()
            )));
        }
    }
    cfg.k = Some(data.k());
    cfg.n = Some(data.n());
    let params = cfg.params()?;
    println!(
        "{}",
        json!({
            "n1": data.n1(),
            "n2": data.n2(),
            "K": data.k(),
            "alpha0_hat": model::blue_alpha0(&data)?,
            "alpha_hat": model::blup_alpha_all(&data, &params)?,
        })
    );
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    if let Some(path) = &args.estimate {
        return estimate(args, path);
    }
    let cfg = RunConfig::from_flags(&args.sim.model)?;
    let spec = simulation_spec(&args.sim, args.replications)?;
    let z = args.z.or(cfg.z).unwrap_or(DEFAULT_Z);
    let report = sim::validate(&spec, z)?;
    let mut out = serde_json::to_value(&report).expect("report serializes");
    out["all_pass"] = json!(report.all_pass());
    println!("{out}");
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "empirical moments outside {z} standard errors"
        )))
    }
}
