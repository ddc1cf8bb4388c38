use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rcr_core::CriterionKind;

#[derive(Debug, Parser)]
#[command(
    name = "rcr",
    version,
    about = "Optimal group allocation for two-group random coefficient regression"
)]
pub struct Cli {
    /// Worker threads for sweeps and simulations (default: available parallelism).
    #[arg(long, global = true, env = "RCR_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a design criterion at an allocation rate.
    #[command(allow_negative_numbers = true)]
    Criterion(CriterionArgs),
    /// Find the optimal allocation rate and the nearest exact design.
    #[command(allow_negative_numbers = true)]
    Optimize(OptimizeArgs),
    /// Tabulate optimal rates and balanced-design efficiencies over rho.
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Compare the closed forms with the dense mixed-model equations.
    #[command(allow_negative_numbers = true)]
    OracleCheck(OracleCheckArgs),
    /// Draw one synthetic dataset.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Monte Carlo check of the variance and MSE formulas, or estimation on a dataset.
    #[command(allow_negative_numbers = true)]
    Validate(ValidateArgs),
}

/// Model parameters shared by most commands. Either `--u/--v` or
/// `--q/--rho` fixes the dispersions.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// JSON file with any of the flag values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "sigma1-sq")]
    pub sigma1_sq: Option<f64>,
    #[arg(long = "sigma2-sq")]
    pub sigma2_sq: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub v: Option<f64>,
    /// Dispersion ratio u/v.
    #[arg(long)]
    pub q: Option<f64>,
    /// Rescaled dispersion u/(1+u).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Observations per individual.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Total number of individuals.
    #[arg(long = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CriterionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub kind: Option<CriterionKind>,
    /// Allocation rate to group 1.
    #[arg(long)]
    pub w: Option<f64>,
    /// Recompute the value from the mixed-model equations (needs w = n1/N).
    #[arg(long)]
    pub check_oracle: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub kind: Option<CriterionKind>,
    /// Golden-section tolerance on w.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Criteria to tabulate (repeatable; default pred-a and pred-d).
    #[arg(long)]
    pub kind: Vec<CriterionKind>,
    /// Comma-separated rho values (default 0.005, 0.010, ..., 0.995).
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    /// Output CSV (default stdout).
    #[arg(long, conflicts_with = "figures")]
    pub out: Option<PathBuf>,
    /// Write the four standard tables for q in {3, 1, 0.3}.
    #[arg(long, requires = "out_dir")]
    pub figures: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    /// Pin u for every draw.
    #[arg(long)]
    pub u: Option<f64>,
    /// Pin v for every draw.
    #[arg(long)]
    pub v: Option<f64>,
    /// Pin both error variances.
    #[arg(long, conflicts_with_all = ["sigma1_sq", "sigma2_sq"])]
    pub sigma: Option<f64>,
    #[arg(long = "sigma1-sq")]
    pub sigma1_sq: Option<f64>,
    #[arg(long = "sigma2-sq")]
    pub sigma2_sq: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random parameter draws per (n1, n2, K).
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub max_group: Option<usize>,
    #[arg(long)]
    pub max_k: Option<usize>,
    /// Also report the offset between phi_D and log det(MSE).
    #[arg(long)]
    pub include_det: bool,
}

#[derive(Debug, Args)]
pub struct SimulationArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Group 1 size (default N/2 rounded down).
    #[arg(long)]
    pub n1: Option<usize>,
    /// Population means as "mu1,mu2".
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub theta0: Option<(f64, f64)>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimulationArgs,
    /// Replicate stream to draw.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    /// Dataset CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON sidecar (default: the CSV path with a .json extension).
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub sim: SimulationArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Pass threshold in standard errors.
    #[arg(long)]
    pub z: Option<f64>,
    /// Estimate alpha0 and the individual contrasts from a dataset instead.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated numbers")?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}
