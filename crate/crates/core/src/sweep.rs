//! Optimal allocation and balanced-design efficiency over a grid of rescaled
//! dispersions `ρ = u/(1+u)` at a fixed dispersion ratio `q = u/v`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{self, CriterionKind, DEFAULT_TOL};
use crate::error::{RcrError, Result};
use crate::model::{ApproxDesign, ModelParams};

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "rho",
    "u",
    "v",
    "q",
    "criterion",
    "w_star",
    "criterion_value",
    "eff_balanced",
];

/// `ρ` used in place of the `ρ → 1` limit (`u = 999`).
pub const RHO_LIMIT: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    q: f64,
    rho_grid: Vec<f64>,
    base: ModelParams,
}

impl SweepConfig {
    /// `base` supplies the error variances, `K` and `N`; its dispersions are
    /// ignored.
    pub fn new(q: f64, rho_grid: Vec<f64>, base: ModelParams) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(RcrError::invalid("q", format!("must be finite and > 0, got {q}")));
        }
        if rho_grid.is_empty() {
            return Err(RcrError::invalid("rho_grid", "is empty"));
        }
        if let Some(bad) = rho_grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(RcrError::invalid(
                "rho_grid",
                format!("values must lie in (0, 1), got {bad}"),
            ));
        }
        if rho_grid.windows(2).any(|p| p[1] <= p[0]) {
            return Err(RcrError::invalid("rho_grid", "must be strictly increasing"));
        }
        Ok(Self { q, rho_grid, base })
    }

    /// `ρ = 0.005, 0.010, …, 0.995`.
    pub fn default_grid() -> Vec<f64> {
        (1..=199).map(|i| i as f64 * 0.005).collect()
    }

    /// Default grid extended with the limit point [`RHO_LIMIT`].
    pub fn figure_grid() -> Vec<f64> {
        let mut g = Self::default_grid();
        g.push(RHO_LIMIT);
        g
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn rho_grid(&self) -> &[f64] {
        &self.rho_grid
    }

    pub fn base(&self) -> &ModelParams {
        &self.base
    }

    /// `(u, v)` for a grid point: `u = ρ/(1−ρ)`, `v = u/q`.
    pub fn dispersions(&self, rho: f64) -> (f64, f64) {
        let u = rho / (1.0 - rho);
        (u, u / self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub w_star: f64,
    pub criterion_value: f64,
    pub eff_balanced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub q: f64,
    pub criterion: CriterionKind,
    pub outcome: std::result::Result<SweepPoint, String>,
}

fn sweep_point(kind: CriterionKind, params: &ModelParams) -> Result<SweepPoint> {
    let opt = criteria::minimize_criterion(kind, params, DEFAULT_TOL)?;
    let eff_balanced = criteria::efficiency(kind, ApproxDesign::new(0.5)?, params)?;
    Ok(SweepPoint {
        w_star: opt.w_star,
        criterion_value: opt.criterion_value,
        eff_balanced,
    })
}

/// One row per grid point, ordered by `ρ`. Rows are evaluated in parallel;
/// a failing row records its error instead of aborting the sweep.
pub fn sweep(config: &SweepConfig, kind: CriterionKind) -> Vec<SweepRow> {
    config
        .rho_grid
        .par_iter()
        .map(|&rho| {
            let (u, v) = config.dispersions(rho);
            let outcome = config
                .base
                .with_dispersions(u, v)
                .and_then(|params| sweep_point(kind, &params))
                .map_err(|e| e.to_string());
            SweepRow {
                rho,
                u,
                v,
                q: config.q,
                criterion: kind,
                outcome,
            }
        })
        .collect()
}

/// Formats with `digits` significant digits in the style of C's `%g`.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes rows as `rho,u,v,q,criterion,w_star,criterion_value,eff_balanced`
/// with 12 significant digits. Failed rows leave the three result fields empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER)?;
    let f = |x: f64| fmt_sig(x, 12);
    for row in rows {
        let (ws, cv, eff) = match &row.outcome {
            Ok(p) => (f(p.w_star), f(p.criterion_value), f(p.eff_balanced)),
            Err(_) => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            f(row.rho),
            f(row.u),
            f(row.v),
            f(row.q),
            row.criterion.name().to_string(),
            ws,
            cv,
            eff,
        ])?;
    }
    w.flush()?;
    Ok(())
}
