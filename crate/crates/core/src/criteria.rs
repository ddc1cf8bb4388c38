//! Design criteria as functions of the allocation rate `w`, their optimal
//! allocation rates and the efficiency of arbitrary designs.
//!
//! * `EstimationA` is `K·N·var(α̂₀)`.
//! * `PredictionA` is `K·trace(Cov(α̂ − α))`.
//! * `PredictionD` is `log det(Cov(α̂ − α))` (natural log), extended to
//!   non-integer `n1 = wN`.
//!
//! At `w = n1/N` each criterion equals its exact-design counterpart with no
//! additive offset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RcrError, Result};
use crate::model::{ApproxDesign, ExactDesign, ModelParams};
use crate::optimize::GoldenSection;

/// Search domain for numeric minimization.
pub const W_MIN: f64 = 1e-6;
pub const W_MAX: f64 = 1.0 - 1e-6;
pub const MIN_TOL: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Below this `|a|` the D-optimal closed form is replaced by its limit 1/2.
const D_CLOSED_FORM_A_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriterionKind {
    #[serde(rename = "est")]
    EstimationA,
    #[serde(rename = "pred-a")]
    PredictionA,
    #[serde(rename = "pred-d")]
    PredictionD,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 3] = [
        CriterionKind::EstimationA,
        CriterionKind::PredictionA,
        CriterionKind::PredictionD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::EstimationA => "est",
            CriterionKind::PredictionA => "pred-a",
            CriterionKind::PredictionD => "pred-d",
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = RcrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "est" => Ok(CriterionKind::EstimationA),
            "pred-a" => Ok(CriterionKind::PredictionA),
            "pred-d" => Ok(CriterionKind::PredictionD),
            other => Err(RcrError::invalid(
                "kind",
                format!("expected est, pred-a or pred-d, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    GoldenSection,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::GoldenSection => "golden_section",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub w_star: f64,
    pub criterion_value: f64,
    pub method: Method,
    pub iterations: usize,
    pub achieved_tol: f64,
}

pub fn phi_est(w: ApproxDesign, params: &ModelParams) -> f64 {
    let w = w.w();
    params.sigma1_sq() * params.shrink1() / w + params.sigma2_sq() * params.shrink2() / (1.0 - w)
}

pub fn w_star_est(params: &ModelParams) -> f64 {
    let ratio = params.sigma2_sq() * params.shrink2() / (params.sigma1_sq() * params.shrink1());
    1.0 / (1.0 + ratio.sqrt())
}

/// Per-individual coefficients of `K·trace`: group-1 individuals contribute
/// `σ₁²Ku/(Ku+1) + σ₂²Kv`, group-2 individuals `σ₁²Ku + σ₂²Kv/(Kv+1)`.
fn trace_slopes(params: &ModelParams) -> (f64, f64) {
    let k = params.kf();
    let (s1, s2) = (params.sigma1_sq(), params.sigma2_sq());
    (
        s1 * k * params.u() / params.shrink1() + s2 * k * params.v(),
        s1 * k * params.u() + s2 * k * params.v() / params.shrink2(),
    )
}

fn phi_a_constant(params: &ModelParams) -> f64 {
    let (a, b) = (params.shrink1(), params.shrink2());
    params.sigma1_sq() * (1.0 / a - a) + params.sigma2_sq() * (1.0 / b - b)
}

/// `w`-dependent part of [`phi_a`] with the constant `N·slope₂ + c₁` removed.
fn phi_a_shape(w: f64, params: &ModelParams) -> f64 {
    let (g1, g2) = trace_slopes(params);
    params.sigma1_sq() * params.shrink1() / w
        + params.sigma2_sq() * params.shrink2() / (1.0 - w)
        + params.n() as f64 * w * (g1 - g2)
}

pub fn phi_a(w: ApproxDesign, params: &ModelParams) -> f64 {
    let (_, g2) = trace_slopes(params);
    phi_a_constant(params) + params.n() as f64 * g2 + phi_a_shape(w.w(), params)
}

/// Diagonal coefficients `(d1, d2)` of the MSE blocks and the weights of the
/// rank-two correction, shared by both D-criterion routes.
struct DParts {
    d1: f64,
    d2: f64,
    lin: f64,
    alpha: f64,
    beta: f64,
}

fn d_parts(params: &ModelParams) -> Result<DParts> {
    if params.u() == 0.0 && params.v() == 0.0 {
        return Err(RcrError::DeterminantDegenerate);
    }
    let k = params.kf();
    let (s1, s2) = (params.sigma1_sq(), params.sigma2_sq());
    let (a, b) = (params.shrink1(), params.shrink2());
    let d1 = s1 * params.u() / a + s2 * params.v();
    let d2 = s1 * params.u() + s2 * params.v() / b;
    Ok(DParts {
        d1,
        d2,
        lin: params.n() as f64 * (d1 / d2).ln(),
        alpha: s1 * a * d1 / k,
        beta: s2 * b * d2 / k,
    })
}

fn phi_d_shape(w: f64, parts: &DParts) -> f64 {
    w * parts.lin + ((parts.alpha * (1.0 - w) + parts.beta * w) / (w * (1.0 - w))).ln()
}

/// `b + wN·log(d1/d2) + log((α(1−w) + βw) / (w(1−w)))` with
/// `b = (N−1)·log d2 − log d1`.
pub fn phi_d(w: ApproxDesign, params: &ModelParams) -> Result<f64> {
    let parts = d_parts(params)?;
    let offset = (params.n() as f64 - 1.0) * parts.d2.ln() - parts.d1.ln();
    Ok(offset + phi_d_shape(w.w(), &parts))
}

/// Closed-form D-optimal rate, valid when `σ₁² = σ₂²`.
pub fn w_star_d_closed(params: &ModelParams) -> Result<f64> {
    if !params.equal_error_variances() {
        return Err(RcrError::ClosedFormUnavailable);
    }
    let a = params.n() as f64 * (params.shrink2() / params.shrink1()).ln();
    if a.abs() < D_CLOSED_FORM_A_EPS {
        return Ok(0.5);
    }
    Ok((a + 2.0 - (a * a + 4.0).sqrt()) / (2.0 * a))
}

pub fn evaluate(kind: CriterionKind, w: ApproxDesign, params: &ModelParams) -> Result<f64> {
    match kind {
        CriterionKind::EstimationA => Ok(phi_est(w, params)),
        CriterionKind::PredictionA => Ok(phi_a(w, params)),
        CriterionKind::PredictionD => phi_d(w, params),
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol >= MIN_TOL) {
        return Err(RcrError::invalid("tol", format!("must be >= {MIN_TOL:e}, got {tol}")));
    }
    Ok(())
}

/// Golden-section minimization on `[W_MIN, W_MAX]`, ignoring closed forms.
pub fn minimize_numeric(kind: CriterionKind, params: &ModelParams, tol: f64) -> Result<OptimizationResult> {
    check_tol(tol)?;
    let search = GoldenSection::new(tol);
    let found = match kind {
        CriterionKind::EstimationA => search.minimize(
            |w| params.sigma1_sq() * params.shrink1() / w + params.sigma2_sq() * params.shrink2() / (1.0 - w),
            W_MIN,
            W_MAX,
        ),
        CriterionKind::PredictionA => search.minimize(|w| phi_a_shape(w, params), W_MIN, W_MAX),
        CriterionKind::PredictionD => {
            let parts = d_parts(params)?;
            search.minimize(|w| phi_d_shape(w, &parts), W_MIN, W_MAX)
        }
    };
    let w = ApproxDesign::new(found.x)?;
    Ok(OptimizationResult {
        w_star: found.x,
        criterion_value: evaluate(kind, w, params)?,
        method: Method::GoldenSection,
        iterations: found.iterations,
        achieved_tol: found.bracket_half_width,
    })
}

/// Optimal allocation rate, using a closed form where one exists
/// (`EstimationA` always, `PredictionD` with equal error variances).
pub fn minimize_criterion(kind: CriterionKind, params: &ModelParams, tol: f64) -> Result<OptimizationResult> {
    check_tol(tol)?;
    let closed = match kind {
        CriterionKind::EstimationA => Some(w_star_est(params)),
        CriterionKind::PredictionD if params.equal_error_variances() => Some(w_star_d_closed(params)?),
        _ => None,
    };
    match closed {
        Some(w_star) => Ok(OptimizationResult {
            w_star,
            criterion_value: evaluate(kind, ApproxDesign::new(w_star)?, params)?,
            method: Method::ClosedForm,
            iterations: 0,
            achieved_tol: tol,
        }),
        None => minimize_numeric(kind, params, tol),
    }
}

/// Efficiency of `w` relative to the optimum: a ratio for the A-type criteria,
/// `exp((Φ(w*) − Φ(w)) / N)` for the D-criterion.
pub fn efficiency(kind: CriterionKind, w: ApproxDesign, params: &ModelParams) -> Result<f64> {
    let opt = minimize_criterion(kind, params, DEFAULT_TOL)?;
    let at_w = evaluate(kind, w, params)?;
    let eff = match kind {
        CriterionKind::EstimationA | CriterionKind::PredictionA => opt.criterion_value / at_w,
        CriterionKind::PredictionD => ((opt.criterion_value - at_w) / params.n() as f64).exp(),
    };
    // w* is the minimizer, so anything above 1 is rounding.
    Ok(eff.min(1.0))
}

pub fn eff_a(w: ApproxDesign, params: &ModelParams) -> Result<f64> {
    efficiency(CriterionKind::PredictionA, w, params)
}

pub fn eff_d(w: ApproxDesign, params: &ModelParams) -> Result<f64> {
    efficiency(CriterionKind::PredictionD, w, params)
}

/// Rounds an allocation rate to group sizes with both groups nonempty.
///
/// Without a criterion the nearest integer is used. With one, the floor and
/// ceiling of `N·w` are compared and the lower criterion value wins.
pub fn round_to_exact(w: f64, n: usize, context: Option<(CriterionKind, &ModelParams)>) -> Result<ExactDesign> {
    let w = ApproxDesign::new(w)?.w();
    if n < 2 {
        return Err(RcrError::invalid("N", format!("must be >= 2, got {n}")));
    }
    let clamp = |x: f64| (x as usize).clamp(1, n - 1);
    let target = n as f64 * w;
    let nearest = clamp(target.round());
    let n1 = match context {
        None => nearest,
        Some((kind, params)) => {
            if params.n() != n {
                return Err(RcrError::DesignMismatch {
                    n1: nearest,
                    n2: n - nearest,
                    total: params.n(),
                });
            }
            let (lo, hi) = (clamp(target.floor()), clamp(target.ceil()));
            if lo == hi {
                lo
            } else {
                let value = |c: usize| evaluate(kind, ApproxDesign::new(c as f64 / n as f64)?, params);
                let (f_lo, f_hi) = (value(lo)?, value(hi)?);
                if f_lo < f_hi {
                    lo
                } else if f_hi < f_lo {
                    hi
                } else {
                    nearest
                }
            }
        }
    };
    ExactDesign::new(n1, n - n1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s1: f64, s2: f64, u: f64, v: f64, k: usize, n: usize) -> ModelParams {
        ModelParams::new(s1, s2, u, v, k, n).unwrap()
    }

    fn w(x: f64) -> ApproxDesign {
        ApproxDesign::new(x).unwrap()
    }

    #[test]
    fn phi_est_symmetric_value() {
        assert_eq!(phi_est(w(0.5), &p(1.0, 1.0, 1.0, 1.0, 5, 60)), 24.0);
    }

    #[test]
    fn w_star_est_cases() {
        assert_eq!(w_star_est(&p(2.0, 2.0, 3.0, 3.0, 4, 10)), 0.5);
        let params = p(1.0, 1.0, 1.0, 0.0, 5, 60);
        let ws = w_star_est(&params);
        // brute-force grid minimization of Φ_est at 1e-6 resolution
        let grid_min = (1..1_000_000)
            .map(|i| i as f64 * 1e-6)
            .min_by(|a, b| phi_est(w(*a), &params).total_cmp(&phi_est(w(*b), &params)))
            .unwrap();
        assert!((ws - grid_min).abs() <= 1e-6);
        assert!((ws - 0.710_05).abs() < 1e-4);
        assert!((ws - 1.0 / (1.0 + (1.0f64 / 6.0).sqrt())).abs() < 1e-15);
        let f = phi_est(w(ws), &params);
        assert!(f <= phi_est(w(ws + 1e-4), &params));
        assert!(f <= phi_est(w(ws - 1e-4), &params));
    }

    #[test]
    fn phi_a_symmetric_case_is_symmetric_in_w() {
        let params = p(1.7, 1.7, 2.5, 2.5, 3, 20);
        for x in [0.05, 0.2, 0.37, 0.5, 0.81] {
            let diff = phi_a(w(x), &params) - phi_a(w(1.0 - x), &params);
            assert!(diff.abs() < 1e-10 * phi_a(w(x), &params));
        }
    }

    #[test]
    fn phi_a_equal_variances_reduces_to_shifted_special_form() {
        // With σ₁² = σ₂² = σ² the criterion equals σ²·(c₃ + …) in the scaled
        // special-case form.
        let (u, v, k, n) = (0.7, 2.9, 4usize, 30usize);
        let params = p(1.0, 1.0, u, v, k, n);
        let kf = k as f64;
        let (a, b) = (kf * u + 1.0, kf * v + 1.0);
        let c3 = 1.0 / a + 1.0 / b - kf * (u + v) - 2.0;
        for x in [0.1, 0.4, 0.9] {
            let special = c3
                + a / x
                + n as f64 * x * (kf * u / a + kf * v)
                + b / (1.0 - x)
                + n as f64 * (1.0 - x) * (kf * v / b + kf * u);
            assert!((phi_a(w(x), &params) - special).abs() < 1e-9 * special.abs());
        }
    }

    #[test]
    fn phi_a_special_case_one_constant() {
        // σ² = 1, u = v = u': Φ_A = (Ku'+1)·(c₂ + 1/w + 1/(1−w)).
        let (up, k, n) = (0.6, 3usize, 12usize);
        let params = p(1.0, 1.0, up, up, k, n);
        let ku = k as f64 * up;
        let c2 = (n as f64 * ku * (ku + 2.0) + 2.0) / (ku + 1.0).powi(2) - 2.0;
        for x in [0.2, 0.5, 0.7] {
            let special = (ku + 1.0) * (c2 + 1.0 / x + 1.0 / (1.0 - x));
            assert!((phi_a(w(x), &params) - special).abs() < 1e-10 * special);
        }
    }

    #[test]
    fn phi_d_special_case_one() {
        let params = p(2.0, 2.0, 1.5, 1.5, 4, 9);
        let b2 = phi_d(w(0.5), &params).unwrap() + (0.25f64).ln();
        for x in [0.1f64, 0.3, 0.66, 0.9] {
            let special = b2 - (x * (1.0 - x)).ln();
            assert!((phi_d(w(x), &params).unwrap() - special).abs() < 1e-10);
        }
    }

    #[test]
    fn phi_d_special_case_two_slope() {
        let (u, v, k, n) = (3.0, 0.5, 5usize, 20usize);
        let params = p(1.3, 1.3, u, v, k, n);
        let a = n as f64 * ((k as f64 * v + 1.0) / (k as f64 * u + 1.0)).ln();
        let b2 = phi_d(w(0.5), &params).unwrap() - 0.5 * a + (0.25f64).ln();
        for x in [0.05f64, 0.4, 0.8] {
            let special = b2 + x * a - (x * (1.0 - x)).ln();
            assert!((phi_d(w(x), &params).unwrap() - special).abs() < 1e-9);
        }
    }

    #[test]
    fn phi_d_degenerate_without_dispersion() {
        assert!(matches!(
            phi_d(w(0.5), &p(1.0, 1.0, 0.0, 0.0, 2, 4)),
            Err(RcrError::DeterminantDegenerate)
        ));
        assert!(phi_d(w(0.5), &p(1.0, 1.0, 0.0, 0.3, 2, 4)).is_ok());
    }

    #[test]
    fn d_closed_form_cases() {
        assert_eq!(w_star_d_closed(&p(1.0, 1.0, 2.0, 2.0, 5, 60)).unwrap(), 0.5);
        let q3 = w_star_d_closed(&p(1.0, 1.0, 999.0, 333.0, 5, 60)).unwrap();
        assert!((q3 - 0.985).abs() < 5e-4);
        let params = p(1.0, 1.0, 999.0, 3330.0, 5, 60);
        let a = 60.0 * (16651.0f64 / 4996.0).ln();
        assert!((a - 72.24).abs() < 0.02);
        let q03 = w_star_d_closed(&params).unwrap();
        assert!((q03 - 0.0137).abs() < 1e-4);
        let numeric = minimize_numeric(CriterionKind::PredictionD, &params, 1e-12).unwrap();
        assert!((numeric.w_star - q03).abs() < 1e-7);
        assert!(matches!(
            w_star_d_closed(&p(1.0, 2.0, 1.0, 1.0, 5, 60)),
            Err(RcrError::ClosedFormUnavailable)
        ));
    }

    #[test]
    fn d_closed_form_small_a_branch_is_continuous() {
        // Just outside the threshold the formula should already be ≈ 1/2 − a/16.
        let a: f64 = 2e-9;
        let formula = (a + 2.0 - (a * a + 4.0).sqrt()) / (2.0 * a);
        assert!((formula - (0.5 - a / 16.0)).abs() < 1e-7);
    }

    #[test]
    fn minimize_dispatch_and_methods() {
        let eq = p(1.0, 1.0, 4.0, 1.0, 5, 60);
        let r = minimize_criterion(CriterionKind::PredictionD, &eq, 1e-10).unwrap();
        assert_eq!(r.method, Method::ClosedForm);
        let uneq = p(1.0, 2.0, 4.0, 1.0, 5, 60);
        let r = minimize_criterion(CriterionKind::PredictionD, &uneq, 1e-10).unwrap();
        assert_eq!(r.method, Method::GoldenSection);
        assert!(r.iterations > 0);
        let r = minimize_criterion(CriterionKind::EstimationA, &uneq, 1e-10).unwrap();
        assert_eq!(r.method, Method::ClosedForm);
        let numeric = minimize_numeric(CriterionKind::EstimationA, &uneq, 1e-10).unwrap();
        assert!((numeric.w_star - r.w_star).abs() < 1e-8);
        assert!(minimize_criterion(CriterionKind::PredictionA, &uneq, 1e-13).is_err());
    }

    #[test]
    fn optimizer_certificate() {
        let params = p(0.4, 2.2, 7.0, 0.3, 3, 25);
        for kind in CriterionKind::ALL {
            let r = minimize_criterion(kind, &params, 1e-9).unwrap();
            let f = |x: f64| evaluate(kind, w(x), &params).unwrap();
            let probe = r.achieved_tol.max(1e-6);
            assert!(f(r.w_star) <= f(r.w_star + probe));
            assert!(f(r.w_star) <= f(r.w_star - probe));
        }
    }

    #[test]
    fn q_one_prediction_a_is_balanced() {
        for u in [0.01, 1.0, 100.0] {
            let r = minimize_criterion(CriterionKind::PredictionA, &p(1.0, 1.0, u, u, 5, 60), 1e-10).unwrap();
            assert!((r.w_star - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn self_efficiency_is_one() {
        let params = p(1.0, 1.5, 2.0, 0.5, 4, 40);
        for kind in CriterionKind::ALL {
            let r = minimize_criterion(kind, &params, 1e-10).unwrap();
            let e = efficiency(kind, w(r.w_star), &params).unwrap();
            assert_eq!(e, 1.0);
            let off = efficiency(kind, w(0.5 * r.w_star), &params).unwrap();
            assert!(off > 0.0 && off < 1.0);
        }
    }

    #[test]
    fn round_to_exact_cases() {
        assert_eq!(
            round_to_exact(0.5, 60, None).unwrap(),
            ExactDesign::new(30, 30).unwrap()
        );
        assert_eq!(round_to_exact(0.014, 60, None).unwrap().n1(), 1);
        assert_eq!(round_to_exact(0.99999, 60, None).unwrap().n1(), 59);
        assert!(round_to_exact(1.0, 60, None).is_err());

        // Both candidates for w = 0.910 evaluated directly.
        let params = p(1.0, 1.0, 999.0, 333.0, 5, 60);
        let a54 = phi_a(w(54.0 / 60.0), &params);
        let a55 = phi_a(w(55.0 / 60.0), &params);
        let expect = if a54 < a55 { 54 } else { 55 };
        let got = round_to_exact(0.910, 60, Some((CriterionKind::PredictionA, &params))).unwrap();
        assert_eq!(got.n1(), expect);
        assert_eq!(got.n2(), 60 - expect);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in CriterionKind::ALL {
            assert_eq!(kind.name().parse::<CriterionKind>().unwrap(), kind);
        }
        assert!("pred-x".parse::<CriterionKind>().is_err());
    }
}
