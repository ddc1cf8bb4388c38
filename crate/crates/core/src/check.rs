//! Equivalence sweep between the closed forms and the mixed-model oracle over
//! a grid of small instances.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::criteria::{phi_a, phi_d};
use crate::data::ObservationSet;
use crate::error::{RcrError, Result};
use crate::model::{self, ExactDesign, ModelParams};
use crate::oracle;

/// Optional values pinned for every draw instead of sampled.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PinnedParams {
    pub sigma1_sq: Option<f64>,
    pub sigma2_sq: Option<f64>,
    pub u: Option<f64>,
    pub v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    /// Group sizes `n1, n2` range over `1..=max_group`.
    pub max_group: usize,
    /// `K` ranges over `1..=max_k`.
    pub max_k: usize,
    pub draws: usize,
    pub seed: u64,
    pub include_det: bool,
    pub pinned: PinnedParams,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            max_group: 4,
            max_k: 4,
            draws: 20,
            seed: 0x5eed_2024,
            include_det: false,
            pinned: PinnedParams::default(),
        }
    }
}

/// Ranges for sampled parameters.
pub const DISPERSION_RANGE: (f64, f64) = (0.1, 10.0);
pub const ERROR_VARIANCE_RANGE: (f64, f64) = (0.2, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetOffset {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub instances: usize,
    /// Closed-form MSE matrix vs oracle projection of `Cov(θ̂ − θ)`.
    pub mse_matrix: f64,
    /// Closed-form joint MSE partitions vs inverted Henderson matrix.
    pub joint_mse: f64,
    pub blue: f64,
    pub blup: f64,
    /// `β̂` against the group grand means.
    pub beta: f64,
    /// `K·trace(MSE)` against `Φ_A(n1/N)`.
    pub trace_identity: f64,
    /// Max-norm of `C·C⁻¹ − I` for the Henderson matrix.
    pub henderson_residual: f64,
    /// `Φ_D(n1/N) − log det(MSE)` with the determinant from the oracle matrix.
    pub det_offset: Option<DetOffset>,
}

impl CheckReport {
    /// Largest relative deviation among the equivalence checks.
    pub fn max_deviation(&self) -> f64 {
        let mut m = [
            self.mse_matrix,
            self.joint_mse,
            self.blue,
            self.blup,
            self.beta,
            self.trace_identity,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if let Some(d) = &self.det_offset {
            m = m.max(d.spread);
        }
        m
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_deviation() <= threshold && self.henderson_residual <= 1e-8
    }
}

fn sample(rng: &mut ChaCha8Rng, pinned: Option<f64>, range: (f64, f64)) -> f64 {
    pinned.unwrap_or_else(|| rng.random_range(range.0..range.1))
}

fn scalar_dev(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Runs every instance of the grid and records the worst deviations.
pub fn equivalence_sweep(config: &CheckConfig) -> Result<CheckReport> {
    let pinned = config.pinned;
    for (field, value) in [("u", pinned.u), ("v", pinned.v)] {
        if let Some(value) = value.filter(|x| x.is_nan() || *x <= 0.0) {
            return Err(RcrError::OracleDispersion { field, value });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = CheckReport {
        instances: 0,
        mse_matrix: 0.0,
        joint_mse: 0.0,
        blue: 0.0,
        blup: 0.0,
        beta: 0.0,
        trace_identity: 0.0,
        henderson_residual: 0.0,
        det_offset: None,
    };
    let mut offsets: Vec<f64> = Vec::new();

    for n1 in 1..=config.max_group {
        for n2 in 1..=config.max_group {
            for k in 1..=config.max_k {
                for _ in 0..config.draws {
                    let params = ModelParams::new(
                        sample(&mut rng, pinned.sigma1_sq, ERROR_VARIANCE_RANGE),
                        sample(&mut rng, pinned.sigma2_sq, ERROR_VARIANCE_RANGE),
                        sample(&mut rng, pinned.u, DISPERSION_RANGE),
                        sample(&mut rng, pinned.v, DISPERSION_RANGE),
                        k,
                        n1 + n2,
                    )?;
                    let design = ExactDesign::new(n1, n2)?;
                    let values: Vec<f64> = (0..(n1 + n2) * k)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            3.0 * z + rng.random_range(-5.0..5.0)
                        })
                        .collect();
                    let data = ObservationSet::new(n1, n2, k, values)?;

                    let mm = oracle::assemble(&params, &design)?;
                    let henderson = mm.henderson_matrix()?;
                    let joint = oracle::joint_mse(&mm)?;
                    let identity = DMatrix::<f64>::identity(henderson.nrows(), henderson.nrows());
                    report.henderson_residual = report
                        .henderson_residual
                        .max((&henderson * &joint.matrix - identity).amax());

                    let theta = oracle::theta_mse(&joint, &design)?;
                    let oracle_alpha = oracle::alpha_mse_from_theta(&theta);
                    let closed = model::mse_matrix_alpha(&params, &design)?;
                    report.mse_matrix = report
                        .mse_matrix
                        .max(oracle::relative_deviation(&closed.to_dense(), &oracle_alpha));

                    let joint_closed = oracle::joint_mse_closed_form(&params, &design)?;
                    report.joint_mse = report
                        .joint_mse
                        .max(oracle::relative_deviation(&joint_closed, &joint.matrix));

                    let trace_lhs = params.k() as f64 * closed.trace();
                    let trace_rhs = phi_a(design.rate(), &params);
                    report.trace_identity = report
                        .trace_identity
                        .max((trace_lhs - trace_rhs).abs() / trace_rhs.abs());

                    let sol = oracle::solve_observations(&mm, &data)?;
                    let (m1, m2) = (
                        data.group_mean(crate::data::Group::G1)?,
                        data.group_mean(crate::data::Group::G2)?,
                    );
                    report.beta = report
                        .beta
                        .max(scalar_dev(sol.beta[0], m1).max(scalar_dev(sol.beta[1], m2)));
                    report.blue = report.blue.max(scalar_dev(model::blue_alpha0(&data)?, sol.alpha0()));
                    let blup = model::blup_alpha_all(&data, &params)?;
                    for (closed_i, oracle_i) in blup.iter().zip(sol.alpha()) {
                        report.blup = report.blup.max(scalar_dev(*closed_i, oracle_i));
                    }

                    if config.include_det {
                        offsets.push(phi_d(design.rate(), &params)? - oracle::log_det_spd(&oracle_alpha)?);
                    }
                    report.instances += 1;
                }
            }
        }
    }

    if config.include_det && !offsets.is_empty() {
        let min = offsets.iter().copied().fold(f64::INFINITY, f64::min);
        let max = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        report.det_offset = Some(DetOffset {
            min,
            max,
            max_abs: min.abs().max(max.abs()),
            spread: max - min,
        });
    }
    Ok(report)
}
