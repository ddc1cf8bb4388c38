//! The two-group random coefficient regression model and its closed-form
//! estimation and prediction results.
//!
//! Individual `i` carries parameters `θ_i = (μ_{1i}, μ_{2i})` with mean
//! `(μ_1, μ_2)` and covariance `diag(σ₁²u, σ₂²v)`. Individuals `0..n1` receive
//! treatment 1 and are observed `K` times with error variance `σ₁²`; the
//! remaining `n2` receive treatment 2 with error variance `σ₂²`. The targets
//! are the population contrast `α₀ = μ₁ − μ₂` and the individual contrasts
//! `α_i = μ_{1i} − μ_{2i}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Group, ObservationSet};
use crate::error::{RcrError, Result};

/// Variance components and dimensions of the two-group model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    sigma1_sq: f64,
    sigma2_sq: f64,
    u: f64,
    v: f64,
    k: usize,
    n: usize,
}

impl ModelParams {
    pub fn new(sigma1_sq: f64, sigma2_sq: f64, u: f64, v: f64, k: usize, n: usize) -> Result<Self> {
        if !(sigma1_sq.is_finite() && sigma1_sq > 0.0) {
            return Err(RcrError::invalid(
                "sigma1_sq",
                format!("must be finite and > 0, got {sigma1_sq}"),
            ));
        }
        if !(sigma2_sq.is_finite() && sigma2_sq > 0.0) {
            return Err(RcrError::invalid(
                "sigma2_sq",
                format!("must be finite and > 0, got {sigma2_sq}"),
            ));
        }
        if !(u.is_finite() && u >= 0.0) {
            return Err(RcrError::invalid("u", format!("must be finite and >= 0, got {u}")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(RcrError::invalid("v", format!("must be finite and >= 0, got {v}")));
        }
        if k < 1 {
            return Err(RcrError::invalid("K", "must be >= 1"));
        }
        if n < 2 {
            return Err(RcrError::invalid("N", format!("must be >= 2, got {n}")));
        }
        Ok(Self {
            sigma1_sq,
            sigma2_sq,
            u,
            v,
            k,
            n,
        })
    }

    /// Same variances and dimensions with new dispersions.
    pub fn with_dispersions(&self, u: f64, v: f64) -> Result<Self> {
        Self::new(self.sigma1_sq, self.sigma2_sq, u, v, self.k, self.n)
    }

    pub fn sigma1_sq(&self) -> f64 {
        self.sigma1_sq
    }

    pub fn sigma2_sq(&self) -> f64 {
        self.sigma2_sq
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// Observations per individual.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Total number of individuals.
    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn kf(&self) -> f64 {
        self.k as f64
    }

    /// `Ku + 1`
    pub(crate) fn shrink1(&self) -> f64 {
        self.kf() * self.u + 1.0
    }

    /// `Kv + 1`
    pub(crate) fn shrink2(&self) -> f64 {
        self.kf() * self.v + 1.0
    }

    pub fn equal_error_variances(&self) -> bool {
        self.sigma1_sq == self.sigma2_sq
    }

    /// Checks that `design` partitions exactly `N` individuals.
    pub fn check_design(&self, design: &ExactDesign) -> Result<()> {
        if design.total() != self.n {
            return Err(RcrError::DesignMismatch {
                n1: design.n1,
                n2: design.n2,
                total: self.n,
            });
        }
        Ok(())
    }
}

/// Integer group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactDesign {
    n1: usize,
    n2: usize,
}

impl ExactDesign {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(RcrError::DegenerateDesign);
        }
        Ok(Self { n1, n2 })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    /// Allocation rate `n1 / N`.
    pub fn rate(&self) -> ApproxDesign {
        ApproxDesign(self.n1 as f64 / self.total() as f64)
    }

    pub fn group_of(&self, index: usize) -> Result<Group> {
        if index >= self.total() {
            return Err(RcrError::IndexOutOfRange {
                index,
                total: self.total(),
            });
        }
        Ok(if index < self.n1 { Group::G1 } else { Group::G2 })
    }
}

/// Allocation rate `w` to group 1, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct ApproxDesign(f64);

impl ApproxDesign {
    pub fn new(w: f64) -> Result<Self> {
        if w.is_nan() {
            return Err(RcrError::invalid("w", "is NaN"));
        }
        if w <= 0.0 || w >= 1.0 {
            return Err(RcrError::BoundaryDivergence(w));
        }
        Ok(Self(w))
    }

    pub fn w(&self) -> f64 {
        self.0
    }
}

/// Mean squared error matrix of the BLUP vector, stored as block scalars:
/// `A11 = j1·𝟙𝟙ᵀ + d1·I`, `A12 = j12·𝟙𝟙ᵀ`, `A22 = j2·𝟙𝟙ᵀ + d2·I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseMatrix {
    pub n1: usize,
    pub n2: usize,
    pub j1: f64,
    pub d1: f64,
    pub j12: f64,
    pub j2: f64,
    pub d2: f64,
}

impl MseMatrix {
    pub fn dim(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let in_g1 = |x: usize| x < self.n1;
        match (in_g1(i), in_g1(j)) {
            (true, true) => self.j1 + if i == j { self.d1 } else { 0.0 },
            (false, false) => self.j2 + if i == j { self.d2 } else { 0.0 },
            _ => self.j12,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entry(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.n1 as f64 * (self.j1 + self.d1) + self.n2 as f64 * (self.j2 + self.d2)
    }

    /// Determinant via the matrix determinant lemma on the two rank-one
    /// block directions.
    pub fn det(&self) -> f64 {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        let core = (self.d1 + n1 * self.j1) * (self.d2 + n2 * self.j2) - n1 * n2 * self.j12 * self.j12;
        self.d1.powi(self.n1 as i32 - 1) * self.d2.powi(self.n2 as i32 - 1) * core
    }

    /// Natural log of the determinant, computed without forming the power
    /// terms so large `N` does not overflow.
    pub fn log_det(&self) -> f64 {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        let core = (self.d1 + n1 * self.j1) * (self.d2 + n2 * self.j2) - n1 * n2 * self.j12 * self.j12;
        (n1 - 1.0) * self.d1.ln() + (n2 - 1.0) * self.d2.ln() + core.ln()
    }
}

fn group_means(data: &ObservationSet) -> Result<(f64, f64)> {
    Ok((data.group_mean(Group::G1)?, data.group_mean(Group::G2)?))
}

fn check_data(data: &ObservationSet, params: &ModelParams) -> Result<()> {
    if data.k() != params.k() {
        return Err(RcrError::DataMismatch(format!(
            "data has K = {} observations per individual, params have K = {}",
            data.k(),
            params.k()
        )));
    }
    if data.n() != params.n() {
        return Err(RcrError::DataMismatch(format!(
            "data has N = {} individuals, params have N = {}",
            data.n(),
            params.n()
        )));
    }
    Ok(())
}

/// BLUE of the population contrast: difference of the two group grand means.
pub fn blue_alpha0(data: &ObservationSet) -> Result<f64> {
    let (m1, m2) = group_means(data)?;
    Ok(m1 - m2)
}

pub fn var_blue_alpha0(params: &ModelParams, design: &ExactDesign) -> Result<f64> {
    params.check_design(design)?;
    let k = params.kf();
    Ok(params.sigma1_sq * params.shrink1() / (k * design.n1 as f64)
        + params.sigma2_sq * params.shrink2() / (k * design.n2 as f64))
}

/// Predicted `(μ̂_{1i}, μ̂_{2i})` for individual `index` (0-based). The own-group
/// component is shrunk toward the group mean; the counterfactual component is
/// the other group's mean.
pub fn blup_mu_components(data: &ObservationSet, params: &ModelParams, index: usize) -> Result<(f64, f64)> {
    check_data(data, params)?;
    let group = data.group_of(index)?;
    let (m1, m2) = group_means(data)?;
    let own = data.individual_mean(index)?;
    let k = params.kf();
    Ok(match group {
        Group::G1 => {
            let s = params.shrink1();
            (k * params.u / s * own + m1 / s, m2)
        }
        Group::G2 => {
            let s = params.shrink2();
            (m1, k * params.v / s * own + m2 / s)
        }
    })
}

/// BLUP of the individual contrast `α_i` for individual `index` (0-based).
pub fn blup_alpha_i(data: &ObservationSet, params: &ModelParams, index: usize) -> Result<f64> {
    let (mu1, mu2) = blup_mu_components(data, params, index)?;
    Ok(mu1 - mu2)
}

/// BLUPs for every individual, in index order.
pub fn blup_alpha_all(data: &ObservationSet, params: &ModelParams) -> Result<Vec<f64>> {
    (0..data.n()).map(|i| blup_alpha_i(data, params, i)).collect()
}

/// Block form of `Cov(α̂ − α)`.
///
/// The diagonal terms combine the shrunken prediction error of the observed
/// component with the full dispersion of the unobserved one:
/// `d1 = σ₁²u/(Ku+1) + σ₂²v` and `d2 = σ₁²u + σ₂²v/(Kv+1)`.
pub fn mse_matrix_alpha(params: &ModelParams, design: &ExactDesign) -> Result<MseMatrix> {
    params.check_design(design)?;
    let k = params.kf();
    let (s1, s2) = (params.sigma1_sq, params.sigma2_sq);
    let (a, b) = (params.shrink1(), params.shrink2());
    let (n1, n2) = (design.n1 as f64, design.n2 as f64);
    Ok(MseMatrix {
        n1: design.n1,
        n2: design.n2,
        j1: s1 / (k * a * n1) + s2 * b / (k * n2),
        d1: s1 * params.u / a + s2 * params.v,
        j12: s1 / (k * n1) + s2 / (k * n2),
        j2: s1 * a / (k * n1) + s2 / (k * b * n2),
        d2: s1 * params.u + s2 * params.v / b,
    })
}
