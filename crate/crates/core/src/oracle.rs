//! Brute-force reference path through the general linear mixed model
//! `Y = Xβ + Zγ + ε`.
//!
//! The two-group model is assembled into dense `X`, `Z`, `G`, `R` and the
//! Henderson mixed model equations are solved and inverted directly. Nothing
//! here exploits the block structure used by the closed forms in
//! [`crate::model`], so agreement between the two paths is meaningful.

use nalgebra::{DMatrix, DVector};

use crate::data::ObservationSet;
use crate::error::{RcrError, Result};
use crate::model::{ExactDesign, ModelParams};

/// Dense design and covariance matrices of the two-group model.
#[derive(Debug, Clone)]
pub struct MixedModelMatrices {
    /// `NK × 2` fixed-effects design.
    pub x: DMatrix<f64>,
    /// `NK × 2N` random-effects design.
    pub z: DMatrix<f64>,
    /// `2N × 2N` random-effects covariance.
    pub g: DMatrix<f64>,
    /// `NK × NK` error covariance.
    pub r: DMatrix<f64>,
    pub design: ExactDesign,
    pub k: usize,
}

fn unit_row(m: usize, len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(1, len, |_, j| if j == m { 1.0 } else { 0.0 })
}

fn ones(rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_element(rows, cols, 1.0)
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

pub fn assemble(params: &ModelParams, design: &ExactDesign) -> Result<MixedModelMatrices> {
    params.check_design(design)?;
    for (field, value) in [("u", params.u()), ("v", params.v())] {
        if value.is_nan() || value <= 0.0 {
            return Err(RcrError::OracleDispersion { field, value });
        }
    }
    let (n1, n2, k) = (design.n1(), design.n2(), params.k());
    let n = n1 + n2;
    let e1 = unit_row(0, 2);
    let e2 = unit_row(1, 2);

    let x = vstack(&(ones(k * n1, 1) * &e1), &(ones(k * n2, 1) * &e2));
    let z = block_diag(
        &DMatrix::identity(n1, n1).kronecker(&(ones(k, 1) * &e1)),
        &DMatrix::identity(n2, n2).kronecker(&(ones(k, 1) * &e2)),
    );
    let cell = DMatrix::from_diagonal(&DVector::from_vec(vec![
        params.sigma1_sq() * params.u(),
        params.sigma2_sq() * params.v(),
    ]));
    let g = DMatrix::identity(n, n).kronecker(&cell);
    let r = block_diag(
        &(DMatrix::identity(k * n1, k * n1) * params.sigma1_sq()),
        &(DMatrix::identity(k * n2, k * n2) * params.sigma2_sq()),
    );
    Ok(MixedModelMatrices {
        x,
        z,
        g,
        r,
        design: *design,
        k,
    })
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| RcrError::Singular(format!("{what} is not positive definite")))
}

impl MixedModelMatrices {
    pub fn n(&self) -> usize {
        self.design.total()
    }

    /// The `(2 + 2N)`-square Henderson coefficient matrix.
    pub fn henderson_matrix(&self) -> Result<DMatrix<f64>> {
        let r_inv = spd_inverse(&self.r, "R")?;
        let g_inv = spd_inverse(&self.g, "G")?;
        let xt_ri = self.x.transpose() * &r_inv;
        let zt_ri = self.z.transpose() * &r_inv;
        let xtx = &xt_ri * &self.x;
        if xtx.clone().cholesky().is_none() {
            return Err(RcrError::Singular("X is rank deficient".into()));
        }
        let p = self.x.ncols();
        let q = self.z.ncols();
        let mut c = DMatrix::zeros(p + q, p + q);
        c.view_mut((0, 0), (p, p)).copy_from(&xtx);
        let xtz = &xt_ri * &self.z;
        c.view_mut((0, p), (p, q)).copy_from(&xtz);
        c.view_mut((p, 0), (q, p)).copy_from(&xtz.transpose());
        c.view_mut((p, p), (q, q)).copy_from(&(&zt_ri * &self.z + g_inv));
        Ok(c)
    }

    fn rhs(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.x.nrows() {
            return Err(RcrError::DataMismatch(format!(
                "observation vector has length {}, model expects {}",
                y.len(),
                self.x.nrows()
            )));
        }
        let r_inv = spd_inverse(&self.r, "R")?;
        let ry = r_inv * y;
        let top = self.x.transpose() * &ry;
        let bottom = self.z.transpose() * &ry;
        Ok(DVector::from_iterator(
            top.len() + bottom.len(),
            top.iter().chain(bottom.iter()).copied(),
        ))
    }
}

/// Solution `(β̂, γ̂)` of the mixed model equations.
#[derive(Debug, Clone)]
pub struct MmeSolution {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl MmeSolution {
    /// `θ̂_i = β̂ + γ̂_i` as `(μ̂_{1i}, μ̂_{2i})` pairs.
    pub fn theta(&self) -> Vec<(f64, f64)> {
        (0..self.gamma.len() / 2)
            .map(|i| (self.beta[0] + self.gamma[2 * i], self.beta[1] + self.gamma[2 * i + 1]))
            .collect()
    }

    pub fn alpha0(&self) -> f64 {
        self.beta[0] - self.beta[1]
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.theta().into_iter().map(|(a, b)| a - b).collect()
    }
}

pub fn solve_mme(model: &MixedModelMatrices, y: &DVector<f64>) -> Result<MmeSolution> {
    let c = model.henderson_matrix()?;
    let rhs = model.rhs(y)?;
    let sol = c
        .cholesky()
        .ok_or_else(|| RcrError::Singular("Henderson coefficient matrix is not positive definite".into()))?
        .solve(&rhs);
    let p = model.x.ncols();
    Ok(MmeSolution {
        beta: sol.rows(0, p).into_owned(),
        gamma: sol.rows(p, sol.len() - p).into_owned(),
    })
}

/// Convenience wrapper stacking an [`ObservationSet`] in model row order.
pub fn solve_observations(model: &MixedModelMatrices, data: &ObservationSet) -> Result<MmeSolution> {
    solve_mme(model, &DVector::from_column_slice(data.stacked()))
}

/// `Cov(β̂, γ̂ − γ)`, the inverse of the Henderson coefficient matrix.
#[derive(Debug, Clone)]
pub struct JointMse {
    pub matrix: DMatrix<f64>,
}

impl JointMse {
    fn n_fixed(&self) -> usize {
        2
    }

    pub fn c11(&self) -> DMatrix<f64> {
        let p = self.n_fixed();
        self.matrix.view((0, 0), (p, p)).into_owned()
    }

    pub fn c12(&self) -> DMatrix<f64> {
        let p = self.n_fixed();
        let q = self.matrix.ncols() - p;
        self.matrix.view((0, p), (p, q)).into_owned()
    }

    pub fn c22(&self) -> DMatrix<f64> {
        let p = self.n_fixed();
        let q = self.matrix.ncols() - p;
        self.matrix.view((p, p), (q, q)).into_owned()
    }
}

pub fn joint_mse(model: &MixedModelMatrices) -> Result<JointMse> {
    let c = model.henderson_matrix()?;
    let matrix = spd_inverse(&c, "Henderson coefficient matrix")?;
    Ok(JointMse { matrix })
}

/// `Cov(θ̂ − θ)` for the stacked `θ = (θ_1, …, θ_N)`.
#[derive(Debug, Clone)]
pub struct ThetaMse {
    pub matrix: DMatrix<f64>,
    pub design: ExactDesign,
}

impl ThetaMse {
    pub fn h11(&self) -> DMatrix<f64> {
        let a = 2 * self.design.n1();
        self.matrix.view((0, 0), (a, a)).into_owned()
    }

    pub fn h12(&self) -> DMatrix<f64> {
        let (a, b) = (2 * self.design.n1(), 2 * self.design.n2());
        self.matrix.view((0, a), (a, b)).into_owned()
    }

    pub fn h22(&self) -> DMatrix<f64> {
        let (a, b) = (2 * self.design.n1(), 2 * self.design.n2());
        self.matrix.view((a, a), (b, b)).into_owned()
    }
}

/// Four-term projection `(𝟙⊗I)C11(𝟙ᵀ⊗I) + (𝟙⊗I)C12 + C12ᵀ(𝟙ᵀ⊗I) + C22`.
pub fn theta_mse(joint: &JointMse, design: &ExactDesign) -> Result<ThetaMse> {
    let n = design.total();
    if joint.matrix.nrows() != 2 + 2 * n {
        return Err(RcrError::DataMismatch(format!(
            "joint MSE has dimension {}, design needs {}",
            joint.matrix.nrows(),
            2 + 2 * n
        )));
    }
    let lift = ones(n, 1).kronecker(&DMatrix::<f64>::identity(2, 2));
    let c12 = joint.c12();
    let matrix =
        &lift * joint.c11() * lift.transpose() + &lift * &c12 + c12.transpose() * lift.transpose() + joint.c22();
    Ok(ThetaMse {
        matrix,
        design: *design,
    })
}

/// `P·Cov(θ̂ − θ)·Pᵀ` with `P = I_N ⊗ (1, −1)`, mapping each `θ_i` to
/// `α_i = μ_{1i} − μ_{2i}`.
pub fn alpha_mse_from_theta(theta: &ThetaMse) -> DMatrix<f64> {
    let n = theta.design.total();
    let contrast = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
    let p = DMatrix::<f64>::identity(n, n).kronecker(&contrast);
    &p * &theta.matrix * p.transpose()
}

/// Closed-form partitions of the joint MSE matrix, assembled densely.
///
/// For an individual in one group the counterfactual component carries the
/// other group's error variance: the `(γ_{2i}, γ_{2i})` entry is `σ₂²v` for
/// `i ∈ G1` and `(γ_{1i}, γ_{1i})` is `σ₁²u` for `i ∈ G2`.
pub fn joint_mse_closed_form(params: &ModelParams, design: &ExactDesign) -> Result<DMatrix<f64>> {
    params.check_design(design)?;
    let (n1, n2) = (design.n1(), design.n2());
    let n = n1 + n2;
    let (s1, s2, u, v, k) = (
        params.sigma1_sq(),
        params.sigma2_sq(),
        params.u(),
        params.v(),
        params.k() as f64,
    );
    let (a, b) = (k * u + 1.0, k * v + 1.0);
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let mut c = DMatrix::zeros(2 + 2 * n, 2 + 2 * n);
    c[(0, 0)] = s1 * a / (k * n1f);
    c[(1, 1)] = s2 * b / (k * n2f);
    for i in 0..n {
        let (g1, g2) = (2 + 2 * i, 3 + 2 * i);
        if i < n1 {
            c[(0, g1)] = -s1 * u / n1f;
            c[(g1, 0)] = c[(0, g1)];
            c[(g1, g1)] = s1 * u / a;
            c[(g2, g2)] = s2 * v;
            for j in 0..n1 {
                c[(g1, 2 + 2 * j)] += s1 * k * u * u / (n1f * a);
            }
        } else {
            c[(1, g2)] = -s2 * v / n2f;
            c[(g2, 1)] = c[(1, g2)];
            c[(g1, g1)] = s1 * u;
            c[(g2, g2)] = s2 * v / b;
            for j in n1..n {
                c[(g2, 3 + 2 * j)] += s2 * k * v * v / (n2f * b);
            }
        }
    }
    Ok(c)
}

/// Largest absolute entry of `a − b` divided by the largest absolute entry of `b`.
pub fn relative_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    let scale = b.amax();
    let diff = (a - b).amax();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `log det` of a symmetric positive definite matrix via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| RcrError::Singular("matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}
