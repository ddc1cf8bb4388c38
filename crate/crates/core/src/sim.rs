//! Synthetic data from the two-group model and Monte Carlo checks of the
//! variance and MSE formulas.
//!
//! Each replicate draws from its own ChaCha stream selected by
//! `(seed, replicate_index)`, so replicates can be generated in any order or
//! in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::ObservationSet;
use crate::error::{RcrError, Result};
use crate::model::{self, ExactDesign, ModelParams};

pub const DEFAULT_Z: f64 = 4.0;

/// Replicates per aggregation chunk. Fixed so results do not depend on the
/// thread count.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSpec {
    pub params: ModelParams,
    pub design: ExactDesign,
    /// Population means `(μ₁, μ₂)`.
    pub theta0: (f64, f64),
    pub replications: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(
        params: ModelParams,
        design: ExactDesign,
        theta0: (f64, f64),
        replications: usize,
        seed: u64,
    ) -> Result<Self> {
        params.check_design(&design)?;
        if replications == 0 {
            return Err(RcrError::invalid("replications", "must be >= 1"));
        }
        if !(theta0.0.is_finite() && theta0.1.is_finite()) {
            return Err(RcrError::invalid("theta0", "must be finite"));
        }
        Ok(Self {
            params,
            design,
            theta0,
            replications,
            seed,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.theta0.0 - self.theta0.1
    }
}

fn replicate_rng(seed: u64, replicate_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_index);
    rng
}

/// Draws one dataset and returns it with the realized contrasts
/// `α_i = μ_{1i} − μ_{2i}`.
///
/// Per individual the draw order is `μ_{1i}`, `μ_{2i}`, then the `K` errors.
pub fn simulate_dataset(spec: &SimulationSpec, replicate_index: u64) -> (ObservationSet, Vec<f64>) {
    let p = &spec.params;
    let mut rng = replicate_rng(spec.seed, replicate_index);
    let (n1, n) = (spec.design.n1(), spec.design.total());
    let k = p.k();
    let sd_mu1 = (p.sigma1_sq() * p.u()).sqrt();
    let sd_mu2 = (p.sigma2_sq() * p.v()).sqrt();
    let sd_e1 = p.sigma1_sq().sqrt();
    let sd_e2 = p.sigma2_sq().sqrt();

    let mut values = Vec::with_capacity(n * k);
    let mut alpha = Vec::with_capacity(n);
    for i in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let mu1 = spec.theta0.0 + sd_mu1 * z1;
        let mu2 = spec.theta0.1 + sd_mu2 * z2;
        alpha.push(mu1 - mu2);
        let (mean, sd) = if i < n1 { (mu1, sd_e1) } else { (mu2, sd_e2) };
        for _ in 0..k {
            let e: f64 = StandardNormal.sample(&mut rng);
            values.push(mean + sd * e);
        }
    }
    let data = ObservationSet::new(n1, n - n1, k, values).expect("simulated values are finite and well-shaped");
    (data, alpha)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// First and second raw moments of a sample.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: usize,
    s1: CompensatedSum,
    s2: CompensatedSum,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        self.s1.add(x);
        self.s2.add(x * x);
    }

    fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.s1.merge(&other.s1);
        self.s2.merge(&other.s2);
    }

    fn mean(&self) -> f64 {
        self.s1.value() / self.count as f64
    }

    /// Standard error of the mean, using the unbiased sample variance.
    fn standard_error(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return f64::INFINITY;
        }
        let mean = self.mean();
        let var = ((self.s2.value() - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Pairs of individuals whose error covariance is tracked: one within group 1
/// (when `n1 ≥ 2`) and one across groups.
fn tracked_pairs(design: &ExactDesign) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    if design.n1() >= 2 {
        pairs.push((0, 1));
    }
    pairs.push((0, design.n1()));
    pairs
}

/// Per-replicate statistics, one [`Moments`] per tracked quantity.
#[derive(Debug, Clone)]
struct Accumulator {
    alpha0_err: Moments,
    alpha0_sq: Moments,
    blup_err: Vec<Moments>,
    blup_sq: Vec<Moments>,
    pair_prod: Vec<Moments>,
}

impl Accumulator {
    fn new(n: usize, pairs: usize) -> Self {
        Self {
            alpha0_err: Moments::default(),
            alpha0_sq: Moments::default(),
            blup_err: vec![Moments::default(); n],
            blup_sq: vec![Moments::default(); n],
            pair_prod: vec![Moments::default(); pairs],
        }
    }

    fn merge(&mut self, other: &Self) {
        self.alpha0_err.merge(&other.alpha0_err);
        self.alpha0_sq.merge(&other.alpha0_sq);
        for (a, b) in self.blup_err.iter_mut().zip(&other.blup_err) {
            a.merge(b);
        }
        for (a, b) in self.blup_sq.iter_mut().zip(&other.blup_sq) {
            a.merge(b);
        }
        for (a, b) in self.pair_prod.iter_mut().zip(&other.pair_prod) {
            a.merge(b);
        }
    }
}

/// One empirical quantity compared with its theoretical value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub empirical: f64,
    pub theoretical: f64,
    pub standard_error: f64,
    pub pass: bool,
}

impl Check {
    fn new(m: &Moments, theoretical: f64, z: f64) -> Self {
        let empirical = m.mean();
        let standard_error = m.standard_error();
        Self {
            empirical,
            theoretical,
            standard_error,
            pass: (empirical - theoretical).abs() <= z * standard_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub replications: usize,
    pub seed: u64,
    pub z: f64,
    /// Mean of `α̂₀ − α₀` against 0.
    pub alpha0_bias: Check,
    /// Mean of `(α̂₀ − α₀)²` against `var(α̂₀)`.
    pub alpha0_variance: Check,
    /// Mean of `α̂_i − α_i` against 0, per individual.
    pub blup_bias: Vec<Check>,
    /// Mean of `(α̂_i − α_i)²` against the MSE diagonal, per individual.
    pub mse_diagonal: Vec<Check>,
    /// Mean of `(α̂_i − α_i)(α̂_j − α_j)` against the off-diagonal MSE entry.
    pub mse_pairs: Vec<PairCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.alpha0_bias.pass
            && self.alpha0_variance.pass
            && self.blup_bias.iter().all(|c| c.pass)
            && self.mse_diagonal.iter().all(|c| c.pass)
            && self.mse_pairs.iter().all(|p| p.check.pass)
    }
}

fn run_chunk(spec: &SimulationSpec, start: usize, end: usize, pairs: &[(usize, usize)]) -> Accumulator {
    let n = spec.design.total();
    let mut acc = Accumulator::new(n, pairs.len());
    let alpha0 = spec.alpha0();
    let mut err = vec![0.0; n];
    for r in start..end {
        let (data, alpha) = simulate_dataset(spec, r as u64);
        let a0 = model::blue_alpha0(&data).expect("both groups nonempty") - alpha0;
        acc.alpha0_err.push(a0);
        acc.alpha0_sq.push(a0 * a0);
        let blup = model::blup_alpha_all(&data, &spec.params).expect("data matches params");
        for i in 0..n {
            err[i] = blup[i] - alpha[i];
            acc.blup_err[i].push(err[i]);
            acc.blup_sq[i].push(err[i] * err[i]);
        }
        for (slot, &(i, j)) in pairs.iter().enumerate() {
            acc.pair_prod[slot].push(err[i] * err[j]);
        }
    }
    acc
}

/// Runs the replications and compares empirical moments with theory at
/// threshold `z` standard errors.
pub fn validate(spec: &SimulationSpec, z: f64) -> Result<ValidationReport> {
    if !(z.is_finite() && z > 0.0) {
        return Err(RcrError::invalid("z", format!("must be > 0, got {z}")));
    }
    let n = spec.design.total();
    let pairs = tracked_pairs(&spec.design);
    let chunks: Vec<(usize, usize)> = (0..spec.replications)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(spec.replications)))
        .collect();
    let partials: Vec<Accumulator> = chunks.par_iter().map(|&(s, e)| run_chunk(spec, s, e, &pairs)).collect();
    let mut total = Accumulator::new(n, pairs.len());
    for part in &partials {
        total.merge(part);
    }

    let var = model::var_blue_alpha0(&spec.params, &spec.design)?;
    let mse = model::mse_matrix_alpha(&spec.params, &spec.design)?;
    Ok(ValidationReport {
        replications: spec.replications,
        seed: spec.seed,
        z,
        alpha0_bias: Check::new(&total.alpha0_err, 0.0, z),
        alpha0_variance: Check::new(&total.alpha0_sq, var, z),
        blup_bias: total.blup_err.iter().map(|m| Check::new(m, 0.0, z)).collect(),
        mse_diagonal: total
            .blup_sq
            .iter()
            .enumerate()
            .map(|(i, m)| Check::new(m, mse.entry(i, i), z))
            .collect(),
        mse_pairs: pairs
            .iter()
            .zip(&total.pair_prod)
            .map(|(&(i, j), m)| PairCheck {
                i,
                j,
                check: Check::new(m, mse.entry(i, j), z),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(u: f64, v: f64, k: usize, n1: usize, n2: usize, reps: usize) -> SimulationSpec {
        let params = ModelParams::new(1.0, 1.0, u, v, k, n1 + n2).unwrap();
        SimulationSpec::new(params, ExactDesign::new(n1, n2).unwrap(), (2.0, -1.0), reps, 7).unwrap()
    }

    #[test]
    fn deterministic_per_replicate() {
        let s = spec(1.0, 1.0, 3, 2, 3, 1);
        let a = simulate_dataset(&s, 5);
        let b = simulate_dataset(&s, 5);
        assert_eq!(a, b);
        assert_ne!(simulate_dataset(&s, 6).0, a.0);
    }

    #[test]
    fn vanishing_noise_gives_group_means() {
        let params = ModelParams::new(1e-12, 1e-12, 0.0, 0.0, 4, 5).unwrap();
        let s = SimulationSpec::new(params, ExactDesign::new(2, 3).unwrap(), (3.0, -2.0), 1, 1).unwrap();
        let (data, alpha) = simulate_dataset(&s, 0);
        for (idx, y) in data.stacked().iter().enumerate() {
            let expect = if idx < 8 { 3.0 } else { -2.0 };
            assert!((y - expect).abs() < 1e-4);
        }
        assert!(alpha.iter().all(|a| (a - 5.0).abs() < 1e-9));
    }

    #[test]
    fn individual_means_follow_total_variance() {
        // Var(Ȳ_{1i}) = σ₁²(u + 1/K) across individuals.
        let (u, k, n1) = (0.5, 4, 10_000);
        let s = spec(u, 1.0, k, n1, 1, 1);
        let (data, _) = simulate_dataset(&s, 0);
        let means: Vec<f64> = (0..n1).map(|i| data.individual_mean(i).unwrap()).collect();
        let m = means.iter().sum::<f64>() / n1 as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n1 - 1) as f64;
        let theory = u + 1.0 / k as f64;
        // sampling SE of a Gaussian variance is theory·sqrt(2/(n−1))
        let se = theory * (2.0 / (n1 - 1) as f64).sqrt();
        assert!((var - theory).abs() < 4.0 * se, "var {var} vs {theory}");
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn report_reproducible_and_passing() {
        let s = spec(1.0, 1.0, 2, 2, 3, 20_000);
        let a = validate(&s, DEFAULT_Z).unwrap();
        let b = validate(&s, DEFAULT_Z).unwrap();
        assert_eq!(a, b);
        assert!(a.all_pass(), "{a:#?}");
        assert_eq!(a.mse_pairs.len(), 2);
        assert!(a.alpha0_variance.standard_error > 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = spec(0.5, 2.0, 3, 3, 2, 5_000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| validate(&s, DEFAULT_Z).unwrap());
        let b = four.install(|| validate(&s, DEFAULT_Z).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let params = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1, 4).unwrap();
        assert!(SimulationSpec::new(params, ExactDesign::new(1, 1).unwrap(), (0.0, 0.0), 10, 0).is_err());
        assert!(SimulationSpec::new(params, ExactDesign::new(2, 2).unwrap(), (0.0, 0.0), 0, 0).is_err());
    }
}
