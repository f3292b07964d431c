//! Synthetic designs and the Monte Carlo runner.
//!
//! * Example 1: scalar Z ~ N(μ, σ²), θᵢ ∈ {θ⁰₁, θ⁰₂} with probability ½ each.
//! * Example 2: Z ~ N(μ·𝟏, σ·[[1, .3], [.3, 1]]), two groups of 2-vectors.
//! * Example 3: X, Z three-dimensional with AR(0.8) covariances, common
//!   cross-correlation ρ, and θᵢ ~ N(3·𝟏, 4·I) independently per row.
//!
//! Every replication draws from its own ChaCha stream of the master seed, so
//! serial and parallel runs produce identical summaries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::{moments, Dataset, IndexSubset};
use crate::error::{Error, Result};
use crate::estimators::fit_beta;
use crate::linalg::least_squares;
use crate::tuning::{fit_tuned, TuningConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    One,
    Two,
    Three,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub example: Example,
    pub n: usize,
    /// Mean and spread of each Z component (Examples 1–2).
    pub mu: f64,
    pub sigma: f64,
    /// Group coefficient vectors, drawn with equal probability (Examples 1–2).
    pub theta_groups: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    /// Equicorrelation of the X components (Examples 1–2).
    pub x_corr: f64,
    /// Correlation between every X component and every Z component (Example 3).
    pub rho_xz: f64,
    pub mu_x: f64,
    pub mu_z: f64,
    pub noise_sd: f64,
    /// Example 2 scales the Z correlation matrix by σ; set to use σ² instead.
    pub sigma_squared_cov: bool,
}

impl SimDesign {
    pub fn example1(n: usize, mu: f64, sigma: f64, theta1: f64, theta2: f64) -> Self {
        SimDesign {
            example: Example::One,
            n,
            mu,
            sigma,
            theta_groups: vec![vec![theta1], vec![theta2]],
            beta: vec![2.0, 2.0, 2.0],
            x_corr: 0.3,
            rho_xz: 0.0,
            mu_x: 0.0,
            mu_z: 0.0,
            noise_sd: 0.5,
            sigma_squared_cov: false,
        }
    }

    pub fn example2(n: usize, mu: f64, sigma: f64, theta1: [f64; 2], theta2: [f64; 2]) -> Self {
        SimDesign {
            example: Example::Two,
            theta_groups: vec![theta1.to_vec(), theta2.to_vec()],
            ..Self::example1(n, mu, sigma, 0.0, 0.0)
        }
    }

    pub fn example3(n: usize, rho_xz: f64, mu_x: f64, mu_z: f64) -> Self {
        SimDesign {
            example: Example::Three,
            n,
            mu: 0.0,
            sigma: 0.0,
            theta_groups: Vec::new(),
            beta: vec![2.0, -2.0, 3.0],
            x_corr: 0.0,
            rho_xz,
            mu_x,
            mu_z,
            noise_sd: 0.5,
            sigma_squared_cov: false,
        }
    }

    pub fn d_x(&self) -> usize {
        3
    }

    pub fn d_z(&self) -> usize {
        match self.example {
            Example::One => 1,
            Example::Two => 2,
            Example::Three => 3,
        }
    }

    /// Number of true groups; `None` for Example 3 where every θᵢ differs.
    pub fn true_k(&self) -> Option<usize> {
        match self.example {
            Example::Three => None,
            _ => Some(self.theta_groups.len()),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("need at least 2 rows, got {}", self.n));
        }
        if self.beta.len() != self.d_x() {
            return bad(format!("beta must have {} entries", self.d_x()));
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be non-negative".into());
        }
        if self.example != Example::Three {
            if self.theta_groups.is_empty() {
                return bad("at least one theta group is required".into());
            }
            if self.theta_groups.iter().any(|t| t.len() != self.d_z()) {
                return bad(format!("theta groups must have {} entries", self.d_z()));
            }
            if !(self.sigma >= 0.0) {
                return bad("sigma must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// What generated a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Group of each row; `None` for Example 3.
    pub labels: Option<Vec<usize>>,
    pub beta: DVector<f64>,
    /// n × d_Z, row i is θᵢ.
    pub theta: DMatrix<f64>,
}

fn cholesky_factor(cov: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidConfig(format!("{what} covariance is not positive definite")))
}

fn normal_vec<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    })
}

fn equicorrelation(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |a, b| if a == b { 1.0 } else { rho })
}

fn ar_covariance(dim: usize, phi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |a, b| phi.powi((a as i32 - b as i32).abs()))
}

/// Draws one dataset from the design with `rng`.
pub fn generate_with<R: Rng>(design: &SimDesign, rng: &mut R) -> Result<(Dataset, Truth)> {
    design.check()?;
    let (n, dx, dz) = (design.n, design.d_x(), design.d_z());
    let beta = DVector::from_column_slice(&design.beta);
    let mut x = DMatrix::zeros(n, dx);
    let mut z = DMatrix::zeros(n, dz);
    let mut theta = DMatrix::zeros(n, dz);
    let mut labels = Vec::with_capacity(n);

    match design.example {
        Example::One | Example::Two => {
            let lx = cholesky_factor(equicorrelation(dx, design.x_corr), "X")?;
            let lz = if design.example == Example::One {
                DMatrix::from_element(1, 1, design.sigma)
            } else {
                let scale = if design.sigma_squared_cov {
                    design.sigma * design.sigma
                } else {
                    design.sigma
                };
                cholesky_factor(equicorrelation(dz, 0.3) * scale, "Z")?
            };
            let k = design.theta_groups.len();
            for i in 0..n {
                x.set_row(i, &(&lx * normal_vec(rng, dx)).transpose());
                let zi = (&lz * normal_vec(rng, dz)).add_scalar(design.mu);
                z.set_row(i, &zi.transpose());
                let g = rng.random_range(0..k);
                labels.push(g);
                theta.set_row(
                    i,
                    &DVector::from_column_slice(&design.theta_groups[g]).transpose(),
                );
            }
        }
        Example::Three => {
            let sigma = ar_covariance(3, 0.8);
            let mut joint = DMatrix::zeros(6, 6);
            joint.view_mut((0, 0), (3, 3)).copy_from(&sigma);
            joint.view_mut((3, 3), (3, 3)).copy_from(&sigma);
            joint.view_mut((0, 3), (3, 3)).fill(design.rho_xz);
            joint.view_mut((3, 0), (3, 3)).fill(design.rho_xz);
            let l = cholesky_factor(joint, "joint (X, Z)")?;
            for i in 0..n {
                let draw = &l * normal_vec(rng, 6);
                for a in 0..3 {
                    x[(i, a)] = draw[a] + design.mu_x;
                    z[(i, a)] = draw[3 + a] + design.mu_z;
                    theta[(i, a)] = 3.0
                        + 2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                }
            }
        }
    }

    let mut y = &x * &beta;
    for i in 0..n {
        let zt: f64 = z
            .row(i)
            .iter()
            .zip(theta.row(i).iter())
            .map(|(a, b)| a * b)
            .sum();
        let eps: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        y[i] += zt + design.noise_sd * eps;
    }
    let truth = Truth {
        labels: (design.example != Example::Three).then_some(labels),
        beta,
        theta,
    };
    Ok((Dataset::new(y, x, z)?, truth))
}

/// Draws one dataset from `seed`.
pub fn generate(design: &SimDesign, seed: u64) -> Result<(Dataset, Truth)> {
    generate_with(design, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Mean, median and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if count % 2 == 1 {
            sorted[count / 2]
        } else {
            0.5 * (sorted[count / 2 - 1] + sorted[count / 2])
        };
        Some(Stat {
            mean,
            median,
            std,
            count,
        })
    }
}

/// How each replication is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub tuning: TuningConfig,
    /// Run the clustering; when false only β̂ is computed.
    pub cluster: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tuning: TuningConfig::default(),
            cluster: true,
        }
    }
}

/// Outcome of a single replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub k_hat: Option<usize>,
    /// Estimated group coefficients, one per discovered group.
    pub thetas: Vec<DVector<f64>>,
    pub group_sizes: Vec<usize>,
    pub lambda: Option<f64>,
    /// ‖β̂ − β⁰‖².
    pub beta_sq_error: f64,
    /// Estimate assigned to each true group by the best label permutation,
    /// present only when k̂ equals the true k.
    pub matched: Option<Vec<DVector<f64>>>,
    /// Estimate nearest to each true group coefficient.
    pub nearest: Vec<DVector<f64>>,
}

/// Aggregates over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub reps: usize,
    pub failures: usize,
    pub k_hat: Option<Stat>,
    /// Fraction of successful replications with k̂ equal to the true k.
    pub per: Option<f64>,
    /// Per true group, per component, over replications with k̂ = k.
    pub theta_matched: Vec<Vec<Stat>>,
    /// Per true group, per component, over all successful replications.
    pub theta_nearest: Vec<Vec<Stat>>,
    pub beta_mse: f64,
    /// Standard deviation of ‖β̂ − β⁰‖² across replications.
    pub beta_mse_std: f64,
    pub replications: Vec<Replication>,
}

/// Assignment of estimates to truths minimizing the total distance, by
/// enumeration of permutations. `estimates.len()` must equal `truths.len()`.
pub fn best_permutation(estimates: &[DVector<f64>], truths: &[DVector<f64>]) -> Vec<usize> {
    fn search(
        j: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        cost: f64,
        best: &mut (f64, Vec<usize>),
        dist: &[Vec<f64>],
    ) {
        if cost >= best.0 {
            return;
        }
        if j == dist.len() {
            *best = (cost, current.clone());
            return;
        }
        for e in 0..used.len() {
            if !used[e] {
                used[e] = true;
                current.push(e);
                search(j + 1, used, current, cost + dist[j][e], best, dist);
                current.pop();
                used[e] = false;
            }
        }
    }
    assert_eq!(estimates.len(), truths.len());
    let dist: Vec<Vec<f64>> = truths
        .iter()
        .map(|t| estimates.iter().map(|e| (e - t).norm()).collect())
        .collect();
    let mut best = (f64::INFINITY, Vec::new());
    search(
        0,
        &mut vec![false; estimates.len()],
        &mut Vec::new(),
        0.0,
        &mut best,
        &dist,
    );
    best.1
}

fn nearest_estimates(estimates: &[DVector<f64>], truths: &[DVector<f64>]) -> Vec<DVector<f64>> {
    truths
        .iter()
        .map(|t| {
            estimates
                .iter()
                .min_by(|a, b| (*a - t).norm().total_cmp(&(*b - t).norm()))
                .expect("at least one estimated group")
                .clone()
        })
        .collect()
}

fn run_replication(
    design: &SimDesign,
    pipeline: &PipelineConfig,
    seed: u64,
    rep: usize,
) -> Result<Replication> {
    let (data, truth) = generate_with(design, &mut replication_rng(seed, rep))?;
    let truths: Vec<DVector<f64>> = design
        .theta_groups
        .iter()
        .map(|t| DVector::from_column_slice(t))
        .collect();
    if !pipeline.cluster {
        let m = moments(&data, &IndexSubset::full(data.n()))?;
        let beta = fit_beta(&m)?;
        return Ok(Replication {
            k_hat: None,
            thetas: Vec::new(),
            group_sizes: Vec::new(),
            lambda: None,
            beta_sq_error: (&beta.beta_hat - &truth.beta).norm_squared(),
            matched: None,
            nearest: Vec::new(),
        });
    }
    let mut tuning = pipeline.tuning;
    tuning.seed = seed.wrapping_add(rep as u64);
    let fit = fit_tuned(&data, &tuning)?;
    let model = &fit.model;
    let thetas: Vec<DVector<f64>> = model
        .groups
        .iter()
        .map(|g| g.estimate.theta_hat.clone())
        .collect();
    let matched = (!truths.is_empty() && thetas.len() == truths.len()).then(|| {
        best_permutation(&thetas, &truths)
            .into_iter()
            .map(|e| thetas[e].clone())
            .collect()
    });
    let nearest = if truths.is_empty() {
        Vec::new()
    } else {
        nearest_estimates(&thetas, &truths)
    };
    Ok(Replication {
        k_hat: Some(model.k_hat),
        group_sizes: model.group_sizes(),
        thetas,
        lambda: Some(fit.lambda),
        beta_sq_error: (&model.beta.beta_hat - &truth.beta).norm_squared(),
        matched,
        nearest,
    })
}

fn component_stats(per_rep: &[&Vec<DVector<f64>>], groups: usize, dim: usize) -> Vec<Vec<Stat>> {
    (0..groups)
        .map(|j| {
            (0..dim)
                .filter_map(|l| {
                    let vals: Vec<f64> = per_rep.iter().map(|r| r[j][l]).collect();
                    Stat::of(&vals)
                })
                .collect()
        })
        .collect()
}

fn summarize(
    design: &SimDesign,
    reps: usize,
    outcomes: Vec<Result<Replication>>,
) -> Result<SimSummary> {
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    if failures * 10 > reps {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: reps,
        });
    }
    let ok: Vec<Replication> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let k_values: Vec<f64> = ok
        .iter()
        .filter_map(|r| r.k_hat)
        .map(|k| k as f64)
        .collect();
    let per = design.true_k().filter(|_| !k_values.is_empty()).map(|k| {
        k_values.iter().filter(|&&v| v == k as f64).count() as f64 / k_values.len() as f64
    });
    let groups = design.theta_groups.len();
    let matched: Vec<&Vec<DVector<f64>>> = ok.iter().filter_map(|r| r.matched.as_ref()).collect();
    let nearest: Vec<&Vec<DVector<f64>>> = ok
        .iter()
        .map(|r| &r.nearest)
        .filter(|v| !v.is_empty())
        .collect();
    let errors: Vec<f64> = ok.iter().map(|r| r.beta_sq_error).collect();
    let err_stat = Stat::of(&errors);
    Ok(SimSummary {
        reps,
        failures,
        k_hat: Stat::of(&k_values),
        per,
        theta_matched: component_stats(&matched, groups, design.d_z()),
        theta_nearest: component_stats(&nearest, groups, design.d_z()),
        beta_mse: err_stat.map_or(f64::NAN, |s| s.mean),
        beta_mse_std: err_stat.map_or(f64::NAN, |s| s.std),
        replications: ok,
    })
}

/// Runs `reps` independent replications of the full pipeline.
pub fn run_monte_carlo(
    design: &SimDesign,
    reps: usize,
    pipeline: &PipelineConfig,
    seed: u64,
) -> Result<SimSummary> {
    design.check()?;
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let outcomes: Vec<Result<Replication>> = (0..reps)
        .into_par_iter()
        .map(|rep| run_replication(design, pipeline, seed, rep))
        .collect();
    summarize(design, reps, outcomes)
}

/// Same replications, estimating β by least squares of y on X alone.
pub fn run_ols_baseline(design: &SimDesign, reps: usize, seed: u64) -> Result<SimSummary> {
    design.check()?;
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let outcomes: Vec<Result<Replication>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (data, truth) = generate_with(design, &mut replication_rng(seed, rep))?;
            let beta = least_squares(data.x(), data.y())?;
            Ok(Replication {
                k_hat: None,
                thetas: Vec::new(),
                group_sizes: Vec::new(),
                lambda: None,
                beta_sq_error: (&beta - &truth.beta).norm_squared(),
                matched: None,
                nearest: Vec::new(),
            })
        })
        .collect();
    summarize(design, reps, outcomes)
}
