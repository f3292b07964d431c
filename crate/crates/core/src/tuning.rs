//! Choosing the fusion strength λ over a geometric path.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::admm::{init_state, AdmmState, StoppingRule, Trace};
use crate::dataset::{Dataset, IndexSubset, MomentSet};
use crate::error::{Error, Result};
use crate::estimators::ResidualTargets;
use crate::model::{fused_rss, prepare, solve_fusion, GroupModel};
use crate::partition::{default_coalesce_tol, FusionResult};
use crate::penalty::{PenaltyConfig, DEFAULT_ETA, DEFAULT_GAMMA};

pub const DEFAULT_PATH_LEN: usize = 50;
pub const DEFAULT_FOLDS: usize = 5;
/// Ratio λ_max / λ_min of the path.
pub const PATH_RANGE: f64 = 100.0;

/// How each point of a λ path is fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSettings {
    pub gamma: f64,
    pub eta: f64,
    pub count: usize,
    /// Defaults to [`StoppingRule::default_for`] the data size.
    pub stop: Option<StoppingRule>,
    /// Defaults to [`default_coalesce_tol`].
    pub coalesce_tol: Option<f64>,
    pub start: PathStart,
    /// Polish each fit with [`crate::partition::refine_partition`].
    pub refine: bool,
    /// Keep the ADMM iteration trace of every path fit.
    pub trace: bool,
}

/// Where each ADMM run on a path starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStart {
    /// From the previous solution, walking λ downward from λ_max.
    WarmDescending,
    /// From the previous solution, walking λ upward from the smallest value.
    WarmAscending,
    /// Every λ from the targets (α = u).
    Cold,
}

impl Default for PathSettings {
    fn default() -> Self {
        PathSettings {
            gamma: DEFAULT_GAMMA,
            eta: DEFAULT_ETA,
            count: DEFAULT_PATH_LEN,
            stop: None,
            coalesce_tol: None,
            start: PathStart::WarmAscending,
            refine: false,
            trace: false,
        }
    }
}

impl PathSettings {
    fn penalty(&self, lambda: f64) -> Result<PenaltyConfig> {
        PenaltyConfig::new(lambda, self.gamma, self.eta)
    }

    fn stop_for(&self, targets: &ResidualTargets) -> StoppingRule {
        self.stop
            .unwrap_or_else(|| StoppingRule::default_for(targets.n(), targets.dim()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub k_hat: usize,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub cv_score: Option<f64>,
    pub bic: Option<f64>,
}

/// Decreasing λ values with a summary of the fit at each.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPath {
    pub values: Vec<f64>,
    pub points: Vec<PathPoint>,
    pub warnings: Vec<String>,
    /// ADMM iterations at each λ, when [`PathSettings::trace`] is set.
    pub traces: Vec<Trace>,
}

/// max_{i<j} ‖uᵢ − uⱼ‖₁ / γ: above this every pairwise gap lies inside the
/// MCP's shrinking range.
pub fn lambda_max(targets: &ResidualTargets, gamma: f64) -> f64 {
    let u = targets.to_row_major();
    let (n, dim) = (targets.n(), targets.dim());
    let mut widest = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            let l1: f64 = (0..dim)
                .map(|l| (u[i * dim + l] - u[j * dim + l]).abs())
                .sum();
            widest = widest.max(l1);
        }
    }
    widest / gamma
}

/// `count` geometrically spaced values from `lmax` down to `lmax / 100`.
pub fn lambda_grid(lmax: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidConfig(format!(
            "a lambda path needs at least 2 values, got {count}"
        )));
    }
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda_max must be positive, got {lmax}"
        )));
    }
    let ratio = PATH_RANGE.powf(1.0 / (count - 1) as f64);
    Ok((0..count)
        .map(|k| {
            if k == count - 1 {
                lmax / PATH_RANGE
            } else {
                lmax / ratio.powi(k as i32)
            }
        })
        .collect())
}

/// Fits every λ in `values` and extracts the partitions, returned in the
/// order of `values`.
pub fn fit_path(
    targets: &ResidualTargets,
    moments: &MomentSet,
    values: &[f64],
    settings: &PathSettings,
) -> Result<Vec<FusionResult>> {
    Ok(fit_path_traced(targets, moments, values, settings, false)?.0)
}

fn fit_path_traced(
    targets: &ResidualTargets,
    moments: &MomentSet,
    values: &[f64],
    settings: &PathSettings,
    keep_trace: bool,
) -> Result<(Vec<FusionResult>, Vec<Trace>)> {
    let stop = settings.stop_for(targets);
    let tol = settings
        .coalesce_tol
        .unwrap_or_else(|| default_coalesce_tol(targets));
    let ascending = settings.start == PathStart::WarmAscending;
    let order: Vec<usize> = if ascending {
        (0..values.len()).rev().collect()
    } else {
        (0..values.len()).collect()
    };
    let mut state: Option<AdmmState> = None;
    let mut out = vec![None; values.len()];
    let mut traces = vec![Trace::new(tol); if keep_trace { values.len() } else { 0 }];
    for idx in order {
        let cfg = settings.penalty(values[idx])?;
        let start = match state.take() {
            Some(s) if settings.start != PathStart::Cold => s,
            _ => init_state(targets, &cfg)?,
        };
        let (fitted, fusion) = solve_fusion(
            targets,
            moments,
            &cfg,
            &stop,
            tol,
            start,
            settings.refine,
            traces.get_mut(idx),
        )?;
        out[idx] = Some(fusion);
        state = Some(fitted);
    }
    let fusions = out
        .into_iter()
        .map(|f| f.expect("every lambda fitted"))
        .collect();
    Ok((fusions, traces))
}

fn summarize(
    fusions: &[FusionResult],
    targets: &ResidualTargets,
    settings: &PathSettings,
) -> Vec<PathPoint> {
    fusions
        .iter()
        .map(|f| {
            let cfg = PenaltyConfig {
                lambda: f.lambda_used,
                gamma: settings.gamma,
                eta: settings.eta,
            };
            PathPoint {
                lambda: f.lambda_used,
                k_hat: f.k_hat,
                objective: crate::admm::criterion(targets, &f.alpha_tilde, &cfg),
                converged: f.converged,
                iterations: f.iterations,
                cv_score: None,
                bic: None,
            }
        })
        .collect()
}

/// λ grid for `targets` and the warm-started fit at each value. All-equal
/// targets give a single λ = 0 point and a warning.
pub fn lambda_path(
    targets: &ResidualTargets,
    moments: &MomentSet,
    settings: &PathSettings,
) -> Result<(LambdaPath, Vec<FusionResult>)> {
    let lmax = lambda_max(targets, settings.gamma);
    let mut warnings = Vec::new();
    let values = if lmax > 0.0 {
        lambda_grid(lmax, settings.count)?
    } else {
        warnings.push("all residual targets are equal; path reduced to lambda = 0".into());
        vec![0.0]
    };
    let (fusions, traces) = fit_path_traced(targets, moments, &values, settings, settings.trace)?;
    let points = summarize(&fusions, targets, settings);
    Ok((
        LambdaPath {
            values,
            points,
            warnings,
            traces,
        },
        fusions,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// K-fold prediction error with nearest-centroid assignment.
    Cv,
    /// log(RSS/n) + k̂·d_Z·log(n)/n on the full data.
    Bic,
}

/// Which θ estimate a score evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTheta {
    /// The back-transformed fusion centroids θ̃ = (mean ZZᵀ)⁻¹α̃.
    Fused,
    /// The per-group subgroup-average refit θ̂.
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningConfig {
    pub score: ScoreKind,
    pub theta: ScoreTheta,
    pub folds: usize,
    pub seed: u64,
    pub path: PathSettings,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            score: ScoreKind::Bic,
            theta: ScoreTheta::Fused,
            folds: DEFAULT_FOLDS,
            seed: 0,
            path: PathSettings::default(),
        }
    }
}

/// One (λ, fold) cell; `fold` is `None` for full-data scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningTraceRow {
    pub lambda: f64,
    pub fold: Option<usize>,
    pub score: Option<f64>,
    pub k_hat: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TunedFit {
    pub lambda: f64,
    pub index: usize,
    pub model: GroupModel,
    pub path: LambdaPath,
    pub trace: Vec<TuningTraceRow>,
}

/// Fold of each row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidConfig(format!(
            "folds must lie in [2, n = {n}], got {folds}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold[i] = k % folds;
    }
    Ok(fold)
}

fn nearest_row(centroids: &DMatrix<f64>, point: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for g in 0..centroids.nrows() {
        let d: f64 = point
            .iter()
            .enumerate()
            .map(|(l, p)| (p - centroids[(g, l)]).powi(2))
            .sum();
        if d < best.1 {
            best = (g, d);
        }
    }
    best.0
}

/// Mean squared prediction error on `held_out`, each row assigned to the
/// group whose centroid is nearest its residual target.
fn held_out_error(
    model: &GroupModel,
    dataset: &Dataset,
    held_out: &[usize],
    theta: ScoreTheta,
) -> f64 {
    let centroids = model.fusion.centroids();
    let fused = model.fusion.theta_centroids();
    let beta = &model.beta.beta_hat;
    let mut total = 0.0;
    for &i in held_out {
        let xb: f64 = dataset
            .x()
            .row(i)
            .iter()
            .zip(beta.iter())
            .map(|(x, b)| x * b)
            .sum();
        let r = dataset.y()[i] - xb;
        let u: Vec<f64> = dataset.z().row(i).iter().map(|z| z * r).collect();
        let g = nearest_row(&centroids, &u);
        let zt: f64 = match theta {
            ScoreTheta::Fused => dataset.z().row(i).dot(&fused.row(g)),
            ScoreTheta::Refit => dataset
                .z()
                .row(i)
                .transpose()
                .dot(&model.groups[g].estimate.theta_hat),
        };
        total += (r - zt).powi(2);
    }
    total / held_out.len() as f64
}

fn fold_scores(
    dataset: &Dataset,
    values: &[f64],
    assignment: &[usize],
    fold: usize,
    settings: &PathSettings,
    theta: ScoreTheta,
) -> Vec<(Option<f64>, Option<usize>)> {
    let missing = vec![(None, None); values.len()];
    let train: Vec<usize> = (0..dataset.n())
        .filter(|&i| assignment[i] != fold)
        .collect();
    let test: Vec<usize> = (0..dataset.n())
        .filter(|&i| assignment[i] == fold)
        .collect();
    let Ok(subset) = IndexSubset::new(train, dataset.n()) else {
        return missing;
    };
    let Ok(train_ds) = dataset.select_rows(&subset) else {
        return missing;
    };
    let Ok(prep) = prepare(&train_ds) else {
        return missing;
    };
    let Ok(fusions) = fit_path(&prep.targets, &prep.moments, values, settings) else {
        return missing;
    };
    fusions
        .into_iter()
        .map(|f| {
            let k = f.k_hat;
            match GroupModel::from_fusion(&train_ds, prep.beta.clone(), f) {
                Ok(model) => {
                    let s = held_out_error(&model, dataset, &test, theta);
                    if s.is_finite() {
                        (Some(s), Some(k))
                    } else {
                        (None, Some(k))
                    }
                }
                Err(_) => (None, Some(k)),
            }
        })
        .collect()
}

/// Index of the smallest score; earlier (larger λ) wins ties.
fn argmin_first(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((k, s));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// K-fold cross-validation over `path.values`. A λ whose folds are more than
/// half unusable is excluded.
pub fn select_lambda_cv(
    dataset: &Dataset,
    path: &LambdaPath,
    folds: usize,
    seed: u64,
    settings: &PathSettings,
    theta: ScoreTheta,
) -> Result<(usize, Vec<Option<f64>>, Vec<TuningTraceRow>)> {
    let assignment = fold_assignment(dataset.n(), folds, seed)?;
    let values = &path.values;
    let per_fold: Vec<Vec<(Option<f64>, Option<usize>)>> = (0..folds)
        .into_par_iter()
        .map(|f| fold_scores(dataset, values, &assignment, f, settings, theta))
        .collect();

    let mut trace = Vec::with_capacity(values.len() * folds);
    let mut means = Vec::with_capacity(values.len());
    for (k, &lambda) in values.iter().enumerate() {
        let mut sum = 0.0;
        let mut present = 0;
        for (f, cells) in per_fold.iter().enumerate() {
            let (score, k_hat) = cells[k];
            trace.push(TuningTraceRow {
                lambda,
                fold: Some(f),
                score,
                k_hat,
            });
            if let Some(s) = score {
                sum += s;
                present += 1;
            }
        }
        let missing = folds - present;
        means.push((present > 0 && 2 * missing <= folds).then(|| sum / present as f64));
    }
    let index = argmin_first(&means).ok_or_else(|| Error::Singular {
        what: "every cross-validation fit".into(),
        condition: f64::INFINITY,
    })?;
    Ok((index, means, trace))
}

pub fn bic_score(rss: f64, n: usize, k_hat: usize, d_z: usize) -> f64 {
    let n_f = n as f64;
    (rss / n_f).max(f64::MIN_POSITIVE).ln() + (k_hat * d_z) as f64 * n_f.ln() / n_f
}

/// Path on the full data, λ chosen by `config.score`, model refit at that λ.
pub fn fit_tuned(dataset: &Dataset, config: &TuningConfig) -> Result<TunedFit> {
    let prep = prepare(dataset)?;
    let (mut path, fusions) = lambda_path(&prep.targets, &prep.moments, &config.path)?;
    let models: Vec<Result<GroupModel>> = fusions
        .into_iter()
        .map(|f| GroupModel::from_fusion(dataset, prep.beta.clone(), f))
        .collect();

    let mut trace = Vec::new();
    let index = match config.score {
        ScoreKind::Cv if path.values.len() > 1 => {
            let (index, means, cv_trace) = select_lambda_cv(
                dataset,
                &path,
                config.folds,
                config.seed,
                &config.path,
                config.theta,
            )?;
            for (p, m) in path.points.iter_mut().zip(&means) {
                p.cv_score = *m;
            }
            trace = cv_trace;
            index
        }
        ScoreKind::Cv => 0,
        ScoreKind::Bic => {
            let scores: Vec<Option<f64>> = models
                .iter()
                .map(|m| {
                    let m = m.as_ref().ok()?;
                    let rss = match config.theta {
                        ScoreTheta::Fused => fused_rss(dataset, &m.beta, &m.fusion).ok()?,
                        ScoreTheta::Refit => m.rss,
                    };
                    Some(bic_score(rss, dataset.n(), m.k_hat, dataset.d_z()))
                })
                .collect();
            for ((p, s), m) in path.points.iter_mut().zip(&scores).zip(&models) {
                p.bic = *s;
                trace.push(TuningTraceRow {
                    lambda: p.lambda,
                    fold: None,
                    score: *s,
                    k_hat: m.as_ref().ok().map(|m| m.k_hat),
                });
            }
            argmin_first(&scores).ok_or_else(|| Error::Singular {
                what: "every path fit".into(),
                condition: f64::INFINITY,
            })?
        }
    };
    let lambda = path.values[index];
    let model = models.into_iter().nth(index).expect("index within path")?;
    Ok(TunedFit {
        lambda,
        index,
        model,
        path,
        trace,
    })
}

/// Fraction of adjacent path steps (decreasing λ) where k̂ does not drop.
pub fn monotone_fraction(points: &[PathPoint]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let ok = points
        .windows(2)
        .filter(|w| w[1].k_hat >= w[0].k_hat)
        .count();
    ok as f64 / (points.len() - 1) as f64
}

/// Ordinary least squares coefficients of `y` on `x`, used by baselines.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    crate::linalg::least_squares(x, y)
}
