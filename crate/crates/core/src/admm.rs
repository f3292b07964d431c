//! ADMM for the MCP-fused clustering criterion
//!
//! ```text
//! ½ Σᵢ ‖uᵢ − αᵢ‖² + Σ_{i<j} p_γ(‖αᵢ − αⱼ‖₁, λ)
//! ```
//!
//! split as αᵢ − αⱼ − v_ij = 0 with scaled duals κ_ij. Each iteration does an
//! exact α block minimization, an MCP proximal step per pair, and dual ascent.
//!
//! Pairs (i, j), i < j, are stored in lexicographic order, so pair storage is
//! dense O(n²·d) and practical up to a few thousand rows.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::ResidualTargets;
use crate::partition::count_components;
use crate::penalty::{fusion_update_into, mcp, soft, PenaltyConfig};

pub const DEFAULT_MAX_ITER: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
}

impl StoppingRule {
    /// tol = 1e−5·√(n·d) for both residuals, 2000 iterations.
    pub fn default_for(n: usize, dim: usize) -> Self {
        let tol = 1e-5 * ((n * dim) as f64).sqrt();
        StoppingRule {
            tol_primal: tol,
            tol_dual: tol,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig(format!(
                "stopping rule needs positive tolerances and max_iter >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Number of pairs i < j among n rows.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair (i, j), i < j, in lexicographic pair order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Iterate of the fusion ADMM. Vectors are stored row-major: row i of α is
/// `alpha[i*d..(i+1)*d]`, pair p of v and κ is `v[p*d..(p+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    n: usize,
    dim: usize,
    pub alpha: Vec<f64>,
    pub v: Vec<f64>,
    pub kappa: Vec<f64>,
    pub iteration: usize,
    /// max over pairs of ‖αᵢ − αⱼ − v_ij‖₂
    pub primal_residual: f64,
    /// η · max over i of ‖αᵢ⁽ᵐ⁾ − αᵢ⁽ᵐ⁻¹⁾‖₂
    pub dual_residual: f64,
    /// Clustering criterion at the current α.
    pub objective: f64,
    pub objective_history: Vec<f64>,
    pub converged: bool,
    /// λ of the most recent update.
    pub lambda: f64,
    data_term: f64,
    penalty_term: f64,
}

impl AdmmState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha_row(&self, i: usize) -> &[f64] {
        &self.alpha[i * self.dim..(i + 1) * self.dim]
    }

    /// v_ij for i < j.
    pub fn v_pair(&self, i: usize, j: usize) -> &[f64] {
        let p = pair_index(self.n, i, j);
        &self.v[p * self.dim..(p + 1) * self.dim]
    }

    pub fn kappa_pair(&self, i: usize, j: usize) -> &[f64] {
        let p = pair_index(self.n, i, j);
        &self.kappa[p * self.dim..(p + 1) * self.dim]
    }

    /// α as an n × d matrix.
    pub fn alpha_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.dim, &self.alpha)
    }
}

/// Targets flattened row-major together with their mean.
struct Flat {
    u: Vec<f64>,
    mean: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Flat {
    fn new(targets: &ResidualTargets) -> Self {
        let (n, dim) = (targets.n(), targets.dim());
        let u = targets.to_row_major();
        let mut mean = vec![0.0; dim];
        for row in u.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        Flat { u, mean, n, dim }
    }

    fn check(&self, state: &AdmmState) -> Result<()> {
        if state.n != self.n || state.dim != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state is {}×{} but targets are {}×{}",
                state.n, state.dim, self.n, self.dim
            )));
        }
        Ok(())
    }

    fn data_term(&self, alpha: &[f64]) -> f64 {
        0.5 * self
            .u
            .iter()
            .zip(alpha)
            .map(|(u, a)| (u - a) * (u - a))
            .sum::<f64>()
    }
}

/// Clustering criterion ½Σ‖uᵢ − αᵢ‖² + Σ_{i<j} p_γ(‖αᵢ − αⱼ‖₁, λ) at `alpha`
/// (n × d).
pub fn criterion(targets: &ResidualTargets, alpha: &DMatrix<f64>, cfg: &PenaltyConfig) -> f64 {
    let flat = Flat::new(targets);
    let a: Vec<f64> = alpha.transpose().as_slice().to_vec();
    flat.data_term(&a) + penalty_sum(&a, flat.n, flat.dim, cfg)
}

fn penalty_sum(alpha: &[f64], n: usize, dim: usize, cfg: &PenaltyConfig) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let ai = &alpha[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let aj = &alpha[j * dim..(j + 1) * dim];
            let l1: f64 = ai.iter().zip(aj).map(|(x, y)| (x - y).abs()).sum();
            total += mcp(l1, cfg.lambda, cfg.gamma);
        }
    }
    total
}

/// α⁽⁰⁾ = u, v⁽⁰⁾_ij = uᵢ − uⱼ, κ⁽⁰⁾ = 0.
pub fn init_state(targets: &ResidualTargets, cfg: &PenaltyConfig) -> Result<AdmmState> {
    init_state_at(targets, &targets.u, cfg)
}

/// α⁽⁰⁾ = `alpha` (n × d), v⁽⁰⁾_ij = αᵢ − αⱼ, κ⁽⁰⁾ = 0.
pub fn init_state_at(
    targets: &ResidualTargets,
    alpha: &DMatrix<f64>,
    cfg: &PenaltyConfig,
) -> Result<AdmmState> {
    cfg.check()?;
    let flat = Flat::new(targets);
    let (n, dim) = (flat.n, flat.dim);
    if alpha.shape() != (n, dim) {
        return Err(Error::DimensionMismatch(format!(
            "initial alpha is {}×{} but targets are {n}×{dim}",
            alpha.nrows(),
            alpha.ncols()
        )));
    }
    let a: Vec<f64> = alpha.transpose().as_slice().to_vec();
    let pairs = pair_count(n);
    let mut v = Vec::with_capacity(pairs * dim);
    for i in 0..n {
        for j in i + 1..n {
            for l in 0..dim {
                v.push(a[i * dim + l] - a[j * dim + l]);
            }
        }
    }
    let data = flat.data_term(&a);
    let penalty = penalty_sum(&a, n, dim, cfg);
    Ok(AdmmState {
        n,
        dim,
        alpha: a,
        v,
        kappa: vec![0.0; pairs * dim],
        iteration: 0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        objective: data + penalty,
        objective_history: Vec::new(),
        converged: false,
        lambda: cfg.lambda,
        data_term: data,
        penalty_term: penalty,
    })
}

/// Exact minimization of the augmented Lagrangian over α:
/// αᵢ = Wᵢ/(1+nη) + nη/(1+nη)·ū with
/// Wᵢ = uᵢ + Σ_{j>i}(ηv_ij − κ_ij) − Σ_{j<i}(ηv_ji − κ_ji).
pub fn update_alpha(
    state: &mut AdmmState,
    targets: &ResidualTargets,
    cfg: &PenaltyConfig,
) -> Result<()> {
    let flat = Flat::new(targets);
    flat.check(state)?;
    alpha_step(state, &flat, cfg);
    Ok(())
}

fn alpha_step(state: &mut AdmmState, flat: &Flat, cfg: &PenaltyConfig) {
    let (n, dim, eta) = (state.n, state.dim, cfg.eta);
    let mut w = flat.u.clone();
    let mut p = 0;
    if dim == 1 {
        for i in 0..n {
            let mut acc = 0.0;
            for wj in &mut w[i + 1..n] {
                let t = eta * state.v[p] - state.kappa[p];
                acc += t;
                *wj -= t;
                p += 1;
            }
            w[i] += acc;
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                let base = p * dim;
                for l in 0..dim {
                    let t = eta * state.v[base + l] - state.kappa[base + l];
                    w[i * dim + l] += t;
                    w[j * dim + l] -= t;
                }
                p += 1;
            }
        }
    }
    let ne = n as f64 * eta;
    let scale = 1.0 / (1.0 + ne);
    let mut max_move = 0.0_f64;
    for i in 0..n {
        let mut sq = 0.0;
        for l in 0..dim {
            let k = i * dim + l;
            let new = (w[k] + ne * flat.mean[l]) * scale;
            let delta = new - state.alpha[k];
            sq += delta * delta;
            state.alpha[k] = new;
        }
        max_move = max_move.max(sq);
    }
    state.dual_residual = eta * max_move.sqrt();
    state.data_term = flat.data_term(&state.alpha);
}

/// Per pair: δ = αᵢ − αⱼ + κ/η, v ← prox(δ), κ ← κ + η(αᵢ − αⱼ − v), all
/// from the same α.
pub fn update_v_kappa(state: &mut AdmmState, cfg: &PenaltyConfig) -> Result<()> {
    cfg.check()?;
    v_kappa_step(state, cfg);
    Ok(())
}

fn v_kappa_step(state: &mut AdmmState, cfg: &PenaltyConfig) {
    if state.dim == 1 {
        return v_kappa_step_scalar(state, cfg);
    }
    let (n, dim, eta) = (state.n, state.dim, cfg.eta);
    let inv_eta = 1.0 / eta;
    let mut diff = vec![0.0; dim];
    let mut delta = vec![0.0; dim];
    let mut prox = vec![0.0; dim];
    let mut max_primal = 0.0_f64;
    let mut penalty = 0.0;
    let mut p = 0;
    for i in 0..n {
        for j in i + 1..n {
            let base = p * dim;
            let mut l1 = 0.0;
            for l in 0..dim {
                diff[l] = state.alpha[i * dim + l] - state.alpha[j * dim + l];
                l1 += diff[l].abs();
                delta[l] = diff[l] + inv_eta * state.kappa[base + l];
            }
            penalty += mcp(l1, cfg.lambda, cfg.gamma);
            fusion_update_into(&delta, cfg, &mut prox);
            let mut sq = 0.0;
            for l in 0..dim {
                let r = diff[l] - prox[l];
                sq += r * r;
                state.v[base + l] = prox[l];
                state.kappa[base + l] += eta * r;
            }
            max_primal = max_primal.max(sq);
            p += 1;
        }
    }
    state.primal_residual = max_primal.sqrt();
    state.penalty_term = penalty;
    state.objective = state.data_term + penalty;
    state.lambda = cfg.lambda;
}

/// [`v_kappa_step`] for d = 1 with the scalar threshold rule inlined.
fn v_kappa_step_scalar(state: &mut AdmmState, cfg: &PenaltyConfig) {
    let (n, eta) = (state.n, cfg.eta);
    let inv_eta = 1.0 / eta;
    let reach = cfg.gamma * cfg.lambda;
    let cut = cfg.lambda / eta;
    let stretch = 1.0 - 1.0 / (cfg.gamma * eta);
    let mut max_primal = 0.0_f64;
    let mut penalty = 0.0;
    let mut p = 0;
    for i in 0..n {
        let ai = state.alpha[i];
        for j in i + 1..n {
            let diff = ai - state.alpha[j];
            penalty += mcp(diff.abs(), cfg.lambda, cfg.gamma);
            let delta = diff + inv_eta * state.kappa[p];
            let v = if delta.abs() <= reach {
                soft(delta, cut) / stretch
            } else {
                delta
            };
            let r = diff - v;
            max_primal = max_primal.max(r.abs());
            state.v[p] = v;
            state.kappa[p] += eta * r;
            p += 1;
        }
    }
    state.primal_residual = max_primal;
    state.penalty_term = penalty;
    state.objective = state.data_term + penalty;
    state.lambda = cfg.lambda;
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub k_hat: usize,
}

/// Collects [`TraceRow`]s; `k_hat` counts components of the graph with edges
/// where ‖v_ij‖₂ ≤ `coalesce_tol`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub coalesce_tol: f64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(coalesce_tol: f64) -> Self {
        Trace {
            coalesce_tol,
            rows: Vec::new(),
        }
    }
}

/// Cold-started ADMM.
pub fn run_admm(
    targets: &ResidualTargets,
    cfg: &PenaltyConfig,
    stop: &StoppingRule,
) -> Result<AdmmState> {
    let state = init_state(targets, cfg)?;
    run_admm_from(state, targets, cfg, stop, None)
}

/// ADMM continued from `state`, e.g. the solution at a neighbouring λ.
pub fn run_admm_from(
    mut state: AdmmState,
    targets: &ResidualTargets,
    cfg: &PenaltyConfig,
    stop: &StoppingRule,
    mut trace: Option<&mut Trace>,
) -> Result<AdmmState> {
    cfg.check()?;
    stop.check()?;
    let flat = Flat::new(targets);
    flat.check(&state)?;
    state.converged = false;
    state.iteration = 0;
    state.lambda = cfg.lambda;
    state.objective_history.clear();
    for _ in 0..stop.max_iter {
        alpha_step(&mut state, &flat, cfg);
        v_kappa_step(&mut state, cfg);
        state.iteration += 1;
        if !(state.objective.is_finite()
            && state.primal_residual.is_finite()
            && state.dual_residual.is_finite())
        {
            return Err(Error::NonFinite {
                iteration: state.iteration,
            });
        }
        state.objective_history.push(state.objective);
        if let Some(t) = trace.as_deref_mut() {
            let k_hat = count_components(&state, t.coalesce_tol);
            t.rows.push(TraceRow {
                iteration: state.iteration,
                objective: state.objective,
                primal_residual: state.primal_residual,
                dual_residual: state.dual_residual,
                k_hat,
            });
        }
        if state.primal_residual <= stop.tol_primal && state.dual_residual <= stop.tol_dual {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
