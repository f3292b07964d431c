//! Checks against independent reference computations, shared by the
//! property tests and the acceptance suite. Each returns the first mismatch.

#![allow(
    dead_code,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop
)]

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subfuse_core::admm::{init_state, pair_index, run_admm, update_alpha, StoppingRule};
use subfuse_core::penalty::mcp_value;
use subfuse_core::{
    extract_partition, fit_beta, fusion_update, moments, Dataset, IndexSubset, PenaltyConfig,
    ResidualTargets,
};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
    ($cond:expr) => {
        if !$cond {
            return Err(stringify!($cond).to_string());
        }
    };
}

macro_rules! ensure_eq {
    ($a:expr, $b:expr) => {
        if $a != $b {
            return Err(format!("{} = {:?}, expected {:?}", stringify!($a), $a, $b));
        }
    };
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

pub fn random_dataset(seed: u64, n: usize, dx: usize, dz: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = normal_matrix(&mut rng, n, dx, 2.0);
    let z = normal_matrix(&mut rng, n, dz, 2.0);
    let y = DVector::from_fn(n, |_, _| rng.random::<f64>() * 10.0 - 5.0);
    Dataset::new(y, x, z).unwrap()
}

fn svd_ols(design: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    design.clone().svd(true, true).solve(y, 1e-14).unwrap()
}

pub fn beta_matches_ols_on_the_joint_design() -> Result<(), String> {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(20..80);
        let dx = rng.random_range(1..4);
        let dz = rng.random_range(1..3);
        let d = random_dataset(seed, n, dx, dz);
        let m = moments(&d, &IndexSubset::full(n)).unwrap();
        let beta = fit_beta(&m).unwrap().beta_hat;
        let mut design = DMatrix::zeros(n, dx + dz);
        design.view_mut((0, 0), (n, dx)).copy_from(d.x());
        design.view_mut((0, dx), (n, dz)).copy_from(d.z());
        let full = svd_ols(&design, d.y());
        for a in 0..dx {
            let scale = full[a].abs().max(1.0);
            ensure!(
                (beta[a] - full[a]).abs() <= 1e-8 * scale,
                "seed {seed}: {} vs {}",
                beta[a],
                full[a]
            );
        }
    }
    Ok(())
}

fn lagrangian(
    u: &DMatrix<f64>,
    alpha: &[f64],
    v: &[f64],
    kappa: &[f64],
    cfg: &PenaltyConfig,
) -> f64 {
    let (n, d) = (u.nrows(), u.ncols());
    let mut total = 0.0;
    for i in 0..n {
        for l in 0..d {
            total += 0.5 * (u[(i, l)] - alpha[i * d + l]).powi(2);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let p = pair_index(n, i, j);
            for l in 0..d {
                let r = alpha[i * d + l] - alpha[j * d + l] - v[p * d + l];
                total += kappa[p * d + l] * r + 0.5 * cfg.eta * r * r;
            }
        }
    }
    total
}

pub fn alpha_step_zeroes_the_lagrangian_gradient() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.random_range(2..=5);
        let d = rng.random_range(1..=3);
        let u = normal_matrix(&mut rng, n, d, 3.0);
        let targets = ResidualTargets::from_matrix(u.clone()).unwrap();
        let cfg = PenaltyConfig::new(rng.random::<f64>(), 3.0, 0.5 + rng.random::<f64>()).unwrap();
        let mut state = init_state(&targets, &cfg).unwrap();
        for x in state.v.iter_mut().chain(state.kappa.iter_mut()) {
            *x = rng.random::<f64>() * 4.0 - 2.0;
        }
        update_alpha(&mut state, &targets, &cfg).unwrap();
        let h = 1e-4;
        for k in 0..state.alpha.len() {
            let mut plus = state.alpha.clone();
            let mut minus = state.alpha.clone();
            plus[k] += h;
            minus[k] -= h;
            let g = (lagrangian(&u, &plus, &state.v, &state.kappa, &cfg)
                - lagrangian(&u, &minus, &state.v, &state.kappa, &cfg))
                / (2.0 * h);
            ensure!(g.abs() <= 1e-8, "gradient {g} at coordinate {k}");
        }
    }
    Ok(())
}

fn prox_objective(v: &[f64], delta: &[f64], cfg: &PenaltyConfig) -> f64 {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    let quad: f64 = v.iter().zip(delta).map(|(a, b)| (a - b).powi(2)).sum();
    mcp_value(l1, cfg).unwrap() + 0.5 * cfg.eta * quad
}

fn random_prox_config(rng: &mut ChaCha8Rng) -> PenaltyConfig {
    let eta = 0.5 + rng.random::<f64>() * 2.0;
    let gamma = (1.0 / eta).max(1.0) * (1.05 + rng.random::<f64>() * 3.0);
    PenaltyConfig::new(rng.random::<f64>() * 2.0, gamma, eta).unwrap()
}

pub fn fusion_update_beats_a_grid_in_one_dimension() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let cfg = random_prox_config(&mut rng);
        let delta = [rng.random::<f64>() * 12.0 - 6.0];
        let ours = fusion_update(&delta, &cfg);
        let f = prox_objective(&ours, &delta, &cfg);
        let lim = delta[0].abs() + 1.0;
        let steps = 20_000;
        let best = (0..=steps)
            .map(|s| -lim + 2.0 * lim * s as f64 / steps as f64)
            .map(|t| prox_objective(&[t], &delta, &cfg))
            .fold(f64::INFINITY, f64::min);
        ensure!(
            f <= best + 1e-6,
            "delta {delta:?} cfg {cfg:?}: {f} vs grid {best}"
        );
    }
    Ok(())
}

pub fn fusion_update_beats_a_grid_in_two_dimensions() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let cfg = random_prox_config(&mut rng);
        let delta = [
            rng.random::<f64>() * 8.0 - 4.0,
            rng.random::<f64>() * 8.0 - 4.0,
        ];
        let ours = fusion_update(&delta, &cfg);
        let f = prox_objective(&ours, &delta, &cfg);
        let lim = delta[0].abs().max(delta[1].abs()) + 0.5;
        let steps = 400;
        let at = |s: usize| -lim + 2.0 * lim * s as f64 / steps as f64;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for a in 0..=steps {
            for b in 0..=steps {
                let v = [at(a), at(b)];
                let g = prox_objective(&v, &delta, &cfg);
                if g < best.0 {
                    best = (g, v);
                }
            }
        }
        // polish the best grid cell with a finer local grid
        let h = 2.0 * lim / steps as f64;
        let fine = 200;
        for a in 0..=fine {
            for b in 0..=fine {
                let v = [
                    best.1[0] - h + 2.0 * h * a as f64 / fine as f64,
                    best.1[1] - h + 2.0 * h * b as f64 / fine as f64,
                ];
                best.0 = best.0.min(prox_objective(&v, &delta, &cfg));
            }
        }
        ensure!(
            f <= best.0 + 1e-6,
            "delta {delta:?} cfg {cfg:?}: {f} vs grid {}",
            best.0
        );
    }
    Ok(())
}

fn bfs_components(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if j != i && label[j] == usize::MAX && edge(i.min(j), i.max(j)) {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    label
}

pub fn extract_partition_matches_breadth_first_search() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let n = rng.random_range(1..=50);
        let d = random_dataset(rng.random(), 10, 1, 1);
        let m = moments(&d, &IndexSubset::full(10)).unwrap();
        let targets = ResidualTargets::from_matrix(normal_matrix(&mut rng, n, 1, 1.0)).unwrap();
        let cfg = PenaltyConfig::with_lambda(0.1).unwrap();
        let mut state = init_state(&targets, &cfg).unwrap();
        let density = rng.random::<f64>() * 4.0 / n as f64;
        let tol = 1e-6;
        for p in 0..state.v.len() {
            state.v[p] = if rng.random_bool(density.min(1.0)) {
                0.0
            } else {
                1.0
            };
        }
        let fusion = extract_partition(&state, tol, &m).unwrap();
        let expected = bfs_components(n, |i, j| state.v_pair(i, j)[0].abs() <= tol);
        ensure_eq!(fusion.labels, expected);
        ensure_eq!(fusion.k_hat, expected.iter().max().map_or(0, |k| k + 1));
    }
    Ok(())
}

pub fn zero_lambda_returns_the_targets() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let u = normal_matrix(&mut rng, 12, 2, 3.0);
    let targets = ResidualTargets::from_matrix(u.clone()).unwrap();
    let cfg = PenaltyConfig::with_lambda(0.0).unwrap();
    let state = run_admm(&targets, &cfg, &StoppingRule::default_for(12, 2)).unwrap();
    ensure!(state.converged);
    ensure!((state.alpha_matrix() - u).amax() < 1e-8);
    Ok(())
}

pub fn large_lambda_fuses_everything_at_the_mean() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = random_dataset(15, 20, 2, 1);
    let m = moments(&d, &IndexSubset::full(20)).unwrap();
    let u = normal_matrix(&mut rng, 20, 1, 3.0);
    let targets = ResidualTargets::from_matrix(u.clone()).unwrap();
    let spread = u.max() - u.min();
    let cfg = PenaltyConfig::with_lambda(10.0 * spread).unwrap();
    let stop = StoppingRule::default_for(20, 1);
    let state = run_admm(&targets, &cfg, &stop).unwrap();
    let fusion = extract_partition(&state, 1e-6, &m).unwrap();
    ensure_eq!(fusion.k_hat, 1);
    ensure!((fusion.alpha_tilde[(0, 0)] - u.mean()).abs() < 1e-6);
    Ok(())
}
