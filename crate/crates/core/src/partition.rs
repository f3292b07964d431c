//! Turning fused pair variables into a partition of the rows.

use nalgebra::DMatrix;

use crate::admm::AdmmState;
use crate::dataset::MomentSet;
use crate::error::Result;
use crate::estimators::{theta_from_alpha, ResidualTargets};
use crate::penalty::{mcp, PenaltyConfig};

/// Disjoint-set forest with path compression and union by rank.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] += 1;
        }
        true
    }

    /// Component labels 0..k numbered by first appearance.
    pub fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut root_label = vec![usize::MAX; n];
        let mut labels = Vec::with_capacity(n);
        let mut k = 0;
        for i in 0..n {
            let r = self.find(i);
            if root_label[r] == usize::MAX {
                root_label[r] = k;
                k += 1;
            }
            labels.push(root_label[r]);
        }
        (labels, k)
    }
}

fn fused_components(state: &AdmmState, coalesce_tol: f64) -> DisjointSet {
    let (n, dim) = (state.n(), state.dim());
    let tol_sq = coalesce_tol * coalesce_tol;
    let mut dsu = DisjointSet::new(n);
    let mut p = 0;
    for i in 0..n {
        for j in i + 1..n {
            let v = &state.v[p * dim..(p + 1) * dim];
            if v.iter().map(|x| x * x).sum::<f64>() <= tol_sq {
                dsu.union(i, j);
            }
            p += 1;
        }
    }
    dsu
}

pub(crate) fn count_components(state: &AdmmState, coalesce_tol: f64) -> usize {
    fused_components(state, coalesce_tol).labels().1
}

/// 10⁻⁶ times the median pairwise distance ‖uᵢ − uⱼ‖₂ (or 10⁻¹² when the
/// median is zero).
pub fn default_coalesce_tol(targets: &ResidualTargets) -> f64 {
    let u = targets.to_row_major();
    let (n, dim) = (targets.n(), targets.dim());
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..dim)
                .map(|l| (u[i * dim + l] - u[j * dim + l]).powi(2))
                .sum();
            dists.push(d.sqrt());
        }
    }
    if dists.is_empty() {
        return 1e-12;
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let tol = 1e-6 * *median;
    if tol > 0.0 {
        tol
    } else {
        1e-12
    }
}

/// Fused centroids, their back-transform, and the recovered partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    /// n × d; rows in one group are identical.
    pub alpha_tilde: DMatrix<f64>,
    /// n × d, (mean ZZᵀ)⁻¹ α̃ᵢ.
    pub theta_tilde: DMatrix<f64>,
    /// 0-based group of each row, numbered by first appearance.
    pub labels: Vec<usize>,
    pub k_hat: usize,
    pub converged: bool,
    pub iterations: usize,
    pub lambda_used: f64,
}

impl FusionResult {
    /// Row indices of each group, ordered by label.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k_hat];
        for (i, &g) in self.labels.iter().enumerate() {
            groups[g].push(i);
        }
        groups
    }

    /// One centroid α̃ per group, k̂ × d.
    pub fn centroids(&self) -> DMatrix<f64> {
        self.per_group(&self.alpha_tilde)
    }

    /// One back-transformed θ̃ per group, k̂ × d.
    pub fn theta_centroids(&self) -> DMatrix<f64> {
        self.per_group(&self.theta_tilde)
    }

    fn per_group(&self, rows: &DMatrix<f64>) -> DMatrix<f64> {
        let mut first = vec![usize::MAX; self.k_hat];
        for (i, &g) in self.labels.iter().enumerate() {
            if first[g] == usize::MAX {
                first[g] = i;
            }
        }
        DMatrix::from_fn(self.k_hat, rows.ncols(), |g, l| rows[(first[g], l)])
    }
}

/// Groups = connected components of the graph with an edge (i, j) whenever
/// ‖v_ij‖₂ ≤ `coalesce_tol`; each group's α̃ is the mean of its α rows.
pub fn extract_partition(
    state: &AdmmState,
    coalesce_tol: f64,
    moments: &MomentSet,
) -> Result<FusionResult> {
    let (labels, k_hat) = fused_components(state, coalesce_tol).labels();
    let alpha_tilde = coalesce(&state.alpha_matrix(), &labels, k_hat);
    let theta_tilde = theta_from_alpha(&alpha_tilde, moments)?;
    Ok(FusionResult {
        alpha_tilde,
        theta_tilde,
        labels,
        k_hat,
        converged: state.converged,
        iterations: state.iteration,
        lambda_used: state.lambda,
    })
}

/// Replaces each row by the mean of its group.
pub fn coalesce(alpha: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let dim = alpha.ncols();
    let mut sums = DMatrix::<f64>::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &g) in labels.iter().enumerate() {
        counts[g] += 1;
        for l in 0..dim {
            sums[(g, l)] += alpha[(i, l)];
        }
    }
    DMatrix::from_fn(alpha.nrows(), dim, |i, l| {
        let g = labels[i];
        sums[(g, l)] / counts[g] as f64
    })
}

#[derive(Clone, Debug)]
struct GroupStats {
    size: f64,
    sum: Vec<f64>,
    sumsq: f64,
}

impl GroupStats {
    fn empty(dim: usize) -> Self {
        GroupStats {
            size: 0.0,
            sum: vec![0.0; dim],
            sumsq: 0.0,
        }
    }

    fn add(&mut self, row: &[f64], sign: f64) {
        self.size += sign;
        for (s, x) in self.sum.iter_mut().zip(row) {
            *s += sign * x;
        }
        self.sumsq += sign * row.iter().map(|x| x * x).sum::<f64>();
    }

    fn merged(&self, other: &GroupStats) -> GroupStats {
        GroupStats {
            size: self.size + other.size,
            sum: self
                .sum
                .iter()
                .zip(&other.sum)
                .map(|(a, b)| a + b)
                .collect(),
            sumsq: self.sumsq + other.sumsq,
        }
    }

    /// ½Σ‖uᵢ − ū‖² over the group.
    fn data(&self) -> f64 {
        if self.size == 0.0 {
            return 0.0;
        }
        let norm: f64 = self.sum.iter().map(|s| s * s).sum();
        (0.5 * (self.sumsq - norm / self.size)).max(0.0)
    }
}

fn group_penalty(a: &GroupStats, b: &GroupStats, cfg: &PenaltyConfig) -> f64 {
    if a.size == 0.0 || b.size == 0.0 {
        return 0.0;
    }
    let l1: f64 = a
        .sum
        .iter()
        .zip(&b.sum)
        .map(|(x, y)| (x / a.size - y / b.size).abs())
        .sum();
    a.size * b.size * mcp(l1, cfg.lambda, cfg.gamma)
}

/// Criterion terms involving groups `g` and `h` when they are replaced by
/// `a` and `b`.
fn local_cost(
    groups: &[GroupStats],
    g: usize,
    h: usize,
    a: &GroupStats,
    b: &GroupStats,
    cfg: &PenaltyConfig,
) -> f64 {
    let mut cost = a.data() + b.data() + group_penalty(a, b, cfg);
    for (f, other) in groups.iter().enumerate() {
        if f != g && f != h && other.size > 0.0 {
            cost += group_penalty(other, a, cfg) + group_penalty(other, b, cfg);
        }
    }
    cost
}

/// Criterion value of the cluster-constant α that puts every group at the
/// mean of its targets.
pub fn partition_criterion(
    targets: &ResidualTargets,
    labels: &[usize],
    cfg: &PenaltyConfig,
) -> f64 {
    let groups = group_stats(targets, labels);
    let mut total: f64 = groups.iter().map(GroupStats::data).sum();
    for g in 0..groups.len() {
        for h in g + 1..groups.len() {
            total += group_penalty(&groups[g], &groups[h], cfg);
        }
    }
    total
}

fn group_stats(targets: &ResidualTargets, labels: &[usize]) -> Vec<GroupStats> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![GroupStats::empty(targets.dim()); k];
    for (i, &g) in labels.iter().enumerate() {
        let row: Vec<f64> = targets.u.row(i).iter().copied().collect();
        groups[g].add(&row, 1.0);
    }
    groups
}

const MAX_SWEEPS: usize = 100;

/// Greedy descent on the criterion over cluster-constant α (each group at
/// the mean of its targets): repeatedly moves single rows between groups and
/// merges pairs of groups while either lowers the criterion. Returns labels
/// numbered by first appearance and the group count.
pub fn refine_partition(
    targets: &ResidualTargets,
    labels: &[usize],
    cfg: &PenaltyConfig,
) -> (Vec<usize>, usize) {
    let n = targets.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| targets.u.row(i).iter().copied().collect())
        .collect();
    let mut labels = labels.to_vec();
    let mut groups = group_stats(targets, &labels);
    let scale = partition_criterion(targets, &labels, cfg).abs().max(1.0);
    let eps = 1e-12 * scale;

    for _ in 0..MAX_SWEEPS {
        let mut improved = false;
        for i in 0..n {
            let g = labels[i];
            let mut best = (g, -eps);
            for h in 0..groups.len() {
                if h == g || groups[h].size == 0.0 {
                    continue;
                }
                let before = local_cost(&groups, g, h, &groups[g], &groups[h], cfg);
                let (mut a, mut b) = (groups[g].clone(), groups[h].clone());
                a.add(&rows[i], -1.0);
                b.add(&rows[i], 1.0);
                let delta = local_cost(&groups, g, h, &a, &b, cfg) - before;
                if delta < best.1 {
                    best = (h, delta);
                }
            }
            if best.0 != g {
                groups[g].add(&rows[i], -1.0);
                groups[best.0].add(&rows[i], 1.0);
                labels[i] = best.0;
                improved = true;
            }
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for g in 0..groups.len() {
            for h in g + 1..groups.len() {
                if groups[g].size == 0.0 || groups[h].size == 0.0 {
                    continue;
                }
                let before = local_cost(&groups, g, h, &groups[g], &groups[h], cfg);
                let merged = groups[g].merged(&groups[h]);
                let empty = GroupStats::empty(targets.dim());
                let delta = local_cost(&groups, g, h, &merged, &empty, cfg) - before;
                if delta < best.map_or(-eps, |b| b.2) {
                    best = Some((g, h, delta));
                }
            }
        }
        if let Some((g, h, _)) = best {
            groups[g] = groups[g].merged(&groups[h]);
            groups[h] = GroupStats::empty(targets.dim());
            labels.iter_mut().filter(|l| **l == h).for_each(|l| *l = g);
            improved = true;
        }
        if !improved {
            break;
        }
    }
    renumber(&labels)
}

/// Relabels 0..k by first appearance.
pub fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// n × d matrix with each row replaced by the mean target of its group.
pub fn group_means(targets: &ResidualTargets, labels: &[usize], k: usize) -> DMatrix<f64> {
    coalesce(&targets.u, labels, k)
}
