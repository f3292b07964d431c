//! End-to-end fit: β̂, residual targets, fusion, partition, per-group refit.

use nalgebra::{DMatrix, DVector};

use crate::admm::{init_state, init_state_at, run_admm_from, AdmmState, StoppingRule, Trace};
use crate::dataset::{moments, Dataset, IndexSubset, MomentSet};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_beta, residual_targets, subgroup_theta, BetaEstimate, ResidualTargets,
    SubgroupThetaEstimate,
};
use crate::linalg::least_squares;
use crate::partition::{
    default_coalesce_tol, extract_partition, group_means, refine_partition, FusionResult,
};
use crate::penalty::PenaltyConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub estimate: SubgroupThetaEstimate,
    /// False when the group's own ZZᵀ was singular and θ̃ was used instead.
    pub refit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    pub beta: BetaEstimate,
    pub groups: Vec<GroupFit>,
    /// 0-based group of each row.
    pub labels: Vec<usize>,
    pub k_hat: usize,
    pub rss: f64,
    pub fusion: FusionResult,
    pub warnings: Vec<String>,
}

impl GroupModel {
    /// θ̂ of the group row `i` belongs to.
    pub fn theta_for_row(&self, i: usize) -> &DVector<f64> {
        &self.groups[self.labels[i]].estimate.theta_hat
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| g.estimate.subset.len())
            .collect()
    }

    /// Group refit: each discovered group gets the subgroup-average θ̂ from its
    /// own moments; a group whose ZZᵀ cannot be inverted keeps θ̃.
    pub fn from_fusion(
        dataset: &Dataset,
        beta: BetaEstimate,
        fusion: FusionResult,
    ) -> Result<Self> {
        if fusion.labels.len() != dataset.n() {
            return Err(Error::DimensionMismatch(format!(
                "partition covers {} rows but dataset has {}",
                fusion.labels.len(),
                dataset.n()
            )));
        }
        let mut groups = Vec::with_capacity(fusion.k_hat);
        let mut warnings = Vec::new();
        for (g, members) in fusion.groups().into_iter().enumerate() {
            let first = members[0];
            let subset = IndexSubset::new(members, dataset.n())?;
            let m = moments(dataset, &subset)?;
            match subgroup_theta(&m, &beta) {
                Ok(estimate) => groups.push(GroupFit {
                    estimate,
                    refit: true,
                }),
                Err(Error::Singular { .. }) => {
                    warnings.push(format!(
                        "group {} ({} rows): singular ZZᵀ, using the pooled back-transform",
                        g + 1,
                        subset.len()
                    ));
                    groups.push(GroupFit {
                        estimate: SubgroupThetaEstimate {
                            theta_hat: fusion.theta_tilde.row(first).transpose(),
                            subset,
                        },
                        refit: false,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let mut model = GroupModel {
            beta,
            groups,
            labels: fusion.labels.clone(),
            k_hat: fusion.k_hat,
            rss: 0.0,
            fusion,
            warnings,
        };
        model.rss = rss(dataset, &model)?;
        Ok(model)
    }
}

/// Σᵢ (yᵢ − Xᵢᵀβ̂ − Zᵢᵀθ̂_{g(i)})².
pub fn rss(dataset: &Dataset, model: &GroupModel) -> Result<f64> {
    if model.beta.beta_hat.len() != dataset.d_x()
        || model.labels.len() != dataset.n()
        || model
            .groups
            .iter()
            .any(|g| g.estimate.theta_hat.len() != dataset.d_z())
    {
        return Err(Error::DimensionMismatch(
            "model was fitted on data of a different shape".into(),
        ));
    }
    let fitted_x = dataset.x() * &model.beta.beta_hat;
    let mut total = 0.0;
    for i in 0..dataset.n() {
        let theta = model.theta_for_row(i);
        let zt: f64 = dataset
            .z()
            .row(i)
            .iter()
            .zip(theta.iter())
            .map(|(z, t)| z * t)
            .sum();
        let r = dataset.y()[i] - fitted_x[i] - zt;
        total += r * r;
    }
    Ok(total)
}

/// Σᵢ (yᵢ − Xᵢᵀβ̂ − Zᵢᵀθ̃ᵢ)² with the pairwise fusion estimator θ̃ in place of
/// the group refit.
pub fn fused_rss(dataset: &Dataset, beta: &BetaEstimate, fusion: &FusionResult) -> Result<f64> {
    if beta.beta_hat.len() != dataset.d_x()
        || fusion.theta_tilde.nrows() != dataset.n()
        || fusion.theta_tilde.ncols() != dataset.d_z()
    {
        return Err(Error::DimensionMismatch(
            "fusion was fitted on data of a different shape".into(),
        ));
    }
    let fitted_x = dataset.x() * &beta.beta_hat;
    let zt = dataset.z().component_mul(&fusion.theta_tilde).column_sum();
    Ok((dataset.y() - fitted_x - zt).norm_squared())
}

/// Residual sum of squares of ordinary least squares of `y` on `x`.
pub fn homogeneous_rss(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<f64> {
    let beta = least_squares(x, y)?;
    Ok((y - x * beta).norm_squared())
}

/// Full-sample moments, β̂ and residual targets: everything the clustering
/// needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub moments: MomentSet,
    pub beta: BetaEstimate,
    pub targets: ResidualTargets,
}

pub fn prepare(dataset: &Dataset) -> Result<Prepared> {
    let moments = moments(dataset, &IndexSubset::full(dataset.n()))?;
    let beta = fit_beta(&moments)?;
    let targets = residual_targets(dataset, &beta)?;
    Ok(Prepared {
        moments,
        beta,
        targets,
    })
}

const POLISH_ROUNDS: usize = 3;

/// Runs the ADMM from `start` and extracts the partition. With `refine`, the
/// partition is improved by [`refine_partition`] and the ADMM restarted from
/// the refined group means, until the partition is stable.
#[allow(clippy::too_many_arguments)]
pub fn solve_fusion(
    targets: &ResidualTargets,
    moments: &MomentSet,
    cfg: &PenaltyConfig,
    stop: &StoppingRule,
    coalesce_tol: f64,
    start: AdmmState,
    refine: bool,
    trace: Option<&mut Trace>,
) -> Result<(AdmmState, FusionResult)> {
    let mut state = run_admm_from(start, targets, cfg, stop, trace)?;
    let mut fusion = extract_partition(&state, coalesce_tol, moments)?;
    if !refine {
        return Ok((state, fusion));
    }
    for _ in 0..POLISH_ROUNDS {
        let (labels, k) = refine_partition(targets, &fusion.labels, cfg);
        if labels == fusion.labels {
            break;
        }
        let alpha = group_means(targets, &labels, k);
        let restart = init_state_at(targets, &alpha, cfg)?;
        state = run_admm_from(restart, targets, cfg, stop, None)?;
        fusion = extract_partition(&state, coalesce_tol, moments)?;
    }
    Ok((state, fusion))
}

/// Fits the model at a fixed λ, starting from α = u, with partition
/// refinement.
pub fn fit_heterogeneous_model(
    dataset: &Dataset,
    cfg: &PenaltyConfig,
    stop: &StoppingRule,
) -> Result<GroupModel> {
    fit_heterogeneous_model_traced(dataset, cfg, stop, None)
}

/// [`fit_heterogeneous_model`], recording the first ADMM run in `trace`.
pub fn fit_heterogeneous_model_traced(
    dataset: &Dataset,
    cfg: &PenaltyConfig,
    stop: &StoppingRule,
    trace: Option<&mut Trace>,
) -> Result<GroupModel> {
    let prep = prepare(dataset)?;
    let tol = default_coalesce_tol(&prep.targets);
    let start = init_state(&prep.targets, cfg)?;
    let trace = trace.map(|t| {
        t.coalesce_tol = tol;
        &mut *t
    });
    let (_, fusion) = solve_fusion(
        &prep.targets,
        &prep.moments,
        cfg,
        stop,
        tol,
        start,
        true,
        trace,
    )?;
    GroupModel::from_fusion(dataset, prep.beta, fusion)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_distinct_rows_without_fusion_stay_apart() {
        let d = Dataset::new(
            DVector::from_vec(vec![1.0, 5.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
        )
        .unwrap();
        let cfg = PenaltyConfig::with_lambda(0.0).unwrap();
        let m = fit_heterogeneous_model(&d, &cfg, &StoppingRule::default_for(2, 1)).unwrap();
        assert_eq!(m.k_hat, 2);
        // singleton refit θ̂ = (zy − zxβ̂)/z² is the single-row back-transform
        for (i, g) in m.groups.iter().enumerate() {
            let (y, x, z) = (d.y()[i], d.x()[(i, 0)], d.z()[(i, 0)]);
            let expected = (z * y - z * x * m.beta.beta_hat[0]) / (z * z);
            assert!((g.estimate.theta_hat[0] - expected).abs() < 1e-9);
        }
        assert!(m.rss < 1e-12);
    }

    #[test]
    fn rss_rejects_wrong_shape() {
        let d = Dataset::new(
            DVector::from_vec(vec![1.0, 5.0, 2.0]),
            DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.5]),
            DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 1.5]),
        )
        .unwrap();
        let cfg = PenaltyConfig::with_lambda(0.0).unwrap();
        let m = fit_heterogeneous_model(&d, &cfg, &StoppingRule::default_for(3, 1)).unwrap();
        let other = Dataset::new(
            DVector::from_vec(vec![1.0, 5.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
        )
        .unwrap();
        assert!(matches!(rss(&other, &m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn homogeneous_rss_of_exact_fit_is_zero() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = &x * DVector::from_vec(vec![2.0, -1.0]);
        assert!(homogeneous_rss(&y, &x).unwrap() < 1e-20);
    }
}
