//! Closed-form group-average estimators.
//!
//! The homogeneous coefficient comes from the full-sample moment equations
//! with the heterogeneous part replaced by its sample average; a subgroup's
//! average heterogeneous coefficient then follows from that subgroup's
//! moments.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, IndexSubset, MomentSet};
use crate::error::{Error, Result};
use crate::linalg::Factorized;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    pub beta_hat: DVector<f64>,
    /// Condition estimate of the Schur complement that was inverted.
    pub condition_number: f64,
}

/// β̂ = (M_xx − M_xz M_zz⁻¹ M_zx)⁻¹ (M_xy − M_xz M_zz⁻¹ M_zy).
pub fn fit_beta(moments: &MomentSet) -> Result<BetaEstimate> {
    let zz = Factorized::new(&moments.m_zz, "mean ZZᵀ")?;
    // M_zz⁻¹ M_zx, d_Z × d_X
    let zz_inv_zx = zz.solve_matrix(&moments.m_zx());
    let schur = &moments.m_xx - &moments.m_xz * &zz_inv_zx;
    let rhs = &moments.m_xy - &moments.m_xz * zz.solve(&moments.m_zy);
    let schur_f = Factorized::new(&symmetrize(schur), "Schur complement of mean ZZᵀ")?;
    let beta_hat = schur_f.solve(&rhs);
    if beta_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            what: "Schur complement of mean ZZᵀ".into(),
            condition: f64::INFINITY,
        });
    }
    Ok(BetaEstimate {
        beta_hat,
        condition_number: schur_f.condition().max(1.0),
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupThetaEstimate {
    pub theta_hat: DVector<f64>,
    pub subset: IndexSubset,
}

/// Subgroup-average θ̂ = (M_zz)_𝒜⁻¹ ((M_zy)_𝒜 − (M_zx)_𝒜 β̂).
pub fn subgroup_theta(moments: &MomentSet, beta: &BetaEstimate) -> Result<SubgroupThetaEstimate> {
    if beta.beta_hat.len() != moments.m_xx.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "β̂ has {} entries but X has {} columns",
            beta.beta_hat.len(),
            moments.m_xx.nrows()
        )));
    }
    let zz = Factorized::new(&moments.m_zz, "subgroup mean ZZᵀ")?;
    let rhs = &moments.m_zy - moments.m_xz.tr_mul(&beta.beta_hat);
    Ok(SubgroupThetaEstimate {
        theta_hat: zz.solve(&rhs),
        subset: moments.subset.clone(),
    })
}

/// The per-row vectors uᵢ = Zᵢ(yᵢ − Xᵢᵀβ̂) that the clustering fuses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTargets {
    /// n × d_Z, row i is uᵢ.
    pub u: DMatrix<f64>,
    pub beta_used: Option<BetaEstimate>,
}

impl ResidualTargets {
    /// Targets given directly, for clustering arbitrary points.
    pub fn from_matrix(u: DMatrix<f64>) -> Result<Self> {
        if u.nrows() == 0 || u.ncols() == 0 {
            return Err(Error::InvalidData("targets must be non-empty".into()));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("targets must be finite".into()));
        }
        Ok(ResidualTargets { u, beta_used: None })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// Row-major copy of `u`.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.u.transpose().as_slice().to_vec()
    }

    /// Mean target ū.
    pub fn mean(&self) -> DVector<f64> {
        self.u.row_mean().transpose()
    }
}

pub fn residual_targets(dataset: &Dataset, beta: &BetaEstimate) -> Result<ResidualTargets> {
    if beta.beta_hat.len() != dataset.d_x() {
        return Err(Error::DimensionMismatch(format!(
            "β̂ has {} entries but X has {} columns",
            beta.beta_hat.len(),
            dataset.d_x()
        )));
    }
    let resid = dataset.y() - dataset.x() * &beta.beta_hat;
    let mut u = dataset.z().clone();
    for (i, mut row) in u.row_iter_mut().enumerate() {
        row *= resid[i];
    }
    Ok(ResidualTargets {
        u,
        beta_used: Some(beta.clone()),
    })
}

/// Back-transform θ̃ᵢ = (mean ZZᵀ)⁻¹ α̃ᵢ for every row of `alpha`.
pub fn theta_from_alpha(alpha: &DMatrix<f64>, moments: &MomentSet) -> Result<DMatrix<f64>> {
    if alpha.ncols() != moments.m_zz.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "α has {} columns but Z has {}",
            alpha.ncols(),
            moments.m_zz.nrows()
        )));
    }
    let zz = Factorized::new(&moments.m_zz, "mean ZZᵀ")?;
    Ok(zz.solve_matrix(&alpha.transpose()).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::moments;

    fn ds(y: &[f64], x: &[f64], dx: usize, z: &[f64], dz: usize) -> Dataset {
        let n = y.len();
        Dataset::new(
            DVector::from_column_slice(y),
            DMatrix::from_row_slice(n, dx, x),
            DMatrix::from_row_slice(n, dz, z),
        )
        .unwrap()
    }

    #[test]
    fn beta_hand_example() {
        let d = ds(&[3.0, -1.0], &[1.0, -1.0], 1, &[1.0, 1.0], 1);
        let m = moments(&d, &IndexSubset::full(2)).unwrap();
        assert_eq!((m.m_xx[(0, 0)], m.m_xz[(0, 0)], m.m_xy[0]), (1.0, 0.0, 2.0));
        let b = fit_beta(&m).unwrap();
        assert!((b.beta_hat[0] - 2.0).abs() < 1e-15);
        assert!(b.condition_number >= 1.0);
    }

    #[test]
    fn singleton_subgroup_with_two_z_is_singular() {
        let d = ds(
            &[1.0, 2.0, 0.5],
            &[1.0, 0.0, 2.0],
            1,
            &[1.0, 2.0, 0.3, 1.0, 2.0, 2.0],
            2,
        );
        let m = moments(&d, &IndexSubset::new(vec![1], 3).unwrap()).unwrap();
        let beta = BetaEstimate {
            beta_hat: DVector::from_vec(vec![0.5]),
            condition_number: 1.0,
        };
        assert!(matches!(
            subgroup_theta(&m, &beta),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn residual_targets_hand_example() {
        // X₁ᵀβ̂ = 3 with X₁ = 1, β̂ = 3.
        let d = ds(&[5.0], &[1.0], 1, &[1.0, 2.0], 2);
        let beta = BetaEstimate {
            beta_hat: DVector::from_vec(vec![3.0]),
            condition_number: 1.0,
        };
        let t = residual_targets(&d, &beta).unwrap();
        assert_eq!(
            t.u.row(0).iter().copied().collect::<Vec<_>>(),
            vec![2.0, 4.0]
        );
    }

    #[test]
    fn zero_beta_targets_are_zy() {
        let d = ds(&[2.0, -1.0], &[1.0, 4.0], 1, &[3.0, 5.0], 1);
        let beta = BetaEstimate {
            beta_hat: DVector::zeros(1),
            condition_number: 1.0,
        };
        let t = residual_targets(&d, &beta).unwrap();
        assert_eq!(t.u.as_slice(), &[6.0, -5.0]);
    }

    #[test]
    fn theta_from_alpha_scalar_and_identity() {
        let d = ds(&[1.0, 1.0], &[1.0, 2.0], 1, &[2.0, 2.0], 1);
        let m = moments(&d, &IndexSubset::full(2)).unwrap();
        assert_eq!(m.m_zz[(0, 0)], 4.0);
        let theta = theta_from_alpha(&DMatrix::from_element(2, 1, 2.0), &m).unwrap();
        assert_eq!(theta.as_slice(), &[0.5, 0.5]);

        let mut m_id = m.clone();
        m_id.m_zz = DMatrix::identity(2, 2);
        let alpha = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.25, 3.0]);
        assert_eq!(theta_from_alpha(&alpha, &m_id).unwrap(), alpha);
    }
}
