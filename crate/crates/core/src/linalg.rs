//! Small dense solves for the moment equations.
//!
//! Every system here is d×d with d the number of covariates, so the cost is
//! negligible; what matters is refusing to solve a near-singular system.

use nalgebra::{Cholesky, ColPivQR, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Systems whose condition estimate exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Qr(ColPivQR<f64, Dyn, Dyn>),
}

/// A factorized square matrix: Cholesky when SPD, column-pivoted QR otherwise.
pub struct Factorized {
    factor: Factor,
    condition: f64,
}

impl std::fmt::Debug for Factorized {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.factor {
            Factor::Cholesky(_) => "cholesky",
            Factor::Qr(_) => "col-piv-qr",
        };
        f.debug_struct("Factorized")
            .field("kind", &kind)
            .field("condition", &self.condition)
            .finish()
    }
}

fn diag_ratio(diag: impl Iterator<Item = f64>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for d in diag {
        let d = d.abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

impl Factorized {
    /// Factorizes `a`, naming it `what` in any error.
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        assert!(a.is_square(), "factorize expects a square matrix");
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                what: what.to_string(),
                condition: f64::INFINITY,
            });
        }
        let factored = match a.clone().cholesky() {
            Some(chol) => {
                let ratio = diag_ratio(chol.l_dirty().diagonal().iter().copied());
                Factorized {
                    condition: ratio * ratio,
                    factor: Factor::Cholesky(chol),
                }
            }
            None => {
                let qr = a.clone().col_piv_qr();
                let condition = diag_ratio(qr.clone().unpack_r().diagonal().iter().copied());
                Factorized {
                    condition,
                    factor: Factor::Qr(qr),
                }
            }
        };
        if !(factored.condition <= MAX_CONDITION) {
            return Err(Error::Singular {
                what: what.to_string(),
                condition: factored.condition,
            });
        }
        Ok(factored)
    }

    /// Condition number estimate from the factor's diagonal (a lower bound
    /// on the 2-norm condition number).
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Qr(q) => q
                .solve(b)
                .expect("QR factor was checked for rank at construction"),
        }
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Qr(q) => q
                .solve(b)
                .expect("QR factor was checked for rank at construction"),
        }
    }
}

/// Least squares of `y` on the columns of `design` via the normal equations.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let gram = design.tr_mul(design);
    let rhs = design.tr_mul(y);
    Ok(Factorized::new(&gram, "least-squares Gram matrix")?.solve(&rhs))
}
