//! Real-data workflow: logit-type response transform, standardization, and a
//! scan over which covariates to treat as heterogeneous.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{standardize_columns, ColumnSelector, Dataset};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::homogeneous_rss;
use crate::tuning::{fit_tuned, TuningConfig};

/// ỹᵢ = log((a + yᵢ)/(b − yᵢ)). Requires a > 0 and every yᵢ in [0, b − a].
pub fn transform_response(y: &DVector<f64>, a: f64, b: f64) -> Result<DVector<f64>> {
    if !(a > 0.0) || !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "transform needs 0 < a < b, got a = {a}, b = {b}"
        )));
    }
    let mut out = DVector::zeros(y.len());
    for (i, &v) in y.iter().enumerate() {
        if !(v >= 0.0 && v <= b - a) {
            return Err(Error::Domain { index: i, value: v });
        }
        out[i] = ((a + v) / (b - v)).ln();
    }
    Ok(out)
}

/// Transforms the response with (a, b) and standardizes every covariate.
pub fn prepare_real_data(dataset: &Dataset, a: f64, b: f64) -> Result<Dataset> {
    let y = transform_response(dataset.y(), a, b)?;
    let (standardized, _) = standardize_columns(&dataset.with_response(y)?, &ColumnSelector::All)?;
    Ok(standardized)
}

/// Every covariate on its own.
pub fn all_singletons(dataset: &Dataset) -> Vec<Vec<String>> {
    dataset
        .x_names()
        .iter()
        .chain(dataset.z_names())
        .map(|n| vec![n.clone()])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    /// Columns treated as heterogeneous.
    pub columns: Vec<String>,
    pub rss: Option<f64>,
    pub k_hat: Option<usize>,
    pub group_sizes: Vec<usize>,
    pub lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    /// RSS of least squares on all covariates with no heterogeneity.
    pub baseline_rss: f64,
    /// Successful candidates by ascending RSS, then failed ones.
    pub entries: Vec<ScanEntry>,
}

/// Fits the tuned model once per candidate set of heterogeneous columns; the
/// remaining covariates form X. Failures are recorded and the scan goes on.
pub fn model_scan(
    dataset: &Dataset,
    candidates: &[Vec<String>],
    config: &TuningConfig,
) -> Result<ScanReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no scan candidates given".into()));
    }
    let pooled = DMatrix::from_columns(
        &dataset
            .x()
            .column_iter()
            .chain(dataset.z().column_iter())
            .collect::<Vec<_>>(),
    );
    let baseline_rss = homogeneous_rss(dataset.y(), &pooled)?;
    let mut entries: Vec<ScanEntry> = candidates
        .par_iter()
        .map(|columns| {
            let fitted = if columns.is_empty() {
                Err(Error::InvalidConfig("empty candidate".into()))
            } else {
                dataset.regroup(columns).and_then(|d| fit_tuned(&d, config))
            };
            match fitted {
                Ok(fit) => ScanEntry {
                    columns: columns.clone(),
                    rss: Some(fit.model.rss),
                    k_hat: Some(fit.model.k_hat),
                    group_sizes: fit.model.group_sizes(),
                    lambda: Some(fit.lambda),
                    error: None,
                },
                Err(e) => ScanEntry {
                    columns: columns.clone(),
                    rss: None,
                    k_hat: None,
                    group_sizes: Vec::new(),
                    lambda: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    entries.sort_by(|a, b| match (a.rss, b.rss) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(ScanReport {
        baseline_rss,
        entries,
    })
}

/// Column names of the car-sales layout, response first.
pub const CAR_SALES_COLUMNS: [&str; 7] = ["y", "age", "gender", "age25", "marital", "size", "type"];

pub const CAR_SALES_ROWS: usize = 259;

/// A synthetic table with the car-sales layout: binary choice `y`, age
/// 18–60, gender, an age ≤ 25 flag, marital status, preferred size 0–2 and
/// car type 0–2. Two latent buyer segments react differently to marital
/// status and size. Not the original data.
pub fn car_sales_synthetic(seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = CAR_SALES_ROWS;
    let mut data = DMatrix::zeros(n, CAR_SALES_COLUMNS.len());
    for i in 0..n {
        let age = rng.random_range(18..=60) as f64;
        let gender = rng.random_range(0..=1) as f64;
        let marital = f64::from(rng.random_bool(0.6));
        let size = rng.random_range(0..=2) as f64;
        let kind = rng.random_range(0..=2) as f64;
        let loyal = rng.random_bool(0.5);
        let (m_eff, s_eff) = if loyal { (1.5, 1.2) } else { (-0.5, -1.0) };
        let score = -0.2 + m_eff * marital + s_eff * (size - 1.0) + 0.01 * (age - 40.0)
            - 0.2 * gender
            + 0.1 * (kind - 1.0);
        let p = 1.0 / (1.0 + (-score).exp());
        data[(i, 0)] = f64::from(rng.random_bool(p));
        data[(i, 1)] = age;
        data[(i, 2)] = gender;
        data[(i, 3)] = f64::from(age <= 25.0);
        data[(i, 4)] = marital;
        data[(i, 5)] = size;
        data[(i, 6)] = kind;
    }
    Table {
        names: CAR_SALES_COLUMNS.iter().map(|s| s.to_string()).collect(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::CsvSchema;

    #[test]
    fn transform_endpoints() {
        let t = transform_response(&DVector::from_vec(vec![0.0, 1.0]), 0.01, 1.01).unwrap();
        assert!((t[0] - (0.01f64 / 1.01).ln()).abs() < 1e-12);
        assert!((t[0] + 4.6151).abs() < 1e-4);
        assert!((t[1] - 101f64.ln()).abs() < 1e-12);
        assert!((t[0] + t[1]).abs() < 1e-12);
    }

    #[test]
    fn transform_domain_errors_name_the_index() {
        match transform_response(&DVector::from_vec(vec![0.5, 1.2]), 0.01, 1.01) {
            Err(Error::Domain { index, value }) => assert_eq!((index, value), (1, 1.2)),
            other => panic!("expected a domain error, got {other:?}"),
        }
        assert!(transform_response(&DVector::from_vec(vec![0.5]), 0.0, 1.01).is_err());
    }

    #[test]
    fn synthetic_car_table_has_the_layout() {
        let t = car_sales_synthetic(1);
        assert_eq!(t.data.shape(), (259, 7));
        let age = t.column("age").unwrap();
        assert!(age.iter().all(|&a| (18.0..=60.0).contains(&a)));
        for name in ["y", "gender", "age25", "marital"] {
            assert!(t
                .column(name)
                .unwrap()
                .iter()
                .all(|&v| v == 0.0 || v == 1.0));
        }
        assert_eq!(car_sales_synthetic(1), t);
        let schema = CsvSchema::new(
            "y",
            &["age", "gender", "age25", "type"],
            &["marital", "size"],
        );
        assert_eq!(t.to_dataset(&schema).unwrap().n(), 259);
    }
}
