//! Observed data, validation, column standardization and subset moments.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Response `y` with homogeneous covariates `x` (n×d_X) and heterogeneous
/// covariates `z` (n×d_Z). Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    x_names: Vec<String>,
    z_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, rejecting anything [`validate_parts`] fails.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let x_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let z_names = (1..=z.ncols()).map(|j| format!("z{j}")).collect();
        Self::with_names(y, x, z, x_names, z_names)
    }

    pub fn with_names(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        if x_names.len() != x.ncols() || z_names.len() != z.ncols() {
            return Err(Error::DimensionMismatch(
                "column name count differs from column count".into(),
            ));
        }
        let report = validate_parts(&y, &x, &z);
        if !report.passed() {
            return Err(Error::InvalidData(report.failures().join("; ")));
        }
        Ok(Dataset {
            y,
            x,
            z,
            x_names,
            z_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_z(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    pub fn validate(&self) -> ValidationReport {
        validate_parts(&self.y, &self.x, &self.z)
    }

    /// Same dataset with `y` replaced.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::with_names(
            y,
            self.x.clone(),
            self.z.clone(),
            self.x_names.clone(),
            self.z_names.clone(),
        )
    }

    /// Rows of `subset`, in subset order.
    /// Pools the X and Z columns and re-splits them by name: `z_columns` (in
    /// that order) become Z, every other column stays in X in its pooled
    /// order.
    pub fn regroup(&self, z_columns: &[String]) -> Result<Self> {
        let names: Vec<&String> = self.x_names.iter().chain(&self.z_names).collect();
        let column = |k: usize| {
            if k < self.d_x() {
                self.x.column(k)
            } else {
                self.z.column(k - self.d_x())
            }
        };
        let mut z_idx = Vec::with_capacity(z_columns.len());
        for name in z_columns {
            let k = names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::InvalidData(format!("no column named `{name}`")))?;
            if z_idx.contains(&k) {
                return Err(Error::InvalidData(format!("column `{name}` listed twice")));
            }
            z_idx.push(k);
        }
        let x_idx: Vec<usize> = (0..names.len()).filter(|k| !z_idx.contains(k)).collect();
        if x_idx.is_empty() || z_idx.is_empty() {
            return Err(Error::InvalidData(
                "regrouping must leave at least one column in each of X and Z".into(),
            ));
        }
        let build = |idx: &[usize]| {
            let cols: Vec<_> = idx.iter().map(|&k| column(k)).collect();
            DMatrix::from_columns(&cols)
        };
        let pick = |idx: &[usize]| idx.iter().map(|&k| names[k].clone()).collect();
        Self::with_names(
            self.y.clone(),
            build(&x_idx),
            build(&z_idx),
            pick(&x_idx),
            pick(&z_idx),
        )
    }

    pub fn select_rows(&self, subset: &IndexSubset) -> Result<Self> {
        subset.check_bounds(self.n())?;
        let rows = subset.as_slice();
        Ok(Dataset {
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(rows),
            z: self.z.select_rows(rows),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub severity: Severity,
    pub message: String,
}

/// Outcome of [`validate_parts`]: failures block construction, warnings do not.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.severity != Severity::Error)
    }

    pub fn failures(&self) -> Vec<String> {
        self.messages(Severity::Error)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.messages(Severity::Warning)
    }

    fn messages(&self, severity: Severity) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.severity == severity)
            .map(|c| c.message.clone())
            .collect()
    }

    fn fail(&mut self, name: &'static str, message: String) {
        self.checks.push(Check {
            name,
            severity: Severity::Error,
            message,
        });
    }

    fn warn(&mut self, name: &'static str, message: String) {
        self.checks.push(Check {
            name,
            severity: Severity::Warning,
            message,
        });
    }
}

/// Checks raw parts against the dataset invariants without building one.
/// Rows and columns in messages are 1-based.
pub fn validate_parts(y: &DVector<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = y.len();
    if n == 0 {
        report.fail("non-empty", "dataset has no rows".into());
    }
    if x.ncols() == 0 {
        report.fail("non-empty", "X has no columns".into());
    }
    if z.ncols() == 0 {
        report.fail("non-empty", "Z has no columns".into());
    }
    for (label, rows) in [("X", x.nrows()), ("Z", z.nrows())] {
        if rows != n {
            report.fail(
                "row-count",
                format!("{label} has {rows} rows but y has {n}"),
            );
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        report.fail(
            "finite",
            format!("y has a non-finite value at row {}", i + 1),
        );
    }
    for (label, m) in [("X", x), ("Z", z)] {
        'outer: for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if !m[(i, j)].is_finite() {
                    report.fail(
                        "finite",
                        format!(
                            "{label} has a non-finite value at row {}, column {}",
                            i + 1,
                            j + 1
                        ),
                    );
                    break 'outer;
                }
            }
        }
        if m.nrows() >= 2 {
            for j in 0..m.ncols() {
                let col = m.column(j);
                if col.iter().all(|&v| v == col[0]) {
                    report.warn(
                        "non-constant",
                        format!("{label} column {} is constant", j + 1),
                    );
                }
            }
        }
    }
    report
}

/// An ordered, duplicate-free, non-empty set of row indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSubset {
    indices: Vec<usize>,
}

impl IndexSubset {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidData("index subset is empty".into()));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidData(format!(
                    "index {i} out of range for {n} rows"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::InvalidData(format!("duplicate index {i}")));
            }
        }
        Ok(IndexSubset { indices })
    }

    pub fn full(n: usize) -> Self {
        assert!(n > 0, "full subset of an empty index set");
        IndexSubset {
            indices: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    fn check_bounds(&self, n: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= n) {
            Some(i) => Err(Error::DimensionMismatch(format!(
                "subset index {i} out of range for {n} rows"
            ))),
            None => Ok(()),
        }
    }
}

/// Subset means of the cross-moment blocks XXᵀ, XZᵀ, ZZᵀ, XY, ZY.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub m_xx: DMatrix<f64>,
    pub m_xz: DMatrix<f64>,
    pub m_zz: DMatrix<f64>,
    pub m_xy: DVector<f64>,
    pub m_zy: DVector<f64>,
    pub subset: IndexSubset,
}

impl MomentSet {
    pub fn m_zx(&self) -> DMatrix<f64> {
        self.m_xz.transpose()
    }
}

/// Above this many rows the moment sums switch to compensated summation.
const COMPENSATED_ROWS: usize = 10_000;

/// Neumaier-compensated running sums, one per entry.
struct Accumulator {
    sum: Vec<f64>,
    comp: Option<Vec<f64>>,
}

impl Accumulator {
    fn new(len: usize, compensated: bool) -> Self {
        Accumulator {
            sum: vec![0.0; len],
            comp: compensated.then(|| vec![0.0; len]),
        }
    }

    #[inline]
    fn add(&mut self, k: usize, v: f64) {
        match &mut self.comp {
            None => self.sum[k] += v,
            Some(c) => {
                let s = self.sum[k];
                let t = s + v;
                if s.abs() >= v.abs() {
                    c[k] += (s - t) + v;
                } else {
                    c[k] += (v - t) + s;
                }
                self.sum[k] = t;
            }
        }
    }

    fn finish(self) -> Vec<f64> {
        match self.comp {
            None => self.sum,
            Some(c) => self.sum.iter().zip(&c).map(|(s, c)| s + c).collect(),
        }
    }
}

/// Subset-mean moments over `subset`.
///
/// Rows are reduced sequentially in subset order, so results are bit-stable
/// for a given ordering.
pub fn moments(dataset: &Dataset, subset: &IndexSubset) -> Result<MomentSet> {
    subset.check_bounds(dataset.n())?;
    let (dx, dz) = (dataset.d_x(), dataset.d_z());
    let (x, z, y) = (dataset.x(), dataset.z(), dataset.y());
    let off_xz = dx * dx;
    let off_zz = off_xz + dx * dz;
    let off_xy = off_zz + dz * dz;
    let off_zy = off_xy + dx;
    let mut acc = Accumulator::new(off_zy + dz, subset.len() > COMPENSATED_ROWS);
    for i in subset.iter() {
        let yi = y[i];
        for a in 0..dx {
            let xa = x[(i, a)];
            for b in 0..dx {
                acc.add(a * dx + b, xa * x[(i, b)]);
            }
            for b in 0..dz {
                acc.add(off_xz + a * dz + b, xa * z[(i, b)]);
            }
            acc.add(off_xy + a, xa * yi);
        }
        for a in 0..dz {
            let za = z[(i, a)];
            for b in 0..dz {
                acc.add(off_zz + a * dz + b, za * z[(i, b)]);
            }
            acc.add(off_zy + a, za * yi);
        }
    }
    let scale = 1.0 / subset.len() as f64;
    let sums: Vec<f64> = acc.finish().into_iter().map(|s| s * scale).collect();
    Ok(MomentSet {
        m_xx: DMatrix::from_row_slice(dx, dx, &sums[..off_xz]),
        m_xz: DMatrix::from_row_slice(dx, dz, &sums[off_xz..off_zz]),
        m_zz: DMatrix::from_row_slice(dz, dz, &sums[off_zz..off_xy]),
        m_xy: DVector::from_column_slice(&sums[off_xy..off_zy]),
        m_zy: DVector::from_column_slice(&sums[off_zy..]),
        subset: subset.clone(),
    })
}

/// A column of either covariate block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnRef {
    X(usize),
    Z(usize),
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::X(j) => write!(f, "X[{}]", j + 1),
            ColumnRef::Z(j) => write!(f, "Z[{}]", j + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    AllX,
    AllZ,
    All,
    Columns(Vec<ColumnRef>),
}

impl ColumnSelector {
    fn resolve(&self, dataset: &Dataset) -> Result<Vec<ColumnRef>> {
        let xs = (0..dataset.d_x()).map(ColumnRef::X);
        let zs = (0..dataset.d_z()).map(ColumnRef::Z);
        let cols: Vec<ColumnRef> = match self {
            ColumnSelector::AllX => xs.collect(),
            ColumnSelector::AllZ => zs.collect(),
            ColumnSelector::All => xs.chain(zs).collect(),
            ColumnSelector::Columns(c) => c.clone(),
        };
        for c in &cols {
            let ok = match *c {
                ColumnRef::X(j) => j < dataset.d_x(),
                ColumnRef::Z(j) => j < dataset.d_z(),
            };
            if !ok {
                return Err(Error::InvalidData(format!("column {c} does not exist")));
            }
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaling {
    pub column: ColumnRef,
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// Per-column (mean, sd) applied by [`standardize_columns`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalingRecord {
    pub columns: Vec<ColumnScaling>,
}

impl ScalingRecord {
    /// Undoes the standardization on a dataset with the same layout.
    pub fn invert(&self, dataset: &Dataset) -> Result<Dataset> {
        let (mut x, mut z) = (dataset.x().clone(), dataset.z().clone());
        for s in &self.columns {
            let mut col = match s.column {
                ColumnRef::X(j) => x.column_mut(j),
                ColumnRef::Z(j) => z.column_mut(j),
            };
            col.apply(|v| *v = *v * s.sd + s.mean);
        }
        Dataset::with_names(
            dataset.y().clone(),
            x,
            z,
            dataset.x_names().to_vec(),
            dataset.z_names().to_vec(),
        )
    }
}

/// Centers and scales the selected columns to sample mean 0 and sample
/// variance 1 (denominator n−1).
pub fn standardize_columns(
    dataset: &Dataset,
    which: &ColumnSelector,
) -> Result<(Dataset, ScalingRecord)> {
    let cols = which.resolve(dataset)?;
    let n = dataset.n();
    let (mut x, mut z) = (dataset.x().clone(), dataset.z().clone());
    let mut record = ScalingRecord::default();
    for c in cols {
        let (mut col, name) = match c {
            ColumnRef::X(j) => (x.column_mut(j), dataset.x_names()[j].clone()),
            ColumnRef::Z(j) => (z.column_mut(j), dataset.z_names()[j].clone()),
        };
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        if !(sd > 0.0) {
            return Err(Error::ConstantColumn { column: name });
        }
        col.apply(|v| *v = (*v - mean) / sd);
        record.columns.push(ColumnScaling {
            column: c,
            name,
            mean,
            sd,
        });
    }
    let out = Dataset::with_names(
        dataset.y().clone(),
        x,
        z,
        dataset.x_names().to_vec(),
        dataset.z_names().to_vec(),
    )?;
    Ok((out, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            DVector::from_vec(vec![1.0, 2.0, 4.0]),
            DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(3, 1, &[0.5, -1.0, 2.0]),
        )
        .unwrap()
    }

    #[test]
    fn regroup_moves_columns_by_name() {
        let d = Dataset::with_names(
            DVector::from_vec(vec![1.0, 2.0, 4.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 5.0]),
            DMatrix::from_row_slice(3, 1, &[0.5, -1.0, 2.0]),
            vec!["a".into(), "b".into()],
            vec!["c".into()],
        )
        .unwrap();
        let r = d.regroup(&["b".to_string()]).unwrap();
        assert_eq!(r.x_names(), ["a", "c"]);
        assert_eq!(r.z_names(), ["b"]);
        assert_eq!(r.x().column(1), d.z().column(0));
        assert_eq!(r.z().column(0), d.x().column(1));
        assert!(d.regroup(&["nope".to_string()]).is_err());
        assert!(d
            .regroup(&["a".to_string(), "b".to_string(), "c".to_string()])
            .is_err());
    }

    #[test]
    fn well_formed_dataset_passes() {
        assert!(tiny().validate().passed());
    }

    #[test]
    fn nan_in_z_names_row_and_column() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, f64::NAN, 5.0, 6.0]);
        let report = validate_parts(
            &DVector::from_vec(vec![1.0, 2.0, 3.0]),
            &DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
            &z,
        );
        assert!(!report.passed());
        let msg = report.failures().join("\n");
        assert!(msg.contains("row 2, column 2"), "{msg}");
    }

    #[test]
    fn row_count_mismatch_fails() {
        let report = validate_parts(
            &DVector::from_vec(vec![1.0, 2.0, 3.0]),
            &DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]),
            &DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
        );
        assert!(!report.passed());
        assert!(report.checks.iter().any(|c| c.name == "row-count"));
    }

    #[test]
    fn constant_column_is_only_a_warning() {
        let report = validate_parts(
            &DVector::from_vec(vec![1.0, 2.0]),
            &DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            &DMatrix::from_row_slice(2, 1, &[7.0, 7.0]),
        );
        assert!(report.passed());
        assert_eq!(report.warnings().len(), 1);
    }

    #[test]
    fn standardize_hand_example() {
        let (d, rec) = standardize_columns(&tiny(), &ColumnSelector::AllX).unwrap();
        let col: Vec<f64> = d.x().column(0).iter().copied().collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
        assert_eq!(rec.columns[0].mean, 2.0);
        assert_eq!(rec.columns[0].sd, 1.0);
        let back = rec.invert(&d).unwrap();
        assert_eq!(back.x(), tiny().x());
    }

    #[test]
    fn standardize_is_idempotent() {
        let (once, _) = standardize_columns(&tiny(), &ColumnSelector::All).unwrap();
        let (twice, _) = standardize_columns(&once, &ColumnSelector::All).unwrap();
        for (a, b) in once.z().iter().zip(twice.z().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_cannot_be_standardized() {
        let d = Dataset::new(
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]),
            DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]),
        )
        .unwrap();
        match standardize_columns(&d, &ColumnSelector::AllX) {
            Err(Error::ConstantColumn { column }) => assert_eq!(column, "x1"),
            other => panic!("expected constant column error, got {other:?}"),
        }
    }

    #[test]
    fn single_row_moments() {
        let d = Dataset::new(
            DVector::from_vec(vec![4.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::from_row_slice(1, 1, &[3.0]),
        )
        .unwrap();
        let m = moments(&d, &IndexSubset::full(1)).unwrap();
        assert_eq!(m.m_xx[(0, 0)], 4.0);
        assert_eq!(m.m_xz[(0, 0)], 6.0);
        assert_eq!(m.m_zz[(0, 0)], 9.0);
        assert_eq!(m.m_xy[0], 8.0);
        assert_eq!(m.m_zy[0], 12.0);
    }

    #[test]
    fn zero_z_gives_zero_blocks() {
        let d = Dataset::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 3.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let m = moments(&d, &IndexSubset::full(2)).unwrap();
        assert!(m.m_zz.iter().all(|&v| v == 0.0));
        assert!(m.m_xz.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subset_rejects_bad_indices() {
        assert!(IndexSubset::new(vec![], 3).is_err());
        assert!(IndexSubset::new(vec![0, 0], 3).is_err());
        assert!(IndexSubset::new(vec![3], 3).is_err());
    }

    #[test]
    fn compensated_path_agrees_with_plain_sums() {
        let n = 20_001;
        let y = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());
        let x = DMatrix::from_fn(n, 2, |i, j| ((i + 3 * j) as f64 * 0.11).cos());
        let z = DMatrix::from_fn(n, 1, |i, _| 1.0 + (i % 7) as f64);
        let d = Dataset::new(y, x, z).unwrap();
        let big = moments(&d, &IndexSubset::full(n)).unwrap();
        let exact = d.z().column(0).iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((big.m_zz[(0, 0)] - exact).abs() < 1e-12 * exact);
    }
}
