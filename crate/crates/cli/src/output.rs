//! CSV artifacts and text reports. Numbers use Rust's shortest round-trip
//! formatting so repeated runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use subfuse_core::io::write_csv_table;
use subfuse_core::realdata::ScanReport;
use subfuse_core::simulation::{SimSummary, Stat};
use subfuse_core::tuning::{LambdaPath, TuningTraceRow};
use subfuse_core::{Dataset, GroupModel, Trace};

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_table(path: &Path, names: &[String], data: &DMatrix<f64>) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv_table(std::io::BufWriter::new(file), names, data)?;
    Ok(())
}

/// beta.csv (one row, X names), groups.csv (1-based row and group) and
/// theta.csv (group, size, one column per Z name) in `dir`.
pub fn write_model(dir: &Path, dataset: &Dataset, model: &GroupModel) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let beta = &model.beta.beta_hat;
    write_table(
        &dir.join("beta.csv"),
        dataset.x_names(),
        &DMatrix::from_row_slice(1, beta.len(), beta.as_slice()),
    )?;
    let groups = DMatrix::from_fn(model.labels.len(), 2, |i, j| match j {
        0 => (i + 1) as f64,
        _ => (model.labels[i] + 1) as f64,
    });
    write_table(
        &dir.join("groups.csv"),
        &["row".to_string(), "group".to_string()],
        &groups,
    )?;
    let sizes = model.group_sizes();
    let d_z = dataset.d_z();
    let theta = DMatrix::from_fn(model.k_hat, d_z + 2, |g, j| match j {
        0 => (g + 1) as f64,
        1 => sizes[g] as f64,
        _ => model.groups[g].estimate.theta_hat[j - 2],
    });
    let names: Vec<String> = ["group", "size"]
        .iter()
        .map(|s| s.to_string())
        .chain(dataset.z_names().iter().cloned())
        .collect();
    write_table(&dir.join("theta.csv"), &names, &theta)
}

pub fn model_report(dataset: &Dataset, model: &GroupModel, lambda: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "n = {}, d_x = {}, d_z = {}",
        dataset.n(),
        dataset.d_x(),
        dataset.d_z()
    );
    let _ = writeln!(s, "lambda = {lambda:.6}");
    let _ = writeln!(
        s,
        "groups = {}  sizes = {:?}",
        model.k_hat,
        model.group_sizes()
    );
    let _ = writeln!(s, "rss = {:.6}", model.rss);
    let _ = writeln!(s, "beta:");
    for (name, b) in dataset.x_names().iter().zip(model.beta.beta_hat.iter()) {
        let _ = writeln!(s, "  {name:<12} {b:>12.6}");
    }
    let _ = writeln!(s, "theta:");
    for (g, fit) in model.groups.iter().enumerate() {
        let values: Vec<String> = fit
            .estimate
            .theta_hat
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        let _ = writeln!(s, "  group {:<3} [{}]", g + 1, values.join(", "));
    }
    for w in &model.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

/// ADMM iterations; `lambda` is repeated per row when several runs are
/// written together.
pub fn write_admm_trace(path: &Path, runs: &[(f64, &Trace)]) -> Result<()> {
    let mut s = String::from("lambda,iteration,objective,primal_residual,dual_residual,k_hat\n");
    for (lambda, trace) in runs {
        for r in &trace.rows {
            let _ = writeln!(
                s,
                "{lambda},{},{},{},{},{}",
                r.iteration, r.objective, r.primal_residual, r.dual_residual, r.k_hat
            );
        }
    }
    write_text(path, &s)
}

/// λ, fold, score, k̂; the fold is empty for full-data scores.
pub fn write_tuning_trace(path: &Path, rows: &[TuningTraceRow]) -> Result<()> {
    let mut s = String::from("lambda,fold,score,k_hat\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.lambda,
            opt(r.fold.map(|f| f + 1)),
            opt(r.score),
            opt(r.k_hat)
        );
    }
    write_text(path, &s)
}

pub fn write_path(path: &Path, lp: &LambdaPath) -> Result<()> {
    let mut s = String::from("lambda,k_hat,objective,converged,iterations,cv_score,bic\n");
    for p in &lp.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.lambda,
            p.k_hat,
            p.objective,
            p.converged,
            p.iterations,
            opt(p.cv_score),
            opt(p.bic)
        );
    }
    write_text(path, &s)
}

pub fn path_report(lp: &LambdaPath, chosen: usize) -> String {
    let mut s = String::from("      lambda  k_hat    cv_score         bic  iters\n");
    for (i, p) in lp.points.iter().enumerate() {
        let mark = if i == chosen { " *" } else { "" };
        let _ = writeln!(
            s,
            "{:>12.6} {:>6} {:>11} {:>11} {:>6}{mark}",
            p.lambda,
            p.k_hat,
            p.cv_score.map_or("-".into(), |v| format!("{v:.5}")),
            p.bic.map_or("-".into(), |v| format!("{v:.5}")),
            p.iterations
        );
    }
    s
}

fn stat_cells(s: Option<&Stat>) -> String {
    match s {
        Some(s) => format!("{},{},{},{}", s.mean, s.median, s.std, s.count),
        None => ",,,0".into(),
    }
}

pub fn write_simulation(dir: &Path, summary: &SimSummary, ols: Option<&SimSummary>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut s = String::from("rep,k_hat,lambda,beta_sq_error,group_sizes\n");
    for (i, r) in summary.replications.iter().enumerate() {
        let sizes: Vec<String> = r.group_sizes.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            i + 1,
            opt(r.k_hat),
            opt(r.lambda),
            r.beta_sq_error,
            sizes.join(" ")
        );
    }
    write_text(&dir.join("replications.csv"), &s)?;

    let mut s = String::from("quantity,mean,median,std,count\n");
    let _ = writeln!(s, "k_hat,{}", stat_cells(summary.k_hat.as_ref()));
    for (g, comps) in summary.theta_matched.iter().enumerate() {
        for (l, st) in comps.iter().enumerate() {
            let _ = writeln!(s, "theta{}_{},{}", g + 1, l + 1, stat_cells(Some(st)));
        }
    }
    let _ = writeln!(
        s,
        "per,{},,,{}",
        opt(summary.per),
        summary.reps - summary.failures
    );
    let _ = writeln!(
        s,
        "beta_mse,{},,{},{}",
        summary.beta_mse,
        summary.beta_mse_std,
        summary.reps - summary.failures
    );
    if let Some(o) = ols {
        let _ = writeln!(
            s,
            "ols_beta_mse,{},,{},{}",
            o.beta_mse,
            o.beta_mse_std,
            o.reps - o.failures
        );
    }
    write_text(&dir.join("summary.csv"), &s)
}

pub fn simulation_report(summary: &SimSummary, ols: Option<&SimSummary>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "replications = {}  failures = {}",
        summary.reps, summary.failures
    );
    if let Some(k) = &summary.k_hat {
        let _ = writeln!(
            s,
            "k_hat  mean {:.3}  median {:.1}  std {:.3}",
            k.mean, k.median, k.std
        );
    }
    if let Some(per) = summary.per {
        let _ = writeln!(s, "per    {per:.3}");
    }
    for (g, comps) in summary.theta_matched.iter().enumerate() {
        for (l, st) in comps.iter().enumerate() {
            let _ = writeln!(
                s,
                "theta{}[{}]  mean {:.3}  median {:.3}  std {:.3}  ({} matched)",
                g + 1,
                l + 1,
                st.mean,
                st.median,
                st.std,
                st.count
            );
        }
    }
    let _ = writeln!(
        s,
        "beta mse  {:.4} (std {:.4})",
        summary.beta_mse, summary.beta_mse_std
    );
    if let Some(o) = ols {
        let _ = writeln!(s, "ols  mse  {:.4} (std {:.4})", o.beta_mse, o.beta_mse_std);
    }
    s
}

pub fn write_scan(path: &Path, report: &ScanReport) -> Result<()> {
    let mut s = String::from("columns,rss,k_hat,lambda,group_sizes,error\n");
    let _ = writeln!(s, "(none),{},1,,,", report.baseline_rss);
    for e in &report.entries {
        let sizes: Vec<String> = e.group_sizes.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            quote(&e.columns.join("+")),
            opt(e.rss),
            opt(e.k_hat),
            opt(e.lambda),
            sizes.join(" "),
            quote(e.error.as_deref().unwrap_or(""))
        );
    }
    write_text(path, &s)
}

pub fn scan_report(report: &ScanReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<28} {:>10} {:>6}  sizes",
        "heterogeneous", "rss", "k_hat"
    );
    let _ = writeln!(s, "{:<28} {:>10.4} {:>6}", "(none)", report.baseline_rss, 1);
    for e in &report.entries {
        match (e.rss, e.k_hat) {
            (Some(rss), Some(k)) => {
                let _ = writeln!(
                    s,
                    "{:<28} {rss:>10.4} {k:>6}  {:?}",
                    e.columns.join("+"),
                    e.group_sizes
                );
            }
            _ => {
                let _ = writeln!(
                    s,
                    "{:<28} failed: {}",
                    e.columns.join("+"),
                    e.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
    s
}
