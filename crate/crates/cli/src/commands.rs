use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use subfuse_core::io::write_csv_table;
use subfuse_core::realdata::{all_singletons, car_sales_synthetic, model_scan};
use subfuse_core::simulation::{run_monte_carlo, run_ols_baseline, PipelineConfig, SimDesign};
use subfuse_core::{
    fit_heterogeneous_model_traced, fit_tuned, read_csv_dataset, standardize_columns,
    transform_response, ColumnSelector, CsvSchema, Dataset, PenaltyConfig, StoppingRule, Trace,
};

use crate::args::{
    DataArgs, FitArgs, LambdaArg, ScanArgs, SimulateArgs, SynthArgs, TuneArgs, DATA_KEYS, PATH_KEYS,
};
use crate::output;
use crate::settings::{usage, Settings};

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    let mut k: Vec<&str> = DATA_KEYS.iter().chain(PATH_KEYS.iter()).copied().collect();
    k.extend_from_slice(extra);
    k
}

fn parse_pair(raw: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(usage(format!("transform must be `a,b`, got `{raw}`"))),
        },
        _ => Err(usage(format!("transform must be `a,b`, got `{raw}`"))),
    }
}

/// Reads the data per the schema, then applies the optional response
/// transform and standardization.
pub fn load_dataset(args: &DataArgs, s: &Settings) -> Result<Dataset> {
    let data: PathBuf = s.require(args.data.clone(), "data")?;
    let schema_path: PathBuf = s.require(args.schema.clone(), "schema")?;
    let schema = CsvSchema::from_file(&schema_path)
        .with_context(|| format!("schema {}", schema_path.display()))?;
    let mut dataset =
        read_csv_dataset(&data, &schema).with_context(|| format!("reading {}", data.display()))?;
    if let Some(raw) = s.get(args.transform.clone(), "transform")? {
        let (a, b) = parse_pair(&raw)?;
        let y = transform_response(dataset.y(), a, b)?;
        dataset = dataset.with_response(y)?;
    }
    if s.switch(args.standardize, "standardize")? {
        dataset = standardize_columns(&dataset, &ColumnSelector::All)?.0;
    }
    Ok(dataset)
}

fn out_dir(flag: Option<PathBuf>, s: &Settings) -> Result<PathBuf> {
    s.get_or(flag, "out", PathBuf::from("."))
}

pub fn fit(args: FitArgs) -> Result<()> {
    let s = Settings::load(args.config.as_deref(), &keys(&["lambda", "out", "trace"]))?;
    let dataset = load_dataset(&args.data, &s)?;
    let lambda: LambdaArg = s.require(args.lambda, "lambda")?;
    let trace_path: Option<PathBuf> = s.get(args.trace.clone(), "trace")?;
    let mut tuning = args.path.tuning(&s, dataset.n(), dataset.d_z())?;
    let (model, chosen) = match lambda {
        LambdaArg::Fixed(value) => {
            let p = &tuning.path;
            let cfg = PenaltyConfig::new(value, p.gamma, p.eta)?;
            let stop = p
                .stop
                .unwrap_or_else(|| StoppingRule::default_for(dataset.n(), dataset.d_z()));
            let mut trace = Trace::default();
            let model = fit_heterogeneous_model_traced(&dataset, &cfg, &stop, Some(&mut trace))?;
            if let Some(path) = &trace_path {
                output::write_admm_trace(path, &[(value, &trace)])?;
            }
            (model, value)
        }
        LambdaArg::Auto => {
            tuning.path.trace = trace_path.is_some();
            let tuned = fit_tuned(&dataset, &tuning)?;
            if let Some(path) = &trace_path {
                write_path_traces(path, &tuned.path)?;
            }
            (tuned.model, tuned.lambda)
        }
    };
    output::write_model(&out_dir(args.out, &s)?, &dataset, &model)?;
    print!("{}", output::model_report(&dataset, &model, chosen));
    Ok(())
}

fn write_path_traces(path: &Path, lp: &subfuse_core::LambdaPath) -> Result<()> {
    let runs: Vec<(f64, &Trace)> = lp.values.iter().copied().zip(&lp.traces).collect();
    output::write_admm_trace(path, &runs)
}

pub fn tune(args: TuneArgs) -> Result<()> {
    let s = Settings::load(args.config.as_deref(), &keys(&["out", "trace"]))?;
    let dataset = load_dataset(&args.data, &s)?;
    let trace_path: Option<PathBuf> = s.get(args.trace.clone(), "trace")?;
    let mut tuning = args.path.tuning(&s, dataset.n(), dataset.d_z())?;
    tuning.path.trace = trace_path.is_some();
    let tuned = fit_tuned(&dataset, &tuning)?;
    let dir = out_dir(args.out, &s)?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    output::write_tuning_trace(&dir.join("tuning.csv"), &tuned.trace)?;
    output::write_path(&dir.join("path.csv"), &tuned.path)?;
    if let Some(path) = &trace_path {
        write_path_traces(path, &tuned.path)?;
    }
    print!("{}", output::path_report(&tuned.path, tuned.index));
    println!(
        "chosen lambda = {}  groups = {}",
        tuned.lambda, tuned.model.k_hat
    );
    for w in &tuned.path.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

/// Groups separated by `;`, components by `,`; a single comma list is one
/// group per value when `d_z` is 1.
pub fn parse_theta(raw: &str, d_z: usize) -> Result<Vec<Vec<f64>>> {
    let number = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("bad theta component `{t}`")))
    };
    let groups: Vec<Vec<f64>> = if d_z == 1 && !raw.contains(';') {
        raw.split(',')
            .map(|t| number(t).map(|v| vec![v]))
            .collect::<Result<_>>()?
    } else {
        raw.split(';')
            .map(|g| g.split(',').map(number).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?
    };
    if groups.iter().any(|g| g.len() != d_z) {
        return Err(usage(format!(
            "every theta group needs {d_z} components, got `{raw}`"
        )));
    }
    Ok(groups)
}

const SIM_KEYS: [&str; 12] = [
    "example",
    "n",
    "mu",
    "sigma",
    "theta",
    "rho",
    "mu-x",
    "mu-z",
    "sigma-squared",
    "reps",
    "ols",
    "out",
];

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut allowed = PATH_KEYS.to_vec();
    allowed.extend_from_slice(&SIM_KEYS);
    let s = Settings::load(args.config.as_deref(), &allowed)?;
    let example: u8 = s.get_or(args.example, "example", 1)?;
    let reps: usize = s.get_or(args.reps, "reps", 200)?;
    let design = match example {
        1 | 2 => {
            let n = s.get_or(args.n, "n", 100)?;
            let mu = s.get_or(args.mu, "mu", 2.0)?;
            let sigma = s.get_or(args.sigma, "sigma", 0.5)?;
            let d_z = example as usize;
            let default = if d_z == 1 { "1,-1" } else { "1,1;-1,-1" };
            let theta = parse_theta(
                &s.get_or(args.theta.clone(), "theta", default.to_string())?,
                d_z,
            )?;
            let mut design = SimDesign::example1(n, mu, sigma, 0.0, 0.0);
            if d_z == 2 {
                design = SimDesign::example2(n, mu, sigma, [0.0; 2], [0.0; 2]);
                design.sigma_squared_cov = s.switch(args.sigma_squared, "sigma-squared")?;
            }
            design.theta_groups = theta;
            design
        }
        3 => SimDesign::example3(
            s.get_or(args.n, "n", 200)?,
            s.get_or(args.rho, "rho", 0.0)?,
            s.get_or(args.mu_x, "mu-x", 0.0)?,
            s.get_or(args.mu_z, "mu-z", 0.0)?,
        ),
        other => return Err(usage(format!("example must be 1, 2 or 3, got {other}"))),
    };
    design.check().map_err(|e| usage(e.to_string()))?;
    let seed = s.get_or(args.path.seed, "seed", 0)?;
    let pipeline = PipelineConfig {
        tuning: args.path.tuning(&s, design.n, design.d_z())?,
        cluster: true,
    };
    let summary = run_monte_carlo(&design, reps, &pipeline, seed)?;
    let ols = if example == 3 || s.switch(args.ols, "ols")? {
        Some(run_ols_baseline(&design, reps, seed)?)
    } else {
        None
    };
    if let Some(dir) = s.get(args.out.clone(), "out")? {
        output::write_simulation(&dir, &summary, ols.as_ref())?;
    }
    print!("{}", output::simulation_report(&summary, ols.as_ref()));
    Ok(())
}

/// `;`-separated candidates of `,`-joined columns; `all-singletons` expands
/// to every covariate on its own.
pub fn parse_candidates(raw: &str, dataset: &Dataset) -> Result<Vec<Vec<String>>> {
    let mut cands: Vec<Vec<String>> = Vec::new();
    for part in raw.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all-singletons" {
            cands.extend(all_singletons(dataset));
        } else {
            cands.push(
                part.split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect(),
            );
        }
    }
    if cands.is_empty() {
        return Err(usage(format!("no candidates in `{raw}`")));
    }
    Ok(cands)
}

pub fn scan(args: ScanArgs) -> Result<()> {
    let s = Settings::load(args.config.as_deref(), &keys(&["candidates", "out"]))?;
    let dataset = load_dataset(&args.data, &s)?;
    let raw = s.get_or(
        args.candidates.clone(),
        "candidates",
        "all-singletons".to_string(),
    )?;
    let candidates = parse_candidates(&raw, &dataset)?;
    let tuning = args.path.tuning(&s, dataset.n(), 1)?;
    let report = model_scan(&dataset, &candidates, &tuning)?;
    if let Some(path) = s.get(args.out.clone(), "out")? {
        output::write_scan(&path, &report)?;
    }
    print!("{}", output::scan_report(&report));
    Ok(())
}

pub fn synth_car(args: SynthArgs) -> Result<()> {
    let table = car_sales_synthetic(args.seed);
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            write_csv_table(std::io::BufWriter::new(file), &table.names, &table.data)?;
        }
        None => write_csv_table(std::io::stdout().lock(), &table.names, &table.data)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_lists() {
        assert_eq!(parse_theta("1,-1", 1).unwrap(), vec![vec![1.0], vec![-1.0]]);
        assert_eq!(parse_theta("1;-1;3", 1).unwrap().len(), 3);
        assert_eq!(
            parse_theta("1,1;-1,-2", 2).unwrap(),
            vec![vec![1.0, 1.0], vec![-1.0, -2.0]]
        );
        assert!(parse_theta("1,1;-1", 2).is_err());
        assert!(parse_theta("a,b", 1).is_err());
    }

    #[test]
    fn transform_pairs() {
        assert_eq!(parse_pair("0.01, 1.01").unwrap(), (0.01, 1.01));
        assert!(parse_pair("0.01").is_err());
    }
}
